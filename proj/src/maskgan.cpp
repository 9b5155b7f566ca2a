#include "tsgan/maskgan.hpp"

#include <cmath>

namespace tsgan::maskgan {

using namespace ad;

namespace {

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

// [N,6,R,R] logits -> per-pixel softmax over the 6 channels.
NodePtr pixel_softmax(const NodePtr& logits) {
  int64_t n = logits->value.dim(0), r = logits->value.dim(2);
  NodePtr cols = nchw_to_cols(logits);                 // [6, N*R*R]
  NodePtr sm = transpose(softmax_rows(transpose(cols)));
  return cols_to_nchw(sm, n, r, logits->value.dim(3));
}

}  // namespace

void MaskGanConfig::validate() const {
  if (!is_pow2(start_resolution) || !is_pow2(target_resolution))
    throw ConfigError("maskgan: resolutions must be powers of two");
  if (start_resolution > target_resolution)
    throw ConfigError("maskgan: start_resolution > target_resolution");
  if (lambda_gp < 0 || lambda_drift < 0)
    throw ConfigError("maskgan: lambda values must be >= 0");
  if (latent_dim < 1 || style_dim < 1 || mapping_depth < 1 || batch_size < 1 ||
      steps_per_resolution < 1)
    throw ConfigError("maskgan: invalid dimensions");
}

int64_t MaskGanConfig::num_stages() const {
  int64_t n = 1, r = start_resolution;
  while (r < target_resolution) {
    r *= 2;
    ++n;
  }
  return n;
}

int64_t MaskGanConfig::channels_at_stage(int64_t stage) const {
  int64_t c = base_channels >> stage;
  return std::max(c, min_channels);
}

int64_t MaskGanConfig::stage_of_resolution(int64_t res) const {
  int64_t r = start_resolution;
  for (int64_t s = 0; s < num_stages(); ++s, r *= 2)
    if (r == res) return s;
  throw ConfigError("resolution " + std::to_string(res) + " not in progressive schedule");
}

Schedule progressive_schedule(int64_t step, const MaskGanConfig& cfg) {
  if (step < 0) throw ConfigError("progressive_schedule: negative step");
  int64_t stage = std::min(step / cfg.steps_per_resolution, cfg.num_stages() - 1);
  int64_t res = cfg.start_resolution << stage;
  double alpha = 1.0;
  if (stage > 0 && step / cfg.steps_per_resolution == stage) {
    int64_t t = step % cfg.steps_per_resolution;
    alpha = std::min(1.0, 2.0 * static_cast<double>(t) /
                              static_cast<double>(cfg.steps_per_resolution));
  }
  return {res, alpha};
}

// ---------------------------------------------------------------------------
// Generator

MaskGenerator::MaskGenerator(nn::ParamStore& ps, const MaskGanConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  int64_t hidden = cfg.style_dim;
  for (int64_t i = 0; i < cfg.mapping_depth; ++i) {
    int64_t in = i == 0 ? cfg.latent_dim : hidden;
    mapping_.emplace_back(ps, "gen.mapping." + std::to_string(i), in, hidden, rng);
  }
  int64_t c0 = cfg.channels_at_stage(0);
  Tensor base({c0 * 4 * 4});
  for (auto& v : base.data) v = rng.gaussian();
  const_base_ = ps.create("gen.const_base", std::move(base));
  for (int64_t s = 0; s < cfg.num_stages(); ++s) {
    int64_t cin = s == 0 ? c0 : cfg.channels_at_stage(s - 1);
    int64_t cout = cfg.channels_at_stage(s);
    std::string name = "gen.block" + std::to_string(s);
    block_conv_.emplace_back(ps, name + ".conv", cin, cout, 3, 1, 1, rng);
    block_norm_.emplace_back(ps, name + ".norm", cout);
    style_affine_.emplace_back(ps, name + ".style", cfg.style_dim, cout, rng);
    to_scores_.emplace_back(ps, name + ".to_scores", cout, kNumClasses, 1, 1, 0, rng);
  }
}

NodePtr MaskGenerator::map_latent(const NodePtr& z) const {
  if (z->value.ndim() != 2 || z->value.dim(0) != cfg_.latent_dim)
    throw ShapeError("map_latent: expected [latent_dim, N]");
  if (!z->value.all_finite()) throw NumericError("map_latent: non-finite latent");
  NodePtr h = z;
  for (size_t i = 0; i < mapping_.size(); ++i) {
    h = mapping_[i](h);
    if (i + 1 < mapping_.size()) h = leaky_relu(h, 0.2);
  }
  return h;
}

NodePtr MaskGenerator::synthesize(const NodePtr& w, int64_t resolution, double alpha) const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("synthesize: alpha outside [0,1]");
  int64_t top = cfg_.stage_of_resolution(resolution);
  int64_t n = w->value.dim(1);

  NodePtr base1 = reshape(const_base_, {1, cfg_.channels_at_stage(0), 4, 4});
  NodePtr x = base1;
  if (n > 1) x = concat_dim0(std::vector<NodePtr>(static_cast<size_t>(n), base1));

  NodePtr prev_scores;  // head output of the previous stage, for fade-in
  for (int64_t s = 0; s <= top; ++s) {
    if (s > 0) {
      if (alpha < 1.0 && s == top) prev_scores = to_scores_[s - 1](x);
      x = upsample_nearest2(x);
    }
    x = block_conv_[s](x);
    x = batch_norm(x, block_norm_[s].gamma, block_norm_[s].beta, 1e-5);
    NodePtr style_bias = transpose(style_affine_[s](w));  // [N, C]
    x = add(x, spatial_bcast(style_bias, x->value.dim(2), x->value.dim(3)));
    x = leaky_relu(x, 0.2);
  }

  NodePtr logits = to_scores_[top](x);
  if (prev_scores) {
    NodePtr lo = upsample_nearest2(prev_scores);
    logits = add(smul(logits, alpha), smul(lo, 1.0 - alpha));
  }
  return pixel_softmax(logits);
}

// ---------------------------------------------------------------------------
// Critic

MaskCritic::MaskCritic(nn::ParamStore& ps, const MaskGanConfig& cfg, Rng& rng) : cfg_(cfg) {
  for (int64_t s = 0; s < cfg.num_stages(); ++s) {
    std::string name = "critic.stage" + std::to_string(s);
    from_scores_.emplace_back(ps, name + ".from_scores", kNumClasses,
                              cfg.channels_at_stage(s), 1, 1, 0, rng);
    if (s > 0)
      block_conv_.emplace_back(ps, name + ".conv", cfg.channels_at_stage(s),
                               cfg.channels_at_stage(s - 1), 3, 1, 1, rng);
  }
  int64_t c0 = cfg.channels_at_stage(0);
  final_conv_ = nn::Conv2d(ps, "critic.final_conv", c0, c0, 3, 1, 1, rng);
  head_ = nn::Linear(ps, "critic.head", c0 * 4 * 4, 1, rng);
}

NodePtr MaskCritic::forward(const NodePtr& x, int64_t resolution, double alpha) const {
  if (x->value.ndim() != 4 || x->value.dim(1) != kNumClasses ||
      x->value.dim(2) != resolution || x->value.dim(3) != resolution)
    throw ShapeError("critic: batch shape " + x->value.shape_str() +
                     " does not match resolution " + std::to_string(resolution));
  int64_t top = cfg_.stage_of_resolution(resolution);
  int64_t n = x->value.dim(0);

  NodePtr h = leaky_relu(from_scores_[top](x), 0.2);
  for (int64_t s = top; s >= 1; --s) {
    h = leaky_relu(block_conv_[s - 1](h), 0.2);
    h = avg_pool2d(h, 2, 2);
    if (s == top && alpha < 1.0) {
      // blend with the previous stage's input path during fade-in
      NodePtr lo = leaky_relu(from_scores_[s - 1](avg_pool2d(x, 2, 2)), 0.2);
      h = add(smul(h, alpha), smul(lo, 1.0 - alpha));
    }
  }
  h = leaky_relu(final_conv_(h), 0.2);
  NodePtr flat = transpose(reshape(h, {n, h->value.numel() / n}));  // [C*16, N]
  return head_(flat);                                               // [1, N]
}

// ---------------------------------------------------------------------------
// Losses

NodePtr gradient_penalty(const CriticFn& critic, const Tensor& x_real, const Tensor& x_fake,
                         Rng& rng) {
  if (!x_real.same_shape(x_fake))
    throw ShapeError("gradient_penalty: real/fake batch shapes differ");
  int64_t n = x_real.dim(0);
  int64_t per = x_real.numel() / n;

  Tensor interp(x_real.shape);
  for (int64_t i = 0; i < n; ++i) {
    double eps = rng.uniform();
    for (int64_t k = 0; k < per; ++k) {
      int64_t idx = i * per + k;
      interp[idx] = eps * x_real[idx] + (1.0 - eps) * x_fake[idx];
    }
  }
  NodePtr xhat = leaf(std::move(interp));
  NodePtr scores = critic(xhat);  // [1, N]
  NodePtr grad = gradients(sum_all(scores), {xhat})[0];
  NodePtr norms = sqrt_(row_sum(square(reshape(grad, {n, per}))));  // [N]
  return mean_all(square(sadd(norms, -1.0)));
}

CriticLossParts critic_loss(const CriticFn& critic, const Tensor& x_real,
                            const Tensor& x_fake, const MaskGanConfig& cfg, Rng& rng) {
  NodePtr sr = critic(constant(x_real));
  NodePtr sf = critic(constant(x_fake));
  NodePtr wass = sub(mean_all(sf), mean_all(sr));
  NodePtr gp = gradient_penalty(critic, x_real, x_fake, rng);
  NodePtr drift = smul(add(mean_all(square(sr)), mean_all(square(sf))), 0.5);

  CriticLossParts parts;
  parts.wasserstein = wass->value[0];
  parts.penalty = gp->value[0];
  parts.drift = drift->value[0];
  parts.total = add(add(wass, smul(gp, cfg.lambda_gp)), smul(drift, cfg.lambda_drift));
  double v = parts.total->value[0];
  if (!std::isfinite(v)) {
    std::string term = !std::isfinite(parts.wasserstein) ? "wasserstein"
                       : !std::isfinite(parts.penalty)   ? "gradient_penalty"
                                                         : "drift";
    throw NumericError("critic_loss: non-finite " + term + " term");
  }
  return parts;
}

NodePtr generator_loss_mask(const NodePtr& fake_scores) {
  NodePtr loss = neg(mean_all(fake_scores));
  if (!std::isfinite(loss->value[0])) throw NumericError("generator_loss_mask: non-finite");
  return loss;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const MaskGanConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      opt_critic_(cfg.lr, cfg.beta1, cfg.beta2),
      opt_gen_(cfg.lr, cfg.beta1, cfg.beta2),
      rng_(seed) {
  cfg_.validate();
  Rng init_rng = rng_.fork(0xC0FFEE);
  gen_ = std::make_unique<MaskGenerator>(ps_, cfg_, init_rng);
  critic_ = std::make_unique<MaskCritic>(ps_, cfg_, init_rng);
}

Tensor Trainer::sample_latent_batch(int64_t n) {
  Tensor z({cfg_.latent_dim, n});
  for (auto& v : z.data) v = rng_.gaussian();
  return z;
}

ClassScoreVolume Trainer::sample_scores(Rng& rng, int64_t resolution, double alpha) const {
  Tensor z({cfg_.latent_dim, 1});
  for (auto& v : z.data) v = rng.gaussian();
  NodePtr scores = gen_->forward(constant(std::move(z)), resolution, alpha);
  return ClassScoreVolume{
      Tensor({kNumClasses, resolution, resolution}, std::move(scores->value.data))};
}

StepLosses Trainer::train_step(const Tensor& real_batch) {
  Schedule sch = progressive_schedule(step_, cfg_);
  if (real_batch.ndim() != 4 || real_batch.dim(1) != kNumClasses ||
      real_batch.dim(2) != sch.resolution || real_batch.dim(3) != sch.resolution)
    throw ShapeError("train_step: real batch " + real_batch.shape_str() +
                     " does not match scheduled resolution " +
                     std::to_string(sch.resolution));
  int64_t n = real_batch.dim(0);
  StepLosses out;

  // Critic update (generator output detached).
  {
    NodePtr fake = gen_->forward(constant(sample_latent_batch(n)), sch.resolution, sch.alpha);
    auto critic_fn = [&](const NodePtr& x) {
      return critic_->forward(x, sch.resolution, sch.alpha);
    };
    CriticLossParts parts =
        critic_loss(critic_fn, real_batch, fake->value, cfg_, rng_);
    out.critic_loss = parts.total->value[0];
    auto names = ps_.names_with_prefix("critic.");
    auto params = ps_.with_prefix("critic.");
    auto grads = gradients(parts.total, params);
    for (const auto& g : grads)
      if (!g->value.all_finite()) throw NumericError("train_step: non-finite critic grad");
    opt_critic_.step(names, params, grads);
  }

  // Generator update.
  {
    NodePtr fake = gen_->forward(constant(sample_latent_batch(n)), sch.resolution, sch.alpha);
    NodePtr scores = critic_->forward(fake, sch.resolution, sch.alpha);
    NodePtr loss = generator_loss_mask(scores);
    out.gen_loss = loss->value[0];
    auto names = ps_.names_with_prefix("gen.");
    auto params = ps_.with_prefix("gen.");
    auto grads = gradients(loss, params);
    for (const auto& g : grads)
      if (!g->value.all_finite()) throw NumericError("train_step: non-finite generator grad");
    opt_gen_.step(names, params, grads);
  }

  ++step_;
  return out;
}

}  // namespace tsgan::maskgan
