#include "tsgan/translator.hpp"

#include <cmath>

namespace tsgan::translator {

using namespace ad;

namespace {

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

NodePtr softplus(const NodePtr& x) { return log_(sadd(exp_(x), 1.0)); }

int64_t width_at(const TranslatorConfig& cfg, int64_t level) {
  int64_t w = cfg.base_width << level;
  return std::min(w, cfg.max_width);
}

}  // namespace

int64_t TranslatorConfig::depth() const {
  int64_t d = 0, r = image_size;
  while (r > 4) {
    r /= 2;
    ++d;
  }
  return std::max<int64_t>(d, 1);
}

void TranslatorConfig::validate() const {
  if (!is_pow2(image_size) || image_size < 8)
    throw ConfigError("translator: image_size must be a power of two >= 8");
  if (lambda_l1 < 0 || lambda_perceptual < 0)
    throw ConfigError("translator: loss weights must be >= 0");
  if (epochs < 1 || decay_start_epoch < 0 || decay_start_epoch > epochs)
    throw ConfigError("translator: bad epoch schedule");
}

double lr_schedule(int64_t epoch, const TranslatorConfig& cfg) {
  if (epoch < 0) throw ConfigError("lr_schedule: negative epoch");
  if (epoch < cfg.decay_start_epoch) return cfg.lr;
  if (epoch >= cfg.epochs) return 0.0;
  double span = static_cast<double>(cfg.epochs - cfg.decay_start_epoch);
  return cfg.lr * (1.0 - static_cast<double>(epoch - cfg.decay_start_epoch) / span);
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(nn::ParamStore& ps, const TranslatorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int64_t d = cfg.depth();
  for (int64_t i = 0; i < d; ++i) {
    int64_t cin = i == 0 ? kNumClasses : width_at(cfg, i - 1);
    int64_t cout = width_at(cfg, i);
    enc_conv_.emplace_back(ps, "gen.enc" + std::to_string(i), cin, cout, 3, 2, 1, rng);
    enc_norm_.emplace_back(ps, "gen.enc" + std::to_string(i) + ".norm", cout);
    if (cfg.use_lia)
      lia_.push_back(attn::LiaParams::create(ps, "gen.lia" + std::to_string(i), cout, rng));
  }
  int64_t bottleneck = width_at(cfg, d - 1);
  if (cfg.use_dwmh) {
    int64_t heads = cfg.dwmh_heads;
    while (heads > 1 && bottleneck % heads != 0) heads /= 2;
    dwmh_ = std::make_unique<attn::DwmhParams>(
        attn::DwmhParams::create(ps, "gen.dwmh", bottleneck, heads, cfg.dwmh_window, rng));
  }
  for (int64_t i = 0; i < d; ++i) {
    int64_t level = d - 1 - i;  // decoder level i upsamples to resolution of enc level-1
    int64_t cin = (i == 0 ? bottleneck : width_at(cfg, level + 1));
    // after upsample, concatenated with the (LIA-gated) skip from enc level-1
    int64_t skip = level >= 1 ? width_at(cfg, level - 1) : kNumClasses;
    dec_conv_.emplace_back(ps, "gen.dec" + std::to_string(i), cin + skip, width_at(cfg, level),
                           3, 1, 1, rng);
    dec_norm_.emplace_back(ps, "gen.dec" + std::to_string(i) + ".norm", width_at(cfg, level));
  }
  out_conv_ = nn::Conv2d(ps, "gen.out", width_at(cfg, 0), 1, 3, 1, 1, rng);
}

NodePtr Generator::run(const NodePtr& cond, bool with_attention) const {
  if (cond->value.ndim() != 4 || cond->value.dim(1) != kNumClasses)
    throw ShapeError("generator: expected [N,6,H,W] condition");
  int64_t h = cond->value.dim(2), w = cond->value.dim(3);
  if (!is_pow2(h) || !is_pow2(w) || h < (1LL << cfg_.depth()) || w < (1LL << cfg_.depth()))
    throw ShapeError("generator: spatial dims must be powers of two >= 2^depth");

  int64_t d = cfg_.depth();
  std::vector<NodePtr> skips;  // pre-downsample features per level
  NodePtr x = cond;
  for (int64_t i = 0; i < d; ++i) {
    skips.push_back(x);
    x = enc_conv_[i](x);
    if (i > 0) x = instance_norm(x, enc_norm_[i].gamma, enc_norm_[i].beta, 1e-5);
    x = leaky_relu(x, 0.2);
  }
  if (dwmh_ && with_attention) x = attn::dwmh_forward(x, *dwmh_);

  for (int64_t i = 0; i < d; ++i) {
    int64_t level = d - 1 - i;
    x = upsample_nearest2(x);
    NodePtr skip = skips[static_cast<size_t>(level)];
    if (cfg_.use_lia && with_attention && level >= 1)
      skip = attn::lia_forward(skip, lia_[static_cast<size_t>(level - 1)]);
    x = concat_channels({x, skip});
    x = dec_conv_[i](x);
    x = instance_norm(x, dec_norm_[i].gamma, dec_norm_[i].beta, 1e-5);
    x = leaky_relu(x, 0.2);
  }
  return tanh_(out_conv_(x));
}

NodePtr Generator::forward(const NodePtr& cond) const { return run(cond, true); }
NodePtr Generator::forward_plain(const NodePtr& cond) const { return run(cond, false); }

// ---------------------------------------------------------------------------
// Patch critic

PatchCritic::PatchCritic(nn::ParamStore& ps, const TranslatorConfig& cfg, Rng& rng) {
  int64_t w0 = cfg.base_width;
  convs_.emplace_back(ps, "critic.c0", kNumClasses + 1, w0, 4, 2, 1, rng);
  convs_.emplace_back(ps, "critic.c1", w0, w0 * 2, 4, 2, 1, rng);
  convs_.emplace_back(ps, "critic.c2", w0 * 2, 1, 4, 1, 1, rng);
}

NodePtr PatchCritic::forward(const NodePtr& cond, const NodePtr& image) const {
  if (cond->value.dim(2) != image->value.dim(2) ||
      cond->value.dim(3) != image->value.dim(3) || cond->value.dim(0) != image->value.dim(0))
    throw ShapeError("patch critic: condition/image shape mismatch");
  NodePtr h = concat_channels({cond, image});
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i + 1 < convs_.size()) h = leaky_relu(h, 0.2);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Losses

NodePtr l1_loss(const NodePtr& y, const NodePtr& yhat) {
  require_same_shape(y->value, yhat->value, "l1_loss");
  return mean_all(abs_(sub(y, yhat)));
}

NodePtr perceptual_loss(const NodePtr& y, const NodePtr& yhat, const FeatureNetwork& phi) {
  require_same_shape(y->value, yhat->value, "perceptual_loss");
  if (phi.stage_count() == 0 && !phi.is_identity())
    throw ConfigError("perceptual_loss: empty feature stage list");
  auto fy = phi.forward(y);
  auto fh = phi.forward(yhat);
  NodePtr total;
  for (size_t l = 0; l < fy.size(); ++l) {
    NodePtr term = mean_all(abs_(sub(fy[l], fh[l])));
    total = total ? add(total, term) : term;
  }
  return total;
}

AdvLosses adversarial_loss(const PatchCritic& critic, const NodePtr& cond,
                           const NodePtr& y_real, const NodePtr& y_fake) {
  NodePtr logit_real = clamp(critic.forward(cond, y_real), -15.0, 15.0);
  NodePtr logit_fake = clamp(critic.forward(cond, y_fake), -15.0, 15.0);
  // BCE with logits: target 1 -> softplus(-z), target 0 -> softplus(z)
  NodePtr closs = add(mean_all(softplus(neg(logit_real))), mean_all(softplus(logit_fake)));
  NodePtr gloss = mean_all(softplus(neg(logit_fake)));
  if (!std::isfinite(closs->value[0]) || !std::isfinite(gloss->value[0]))
    throw NumericError("adversarial_loss: non-finite");
  return {closs, gloss};
}

double total_generator_loss(const LossParts& parts, const LossWeights& w) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError(std::string("total_generator_loss: non-finite ") + name + " part");
  };
  check(parts.adv, "adversarial");
  check(parts.l1, "l1");
  check(parts.perceptual, "perceptual");
  return parts.adv + w.lambda_l1 * parts.l1 + w.lambda_perceptual * parts.perceptual;
}

NodePtr total_generator_loss(const NodePtr& adv, const NodePtr& l1, const NodePtr& perc,
                             const LossWeights& w) {
  LossParts parts{adv->value[0], l1->value[0], perc->value[0]};
  total_generator_loss(parts, w);  // reuse the finiteness checks
  return add(adv, add(smul(l1, w.lambda_l1), smul(perc, w.lambda_perceptual)));
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const TranslatorConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      phi_(FeatureNetwork::seeded(cfg.feature_seed)),
      opt_critic_(cfg.lr, cfg.beta1, cfg.beta2),
      opt_gen_(cfg.lr, cfg.beta1, cfg.beta2) {
  cfg_.validate();
  Rng rng(seed);
  gen_ = std::make_unique<Generator>(ps_, cfg_, rng);
  critic_ = std::make_unique<PatchCritic>(ps_, cfg_, rng);
}

StepLosses Trainer::train_step(const Tensor& cond, const Tensor& target) {
  StepLosses out;
  LossWeights weights{cfg_.lambda_l1, cfg_.lambda_perceptual};

  // Critic update, generator detached.
  {
    NodePtr fake = gen_->forward(constant(cond));
    AdvLosses adv = adversarial_loss(*critic_, constant(cond), constant(target),
                                     constant(fake->value));
    out.critic = adv.critic_loss->value[0];
    auto names = ps_.names_with_prefix("critic.");
    auto params = ps_.with_prefix("critic.");
    auto grads = gradients(adv.critic_loss, params);
    opt_critic_.step(names, params, grads);
  }

  // Generator update.
  {
    NodePtr condn = constant(cond);
    NodePtr targetn = constant(target);
    NodePtr fake = gen_->forward(condn);
    AdvLosses adv = adversarial_loss(*critic_, condn, targetn, fake);
    NodePtr l1 = l1_loss(targetn, fake);
    NodePtr perc = perceptual_loss(targetn, fake, phi_);
    NodePtr total = total_generator_loss(adv.gen_adv_loss, l1, perc, weights);
    out.adv = adv.gen_adv_loss->value[0];
    out.l1 = l1->value[0];
    out.perceptual = perc->value[0];
    out.total = total->value[0];
    if (!std::isfinite(out.total)) throw NumericError("train_step: non-finite generator loss");
    auto names = ps_.names_with_prefix("gen.");
    auto params = ps_.with_prefix("gen.");
    auto grads = gradients(total, params);
    opt_gen_.step(names, params, grads);
  }
  return out;
}

Tensor Trainer::translate(const Tensor& cond) const {
  return gen_->forward(constant(cond))->value;
}

}  // namespace tsgan::translator
