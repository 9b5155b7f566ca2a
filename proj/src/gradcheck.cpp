#include "tsgan/gradcheck.hpp"

#include "tsgan/attention.hpp"
#include "tsgan/maskgan.hpp"
#include "tsgan/translator.hpp"

namespace tsgan {

using ad::NodePtr;

namespace {

Tensor randn(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = scale * rng.gaussian();
  return t;
}

void add_entry(GradCheckReport& report, const std::string& target, double err,
               double tolerance) {
  GradCheckEntry e{target, err, err < tolerance};
  report.all_pass = report.all_pass && e.pass;
  report.entries.push_back(std::move(e));
}

}  // namespace

GradCheckReport run_gradcheck(uint64_t seed, double tolerance) {
  GradCheckReport report;
  Rng rng(seed);

  // soft_pool
  {
    NodePtr x = ad::leaf(randn(rng, {1, 2, 9, 9}, 0.5));
    auto build = [&] { return ad::mean_all(attn::soft_pool(x, 3, 2)); };
    add_entry(report, "soft_pool", fd_max_rel_err(build, {x}), tolerance);
  }

  // lia_forward, input and all conv parameters
  {
    nn::ParamStore ps;
    Rng init = rng.fork(1);
    attn::LiaParams lia = attn::LiaParams::create(ps, "lia", 2, init);
    NodePtr x = ad::leaf(randn(rng, {1, 2, 14, 14}, 0.5));
    auto build = [&] { return ad::mean_all(attn::lia_forward(x, lia)); };
    std::vector<NodePtr> leaves = ps.all();
    leaves.push_back(x);
    add_entry(report, "lia_forward", fd_max_rel_err(build, leaves), tolerance);
  }

  // dwmh_forward with a nonzero residual scale
  {
    nn::ParamStore ps;
    Rng init = rng.fork(2);
    attn::DwmhParams dwmh = attn::DwmhParams::create(ps, "dwmh", 4, 2, 3, init);
    dwmh.gamma->value[0] = 0.4;
    NodePtr x = ad::leaf(randn(rng, {1, 4, 7, 7}, 0.5));
    auto build = [&] { return ad::mean_all(attn::dwmh_forward(x, dwmh)); };
    std::vector<NodePtr> leaves = ps.all();
    leaves.push_back(x);
    add_entry(report, "dwmh_forward", fd_max_rel_err(build, leaves), tolerance);
  }

  // mask critic loss w.r.t. critic parameters (penalty and drift included)
  {
    maskgan::MaskGanConfig cfg;
    cfg.latent_dim = 4;
    cfg.style_dim = 4;
    cfg.mapping_depth = 2;
    cfg.target_resolution = 4;
    cfg.base_channels = 4;
    cfg.min_channels = 2;
    maskgan::Trainer tr(cfg, seed ^ 0x11);
    Tensor x_real = randn(rng, {2, kNumClasses, 4, 4}, 0.3);
    Tensor x_fake = randn(rng, {2, kNumClasses, 4, 4}, 0.3);
    std::string rng_state = rng.save_state();
    auto build = [&] {
      Rng gp_rng;  // fixed interpolation draws so the objective is deterministic
      gp_rng.load_state(rng_state);
      auto critic_fn = [&](const NodePtr& x) { return tr.critic().forward(x, 4, 1.0); };
      return maskgan::critic_loss(critic_fn, x_real, x_fake, cfg, gp_rng).total;
    };
    auto params = tr.params().with_prefix("critic.");
    add_entry(report, "mask_critic_loss", fd_max_rel_err(build, params), tolerance);
  }

  // mask generator loss w.r.t. generator parameters
  {
    maskgan::MaskGanConfig cfg;
    cfg.latent_dim = 4;
    cfg.style_dim = 4;
    cfg.mapping_depth = 2;
    cfg.target_resolution = 4;
    cfg.base_channels = 4;
    cfg.min_channels = 2;
    maskgan::Trainer tr(cfg, seed ^ 0x22);
    Tensor z = randn(rng, {4, 2});
    auto build = [&] {
      NodePtr fake = tr.generator().forward(ad::constant(z), 4, 1.0);
      return maskgan::generator_loss_mask(tr.critic().forward(fake, 4, 1.0));
    };
    auto params = tr.params().with_prefix("gen.");
    add_entry(report, "mask_generator_loss", fd_max_rel_err(build, params), tolerance);
  }

  // translator losses on a small generator/critic pair
  {
    translator::TranslatorConfig cfg;
    cfg.image_size = 8;
    cfg.base_width = 4;
    cfg.max_width = 8;
    cfg.dwmh_heads = 2;
    cfg.dwmh_window = 2;
    translator::Trainer tr(cfg, seed ^ 0x33);
    tr.generator().dwmh().gamma->value[0] = 0.3;

    Tensor cond({1, kNumClasses, 8, 8}, 0.0);
    Rng crng = rng.fork(9);
    for (int64_t p = 0; p < 64; ++p)
      cond[crng.uniform_int(0, kNumClasses - 1) * 64 + p] = 1.0;
    Tensor target = randn(rng, {1, 1, 8, 8}, 0.5);
    NodePtr yhat = ad::leaf(randn(rng, {1, 1, 8, 8}, 0.5));

    auto build_l1 = [&] { return translator::l1_loss(ad::constant(target), yhat); };
    add_entry(report, "translator_l1_loss", fd_max_rel_err(build_l1, {yhat}), tolerance);

    auto build_perc = [&] {
      return translator::perceptual_loss(ad::constant(target), yhat, tr.feature_net());
    };
    add_entry(report, "translator_perceptual_loss", fd_max_rel_err(build_perc, {yhat}),
              tolerance);

    auto build_adv = [&] {
      return translator::adversarial_loss(tr.critic(), ad::constant(cond),
                                          ad::constant(target), yhat)
          .gen_adv_loss;
    };
    add_entry(report, "translator_adversarial_loss", fd_max_rel_err(build_adv, {yhat}),
              tolerance);

    auto build_total = [&] {
      auto adv = translator::adversarial_loss(tr.critic(), ad::constant(cond),
                                              ad::constant(target), yhat);
      NodePtr l1 = translator::l1_loss(ad::constant(target), yhat);
      NodePtr perc = translator::perceptual_loss(ad::constant(target), yhat,
                                                 tr.feature_net());
      return translator::total_generator_loss(
          adv.gen_adv_loss, l1, perc,
          translator::LossWeights{cfg.lambda_l1, cfg.lambda_perceptual});
    };
    add_entry(report, "translator_total_loss", fd_max_rel_err(build_total, {yhat}),
              tolerance);

    auto build_gen = [&] {
      NodePtr fake = tr.generator().forward(ad::constant(cond));
      return translator::l1_loss(ad::constant(target), fake);
    };
    auto gen_params = tr.params().with_prefix("gen.");
    add_entry(report, "translator_generator_params", fd_max_rel_err(build_gen, gen_params),
              tolerance);
  }

  return report;
}

}  // namespace tsgan
