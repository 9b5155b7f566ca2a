#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tsgan/translator.hpp"

using namespace tsgan;
using namespace tsgan::translator;
using ad::NodePtr;

namespace {

TranslatorConfig small_config() {
  TranslatorConfig cfg;
  cfg.image_size = 16;
  cfg.base_width = 8;
  cfg.max_width = 16;
  cfg.dwmh_heads = 2;
  cfg.dwmh_window = 2;
  return cfg;
}

Tensor random_onehot(Rng& rng, int64_t n, int64_t res) {
  Tensor t({n, kNumClasses, res, res}, 0.0);
  for (int64_t img = 0; img < n; ++img)
    for (int64_t p = 0; p < res * res; ++p) {
      int64_t c = rng.uniform_int(0, kNumClasses - 1);
      t[img * kNumClasses * res * res + c * res * res + p] = 1.0;
    }
  return t;
}

void zero_params(nn::ParamStore& ps, const std::string& prefix) {
  for (auto& p : ps.with_prefix(prefix))
    for (auto& v : p->value.data) v = 0.0;
}

void saturate_attention(Generator& gen) {
  for (auto& lia : gen.lia()) {
    lia.gate_gain->value[0] = 0.0;
    lia.gate_bias->value[0] = 40.0;
    for (auto& v : lia.restore.weight->value.data) v = 0.0;
    lia.restore.bias->value[0] = 40.0;
  }
  gen.dwmh().gamma->value[0] = 0.0;
}

}  // namespace

TEST_CASE("lr schedule hand values") {
  TranslatorConfig cfg;  // lr 0.0002, decay at 100, 200 epochs
  CHECK(lr_schedule(0, cfg) == doctest::Approx(0.0002));
  CHECK(lr_schedule(99, cfg) == doctest::Approx(0.0002));
  CHECK(lr_schedule(100, cfg) == doctest::Approx(0.0002));
  CHECK(lr_schedule(150, cfg) == doctest::Approx(0.0001));
  CHECK(lr_schedule(200, cfg) == doctest::Approx(0.0));
  CHECK_THROWS_AS(lr_schedule(-1, cfg), ConfigError);
}

TEST_CASE("l1 loss hand values") {
  Tensor y({1, 1, 2, 2}, 0.5);
  CHECK(l1_loss(ad::constant(y), ad::constant(y))->value[0] == 0.0);

  Tensor ones({1, 1, 2, 2}, 1.0), zeros({1, 1, 2, 2}, 0.0);
  CHECK(l1_loss(ad::constant(ones), ad::constant(zeros))->value[0] == doctest::Approx(1.0));

  Tensor a({2}, std::vector<double>{0.0, 2.0});
  Tensor b({2}, std::vector<double>{1.0, 0.0});
  CHECK(l1_loss(ad::constant(a), ad::constant(b))->value[0] == doctest::Approx(1.5));

  Tensor c({3});
  CHECK_THROWS_AS(l1_loss(ad::constant(a), ad::constant(c)), ShapeError);
}

TEST_CASE("perceptual loss: zero at equality, identity stage reduces to l1") {
  FeatureNetwork phi = FeatureNetwork::seeded(99);
  Rng rng(4);
  Tensor y({1, 1, 8, 8});
  for (auto& v : y.data) v = rng.gaussian();
  CHECK(perceptual_loss(ad::constant(y), ad::constant(y), phi)->value[0] == 0.0);

  Tensor yhat({1, 1, 8, 8});
  for (auto& v : yhat.data) v = rng.gaussian();
  FeatureNetwork id = FeatureNetwork::identity();
  double perc = perceptual_loss(ad::constant(y), ad::constant(yhat), id)->value[0];
  double l1 = l1_loss(ad::constant(y), ad::constant(yhat))->value[0];
  CHECK(perc == l1);
}

TEST_CASE("perceptual loss gradient matches finite differences") {
  FeatureNetwork phi = FeatureNetwork::seeded(7);
  Rng rng(12);
  Tensor y({1, 1, 8, 8}), yhat0({1, 1, 8, 8});
  for (auto& v : y.data) v = rng.gaussian();
  for (auto& v : yhat0.data) v = rng.gaussian();

  NodePtr yhat = ad::leaf(yhat0);
  NodePtr loss = perceptual_loss(ad::constant(y), yhat, phi);
  NodePtr grad = ad::gradients(loss, {yhat})[0];

  double h = 1e-5;
  Rng pick(1);
  for (int trial = 0; trial < 6; ++trial) {
    int64_t idx = pick.uniform_int(0, yhat0.numel() - 1);
    Tensor up = yhat0, dn = yhat0;
    up[idx] += h;
    dn[idx] -= h;
    double fd = (perceptual_loss(ad::constant(y), ad::constant(up), phi)->value[0] -
                 perceptual_loss(ad::constant(y), ad::constant(dn), phi)->value[0]) /
                (2 * h);
    double a = grad->value[idx];
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("adversarial loss: zero-logit critic gives ln 2 per term") {
  TranslatorConfig cfg = small_config();
  nn::ParamStore ps;
  Rng rng(5);
  PatchCritic critic(ps, cfg, rng);
  zero_params(ps, "critic.");

  Rng drng(6);
  Tensor cond = random_onehot(drng, 1, 16);
  Tensor y({1, 1, 16, 16});
  for (auto& v : y.data) v = drng.gaussian();
  Tensor yhat({1, 1, 16, 16});
  for (auto& v : yhat.data) v = drng.gaussian();

  AdvLosses adv = adversarial_loss(critic, ad::constant(cond), ad::constant(y),
                                   ad::constant(yhat));
  double ln2 = std::log(2.0);
  CHECK(adv.critic_loss->value[0] == doctest::Approx(2 * ln2).epsilon(1e-12));
  CHECK(adv.gen_adv_loss->value[0] == doctest::Approx(ln2).epsilon(1e-12));
}

TEST_CASE("adversarial loss: saturated critic stays finite via the clamp") {
  TranslatorConfig cfg = small_config();
  nn::ParamStore ps;
  Rng rng(5);
  PatchCritic critic(ps, cfg, rng);
  zero_params(ps, "critic.");
  // push the output conv bias far positive; the +-15 clamp must keep BCE finite
  ps.get("critic.c2.bias")->value[0] = 1e6;

  Rng drng(6);
  Tensor cond = random_onehot(drng, 1, 16);
  Tensor y({1, 1, 16, 16}, 0.1), yhat({1, 1, 16, 16}, -0.1);
  AdvLosses adv = adversarial_loss(critic, ad::constant(cond), ad::constant(y),
                                   ad::constant(yhat));
  CHECK(std::isfinite(adv.critic_loss->value[0]));
  CHECK(std::isfinite(adv.gen_adv_loss->value[0]));
  // logit 15 on both: real term ~ softplus(-15), fake term ~ softplus(15)
  CHECK(adv.gen_adv_loss->value[0] == doctest::Approx(std::log1p(std::exp(-15.0))).epsilon(1e-9));
}

TEST_CASE("generator adversarial gradient matches finite differences") {
  TranslatorConfig cfg = small_config();
  nn::ParamStore ps;
  Rng rng(8);
  PatchCritic critic(ps, cfg, rng);

  Rng drng(9);
  Tensor cond = random_onehot(drng, 1, 16);
  Tensor y({1, 1, 16, 16}), yhat0({1, 1, 16, 16});
  for (auto& v : y.data) v = 0.3 * drng.gaussian();
  for (auto& v : yhat0.data) v = 0.3 * drng.gaussian();

  NodePtr yhat = ad::leaf(yhat0);
  AdvLosses adv = adversarial_loss(critic, ad::constant(cond), ad::constant(y), yhat);
  NodePtr grad = ad::gradients(adv.gen_adv_loss, {yhat})[0];

  auto eval = [&](const Tensor& t) {
    return adversarial_loss(critic, ad::constant(cond), ad::constant(y), ad::constant(t))
        .gen_adv_loss->value[0];
  };
  double h = 1e-5;
  Rng pick(2);
  for (int trial = 0; trial < 6; ++trial) {
    int64_t idx = pick.uniform_int(0, yhat0.numel() - 1);
    Tensor up = yhat0, dn = yhat0;
    up[idx] += h;
    dn[idx] -= h;
    double fd = (eval(up) - eval(dn)) / (2 * h);
    double a = grad->value[idx];
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("total generator loss arithmetic") {
  LossWeights w;  // 200, 10
  CHECK(total_generator_loss(LossParts{1.0, 0.0, 0.0}, w) == 1.0);
  CHECK(total_generator_loss(LossParts{0.5, 0.01, 0.02}, w) == doctest::Approx(2.7).epsilon(1e-15));
  CHECK(total_generator_loss(LossParts{0.8, 5.0, 7.0}, LossWeights{0.0, 0.0}) == 0.8);

  // linear in each part with the configured coefficient
  double base = total_generator_loss(LossParts{0.1, 0.2, 0.3}, w);
  CHECK(total_generator_loss(LossParts{0.1, 0.2 + 0.01, 0.3}, w) - base ==
        doctest::Approx(200.0 * 0.01).epsilon(1e-10));
  CHECK(total_generator_loss(LossParts{0.1, 0.2, 0.3 + 0.01}, w) - base ==
        doctest::Approx(10.0 * 0.01).epsilon(1e-10));

  double nan = std::nan("");
  CHECK_THROWS_WITH_AS(total_generator_loss(LossParts{0.1, nan, 0.3}, w),
                       doctest::Contains("l1"), NumericError);
  CHECK_THROWS_WITH_AS(total_generator_loss(LossParts{nan, 0.1, 0.3}, w),
                       doctest::Contains("adversarial"), NumericError);
}

TEST_CASE("generator forward: shape, tanh range, determinism") {
  TranslatorConfig cfg;
  cfg.image_size = 32;
  cfg.base_width = 4;
  cfg.max_width = 8;
  cfg.dwmh_heads = 2;
  cfg.dwmh_window = 2;
  nn::ParamStore ps;
  Rng rng(17);
  Generator gen(ps, cfg, rng);

  Rng drng(18);
  Tensor cond = random_onehot(drng, 1, 32);
  NodePtr out = gen.forward(ad::constant(cond));
  REQUIRE(out->value.shape == std::vector<int64_t>({1, 1, 32, 32}));
  for (double v : out->value.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  NodePtr out2 = gen.forward(ad::constant(cond));
  for (int64_t i = 0; i < out->value.numel(); ++i) CHECK(out->value[i] == out2->value[i]);

  Tensor bad({1, kNumClasses, 12, 12}, 0.0);
  CHECK_THROWS_AS(gen.forward(ad::constant(bad)), ShapeError);
}

TEST_CASE("attention reduces to plain UNet when saturated") {
  TranslatorConfig cfg = small_config();
  nn::ParamStore ps;
  Rng rng(23);
  Generator gen(ps, cfg, rng);

  Rng drng(24);
  Tensor cond = random_onehot(drng, 2, 16);

  // active attention differs from the plain path
  gen.dwmh().gamma->value[0] = 0.5;
  NodePtr active = gen.forward(ad::constant(cond));
  NodePtr plain = gen.forward_plain(ad::constant(cond));
  double diff_active = 0;
  for (int64_t i = 0; i < active->value.numel(); ++i)
    diff_active = std::max(diff_active, std::abs(active->value[i] - plain->value[i]));
  CHECK(diff_active > 1e-8);

  // saturated gates and zero residual scale collapse onto the plain path
  saturate_attention(gen);
  NodePtr sat = gen.forward(ad::constant(cond));
  NodePtr plain2 = gen.forward_plain(ad::constant(cond));
  double diff_sat = 0;
  for (int64_t i = 0; i < sat->value.numel(); ++i)
    diff_sat = std::max(diff_sat, std::abs(sat->value[i] - plain2->value[i]));
  CHECK(diff_sat < 1e-10);
}

TEST_CASE("trainer: lr=0 leaves params unchanged, trajectories deterministic") {
  TranslatorConfig cfg = small_config();
  Rng drng(31);
  Tensor cond = random_onehot(drng, 1, 16);
  Tensor target({1, 1, 16, 16});
  for (auto& v : target.data) v = std::tanh(drng.gaussian());

  Trainer frozen(cfg, 55);
  frozen.set_lr(0.0);
  std::vector<Tensor> before;
  for (auto& p : frozen.params().all()) before.push_back(p->value);
  frozen.train_step(cond, target);
  auto after = frozen.params().all();
  for (size_t i = 0; i < after.size(); ++i)
    for (int64_t k = 0; k < after[i]->value.numel(); ++k)
      CHECK(after[i]->value[k] == before[i][k]);

  Trainer a(cfg, 55), b(cfg, 55);
  for (int i = 0; i < 2; ++i) {
    auto la = a.train_step(cond, target);
    auto lb = b.train_step(cond, target);
    CHECK(la.total == lb.total);
    CHECK(la.critic == lb.critic);
  }
  auto pa = a.params().all(), pb = b.params().all();
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t k = 0; k < pa[i]->value.numel(); ++k)
      CHECK(pa[i]->value[k] == pb[i]->value[k]);
}

TEST_CASE("trainer smoke: losses finite, translation in range") {
  TranslatorConfig cfg = small_config();
  Trainer tr(cfg, 3);
  Rng drng(40);
  for (int step = 0; step < 5; ++step) {
    Tensor cond = random_onehot(drng, 1, 16);
    Tensor target({1, 1, 16, 16});
    for (auto& v : target.data) v = std::tanh(drng.gaussian());
    auto losses = tr.train_step(cond, target);
    CHECK(std::isfinite(losses.total));
    CHECK(std::isfinite(losses.critic));
    CHECK(losses.l1 >= 0.0);
    CHECK(losses.perceptual >= 0.0);
  }
  Tensor cond = random_onehot(drng, 1, 16);
  Tensor img = tr.translate(cond);
  REQUIRE(img.shape == std::vector<int64_t>({1, 1, 16, 16}));
  for (double v : img.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("config validation") {
  TranslatorConfig cfg = small_config();
  cfg.image_size = 12;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.lambda_l1 = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.decay_start_epoch = 300;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
