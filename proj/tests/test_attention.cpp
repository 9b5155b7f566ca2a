#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tsgan/attention.hpp"
#include "tsgan/gradcheck.hpp"

using namespace tsgan;
using namespace tsgan::ad;
using namespace tsgan::attn;

namespace {

Tensor randn(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = scale * rng.gaussian();
  return t;
}

}  // namespace

TEST_CASE("soft_pool: constant input is invariant") {
  NodePtr x = constant(Tensor({1, 2, 8, 8}, 0.37));
  NodePtr y = soft_pool(x, 3, 2);
  for (double v : y->value.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("soft_pool: kernel 1 stride 1 is identity") {
  Rng rng(4);
  NodePtr x = constant(randn({1, 3, 5, 5}, rng));
  NodePtr y = soft_pool(x, 1, 1);
  for (int64_t i = 0; i < x->value.numel(); ++i)
    CHECK(y->value[i] == doctest::Approx(x->value[i]).epsilon(1e-12));
}

TEST_CASE("soft_pool: hand-evaluated window (0, ln 3)") {
  // Window values (0, ln 3) duplicated over two rows; the exponential weights
  // give (3 ln 3)/4 just as in the 1-D hand evaluation.
  Tensor t({1, 1, 2, 2}, {0.0, std::log(3.0), 0.0, std::log(3.0)});
  NodePtr out = soft_pool(constant(t), 2, 1);
  CHECK(out->value.numel() == 1);
  CHECK(out->value[0] == doctest::Approx(3.0 * std::log(3.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("soft_pool output is a convex combination of window entries") {
  Rng rng(8);
  NodePtr x = constant(randn({1, 1, 9, 9}, rng, 2.0));
  NodePtr y = soft_pool(x, 3, 3);
  for (int64_t oy = 0; oy < 3; ++oy)
    for (int64_t ox = 0; ox < 3; ++ox) {
      double lo = 1e300, hi = -1e300;
      for (int64_t dy = 0; dy < 3; ++dy)
        for (int64_t dx = 0; dx < 3; ++dx) {
          double v = x->value[(oy * 3 + dy) * 9 + ox * 3 + dx];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      double o = y->value[oy * 3 + ox];
      CHECK(o >= lo - 1e-12);
      CHECK(o <= hi + 1e-12);
    }
}

TEST_CASE("soft_pool rejects oversized kernels") {
  NodePtr x = constant(Tensor({1, 1, 3, 3}, 0.0));
  CHECK_THROWS_AS(soft_pool(x, 5, 1), ShapeError);
}

TEST_CASE("bilinear upsample: constant and 1x1 cases") {
  NodePtr c = constant(Tensor({1, 1, 3, 3}, 0.42));
  NodePtr up = bilinear_resize(c, 7, 5);
  for (double v : up->value.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));

  NodePtr one = constant(Tensor({1, 1, 1, 1}, -1.3));
  NodePtr up2 = bilinear_resize(one, 4, 4);
  for (double v : up2->value.data) CHECK(v == doctest::Approx(-1.3).epsilon(1e-12));
}

TEST_CASE("bilinear upsample stays within source range and interpolates ramps") {
  Tensor ramp({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  NodePtr up = bilinear_resize(constant(ramp), 4, 4);
  for (double v : up->value.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 3.0);
  }
  // Half-pixel centers: target pixel 1 samples source at 0.25.
  CHECK(up->value[0 * 4 + 1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(up->value[1 * 4 + 0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("LIA: zero input maps to zero, attenuation bound holds") {
  Rng rng(17);
  nn::ParamStore ps;
  LiaParams p = LiaParams::create(ps, "lia", 2, rng);

  NodePtr zero = constant(Tensor({1, 2, 14, 14}, 0.0));
  NodePtr yz = lia_forward(zero, p);
  for (double v : yz->value.data) CHECK(v == 0.0);

  NodePtr x = constant(randn({1, 2, 14, 14}, rng));
  NodePtr y = lia_forward(x, p);
  for (int64_t i = 0; i < x->value.numel(); ++i) {
    CHECK(std::abs(y->value[i]) <= std::abs(x->value[i]) + 1e-12);
    if (y->value[i] != 0.0)
      CHECK(std::signbit(y->value[i]) == std::signbit(x->value[i]));
  }
}

TEST_CASE("LIA gradcheck on 2x14x14 input") {
  Rng rng(23);
  nn::ParamStore ps;
  LiaParams p = LiaParams::create(ps, "lia", 2, rng);
  NodePtr x = leaf(randn({1, 2, 14, 14}, rng));
  Tensor probe = randn({1, 2, 14, 14}, rng);
  auto build = [&] { return sum_all(mul(lia_forward(x, p), constant(probe))); };
  std::vector<NodePtr> leaves = ps.all();
  leaves.push_back(x);
  CHECK(fd_max_rel_err(build, leaves) < 1e-4);
}

TEST_CASE("window partition/merge identity for all window sizes") {
  Rng rng(31);
  NodePtr x = constant(randn({2, 3, 8, 8}, rng));
  for (int64_t s = 1; s <= 8; ++s) {
    Windowed wnd = window_partition(x, s);
    NodePtr back = window_merge(wnd, wnd.windows);
    for (int64_t i = 0; i < x->value.numel(); ++i) CHECK(back->value[i] == x->value[i]);
  }
}

TEST_CASE("window partition counts") {
  NodePtr x = constant(Tensor({1, 1, 8, 8}, 0.0));
  Windowed w4 = window_partition(x, 4);
  CHECK(w4.count() == 4);
  Windowed w8 = window_partition(x, 8);
  CHECK(w8.count() == 1);
  for (int64_t i = 0; i < 64; ++i) CHECK(w8.windows->value[i] == x->value[i]);
  CHECK_THROWS_AS(window_partition(x, 0), ConfigError);
}

TEST_CASE("DWMH with gamma=0 is the identity bit-exactly") {
  Rng rng(37);
  for (int it = 0; it < 20; ++it) {
    nn::ParamStore ps;
    DwmhParams p = DwmhParams::create(ps, "dwmh", 4, 2, 3, rng);
    for (auto& v : p.head_weights->value.data) v = rng.gaussian();
    NodePtr x = constant(randn({1, 4, 7, 7}, rng));  // forces reflect-pad path
    NodePtr y = dwmh_forward(x, p);
    REQUIRE(y->value.same_shape(x->value));
    for (int64_t i = 0; i < x->value.numel(); ++i) CHECK(y->value[i] == x->value[i]);
  }
}

TEST_CASE("DWMH with s=1: softmax of one logit is 1") {
  Rng rng(41);
  nn::ParamStore ps;
  DwmhParams p = DwmhParams::create(ps, "dwmh", 2, 2, 1, rng);
  p.gamma->value[0] = 0.5;
  p.head_weights->value = Tensor({2}, {2.0, 3.0});
  NodePtr x = constant(randn({1, 2, 2, 2}, rng));
  NodePtr v = p.v(x);
  NodePtr y = dwmh_forward(x, p);
  // out = gamma * (W_h * V) + x per position and head
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 4; ++i) {
      double expect = 0.5 * p.head_weights->value[c] * v->value[c * 4 + i] + x->value[c * 4 + i];
      CHECK(y->value[c * 4 + i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("DWMH pre-weighting softmax rows sum to one") {
  Rng rng(43);
  NodePtr logits = constant(randn({9, 9}, rng, 3.0));
  NodePtr sm = softmax_rows(logits);
  for (int64_t r = 0; r < 9; ++r) {
    double s = 0;
    for (int64_t c = 0; c < 9; ++c) s += sm->value[r * 9 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("DWMH rejects indivisible head counts") {
  Rng rng(47);
  nn::ParamStore ps;
  CHECK_THROWS_AS(DwmhParams::create(ps, "d", 5, 2, 2, rng), ConfigError);
}

TEST_CASE("DWMH gradcheck") {
  Rng rng(53);
  nn::ParamStore ps;
  DwmhParams p = DwmhParams::create(ps, "dwmh", 4, 2, 2, rng);
  p.gamma->value[0] = 0.3;  // off the identity point so all paths carry gradient
  NodePtr x = leaf(randn({1, 4, 4, 4}, rng));
  Tensor probe = randn({1, 4, 4, 4}, rng);
  auto build = [&] { return sum_all(mul(dwmh_forward(x, p), constant(probe))); };
  std::vector<NodePtr> leaves = ps.all();
  leaves.push_back(x);
  CHECK(fd_max_rel_err(build, leaves) < 1e-4);
}
