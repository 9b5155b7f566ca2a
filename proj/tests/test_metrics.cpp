#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "tsgan/metrics.hpp"
#include "tsgan/rng.hpp"

using namespace tsgan;
using namespace tsgan::metrics;

namespace {

EmbeddingSet rows2(std::vector<double> flat, int64_t n, int64_t d) {
  return {Tensor({n, d}, std::move(flat))};
}

GaussianStats stats_1d(double mu, double var) {
  return {Tensor({1}, std::vector<double>{mu}), Tensor({1, 1}, std::vector<double>{var})};
}

// exhaustive maximum-TP matcher for small instances
int64_t brute_force_tp(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                       double tau) {
  size_t nd = dets.size(), ng = gts.size();
  int64_t best = 0;
  std::vector<int> assign(nd, -1);
  std::function<void(size_t, int64_t)> rec = [&](size_t i, int64_t tp) {
    if (i == nd) {
      best = std::max(best, tp);
      return;
    }
    rec(i + 1, tp);  // detection unmatched
    for (size_t g = 0; g < ng; ++g) {
      if (gts[g].image_id != dets[i].image_id) continue;
      bool used = false;
      for (size_t j = 0; j < i; ++j)
        if (assign[j] == static_cast<int>(g)) used = true;
      if (used || iou(dets[i].box, gts[g].box) < tau) continue;
      assign[i] = static_cast<int>(g);
      rec(i + 1, tp + 1);
      assign[i] = -1;
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST_CASE("gaussian stats hand cases") {
  auto st = gaussian_stats(rows2({0, 0, 2, 2}, 2, 2));
  CHECK(st.mu[0] == doctest::Approx(1.0));
  CHECK(st.mu[1] == doctest::Approx(1.0));
  for (int i = 0; i < 4; ++i) CHECK(st.sigma[i] == doctest::Approx(2.0));

  auto same = gaussian_stats(rows2({3, 1, 3, 1, 3, 1}, 3, 2));
  for (int i = 0; i < 4; ++i) CHECK(same.sigma[i] == doctest::Approx(0.0));

  auto d1 = gaussian_stats(rows2({0, 1, 2}, 3, 1));
  CHECK(d1.mu[0] == doctest::Approx(1.0));
  CHECK(d1.sigma[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(gaussian_stats(rows2({1, 2}, 1, 2)), InsufficientSamples);
}

TEST_CASE("fid analytic 1-D cases, symmetry, self-distance") {
  CHECK(fid(stats_1d(0, 1), stats_1d(1, 1)) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(fid(stats_1d(0, 4), stats_1d(0, 1)) == doctest::Approx(1.0).epsilon(1e-8));

  Rng rng(7);
  Tensor r({64, 3});
  for (auto& v : r.data) v = rng.gaussian();
  auto st = gaussian_stats(EmbeddingSet{r});
  CHECK(fid(st, st) <= 1e-6);

  Tensor r2({64, 3});
  for (auto& v : r2.data) v = 0.5 + 2.0 * rng.gaussian();
  auto st2 = gaussian_stats(EmbeddingSet{r2});
  CHECK(fid(st, st2) == doctest::Approx(fid(st2, st)).epsilon(1e-8));

  CHECK_THROWS_AS(fid(st, stats_1d(0, 1)), ShapeError);
}

TEST_CASE("trace of sqrt product matches diagonal closed form") {
  Tensor a({3, 3}, 0.0), b({3, 3}, 0.0);
  std::vector<double> da{4.0, 1.0, 0.25}, db{9.0, 16.0, 1.0};
  double expected = 0;
  for (int i = 0; i < 3; ++i) {
    a[i * 3 + i] = da[static_cast<size_t>(i)];
    b[i * 3 + i] = db[static_cast<size_t>(i)];
    expected += std::sqrt(da[static_cast<size_t>(i)] * db[static_cast<size_t>(i)]);
  }
  CHECK(trace_sqrt_product(a, b) == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("fid shrinks with sample size for matched Gaussians") {
  Rng rng(11);
  auto sample = [&](int64_t n, double shift) {
    Tensor t({n, 4});
    for (auto& v : t.data) v = shift + rng.gaussian();
    return gaussian_stats(EmbeddingSet{t});
  };
  double same = fid(sample(512, 0.0), sample(512, 0.0));
  double shifted = fid(sample(512, 0.0), sample(512, 1.0));
  CHECK(same < shifted);
}

TEST_CASE("psnr hand values and monotonicity") {
  Tensor x({1, 8, 8});
  Rng rng(3);
  for (auto& v : x.data) v = 100.0 * rng.uniform();
  CHECK(std::isinf(psnr(x, x, 255.0)));

  Tensor zeros({4}, 0.0), offs({4}, 255.0);
  CHECK(psnr(zeros, offs, 255.0) == doctest::Approx(0.0).epsilon(1e-9));

  Tensor y = x;
  y[0] += 8.0;  // MSE = 64/64 = 1
  CHECK(psnr(x, y, 255.0) == doctest::Approx(10.0 * std::log10(65025.0)).epsilon(1e-9));

  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {0.5, 1.0, 2.0}) {
    Tensor noisy = x;
    Rng nrng(9);
    for (auto& v : noisy.data) v += amp * nrng.gaussian();
    double p = psnr(x, noisy, 255.0);
    CHECK(p < prev);
    prev = p;
  }

  Tensor wrong({5});
  CHECK_THROWS_AS(psnr(x, wrong, 255.0), ShapeError);
}

TEST_CASE("ssim hand values") {
  Rng rng(21);
  Tensor x({16, 16});
  for (auto& v : x.data) v = 255.0 * rng.uniform();
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor c1({11, 11}, 100.0), c2({11, 11}, 50.0);
  double C1 = 2.55 * 2.55;
  double expected = (2.0 * 5000.0 + C1) / (12500.0 + C1);
  CHECK(ssim(c1, c2) == doctest::Approx(expected).epsilon(1e-4));

  // opposite-sign constants: zero-variance formula (C1 - 2c^2)/(C1 + 2c^2)
  double c = 200.0;
  Tensor p({11, 11}, c), n({11, 11}, -c);
  double s = ssim(p, n);
  double zero_var = (C1 - 2 * c * c) / (C1 + 2 * c * c);
  CHECK(s == doctest::Approx(zero_var).epsilon(1e-9));
  CHECK(s >= -1.0);

  Tensor y({16, 16});
  for (auto& v : y.data) v = 255.0 * rng.uniform();
  double r = ssim(x, y);
  CHECK(r >= -1.0);
  CHECK(r <= 1.0);

  Tensor small({8, 8});
  CHECK_THROWS_AS(ssim(small, small), ShapeError);
}

TEST_CASE("masked region metrics") {
  LabelMask mask;
  mask.height = mask.width = 32;
  mask.labels.assign(32 * 32, 2);
  for (int64_t y = 14; y < 18; ++y)
    for (int64_t x = 14; x < 18; ++x) mask.at(y, x) = kNoduleClass;

  Rng rng(5);
  Tensor img({32, 32});
  for (auto& v : img.data) v = 200.0 * rng.uniform();

  auto self = masked_region_metrics(img, img, mask, 255.0);
  CHECK(std::isinf(self.psnr));
  CHECK(self.ssim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(self.l1 == 0.0);
  CHECK(self.region.x == 6);
  CHECK(self.region.y == 6);
  CHECK(self.region.w == 20);
  CHECK(self.region.h == 20);

  // perturbing a pixel outside the dilated region changes nothing
  Tensor other = img;
  other[0] += 1000.0;
  auto outside = masked_region_metrics(img, other, mask, 255.0);
  CHECK(std::isinf(outside.psnr));
  CHECK(outside.l1 == 0.0);

  LabelMask empty = mask;
  for (auto& v : empty.labels) v = 1;
  CHECK_THROWS_AS(masked_region_metrics(img, img, empty, 255.0), NoNoduleRegion);
}

TEST_CASE("iou hand values") {
  BoundingBox a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, {10, 10, 2, 2}) == doctest::Approx(0.0));
  CHECK(iou(a, {1, 0, 2, 2}) == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("precision and recall hand cases") {
  std::vector<GtBox> gts;
  std::vector<Detection> dets;
  for (int i = 0; i < 8; ++i) {
    BoundingBox box{10 * i, 0, 5, 5};
    gts.push_back({box, 0});
    dets.push_back({box, 0.9, 0});
  }
  dets.push_back({{500, 500, 5, 5}, 0.8, 0});
  dets.push_back({{600, 600, 5, 5}, 0.7, 0});
  auto pr = precision_recall(dets, gts, 0.5);
  CHECK(pr.precision == doctest::Approx(0.8));
  CHECK(pr.recall == doctest::Approx(1.0));

  auto none = precision_recall({}, gts, 0.5);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);

  // IoU exactly at the threshold counts as a match
  std::vector<GtBox> one_gt{{{0, 0, 4, 1}, 0}};
  std::vector<Detection> one_det{{{1, 0, 4, 1}, 0.5, 0}};  // IoU = 3/5
  auto boundary = precision_recall(one_det, one_gt, 0.6);
  CHECK(boundary.precision == doctest::Approx(1.0));
  CHECK(boundary.recall == doctest::Approx(1.0));

  CHECK_THROWS_AS(precision_recall(one_det, one_gt, 0.0), ConfigError);
}

TEST_CASE("greedy matcher vs exhaustive matcher on random instances") {
  Rng rng(77);
  int disagreements = 0;
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<GtBox> gts;
    std::vector<Detection> dets;
    int64_t ng = rng.uniform_int(0, 4), nd = rng.uniform_int(0, 4);
    for (int64_t g = 0; g < ng; ++g)
      gts.push_back({{rng.uniform_int(0, 12), rng.uniform_int(0, 12),
                      rng.uniform_int(2, 8), rng.uniform_int(2, 8)},
                     rng.uniform_int(0, 1)});
    for (int64_t d = 0; d < nd; ++d)
      dets.push_back({{rng.uniform_int(0, 12), rng.uniform_int(0, 12),
                       rng.uniform_int(2, 8), rng.uniform_int(2, 8)},
                      rng.uniform(), rng.uniform_int(0, 1)});
    double tau = 0.3;
    auto pr = precision_recall(dets, gts, tau);
    int64_t greedy_tp =
        dets.empty() ? 0 : llround(pr.precision * static_cast<double>(dets.size()));
    int64_t optimal_tp = brute_force_tp(dets, gts, tau);
    if (greedy_tp != optimal_tp) {
      // greedy can only lose matches relative to the optimal assignment
      ++disagreements;
      CHECK(greedy_tp < optimal_tp);
    }
  }
  CHECK(disagreements < 20);
}

TEST_CASE("average precision cases") {
  std::vector<GtBox> gt{{{0, 0, 5, 5}, 0}};
  CHECK(average_precision({{{0, 0, 5, 5}, 0.42, 0}}, gt, 0.5) == doctest::Approx(1.0));
  CHECK(average_precision({{{0, 0, 5, 5}, 0.9, 0}}, {}, 0.5) == 0.0);

  std::vector<Detection> two{{{0, 0, 5, 5}, 0.9, 0}, {{50, 50, 5, 5}, 0.8, 0}};
  CHECK(average_precision(two, gt, 0.5) == doctest::Approx(1.0));

  // FP ranked first halves the envelope start but recall still reaches 1
  std::vector<Detection> fp_first{{{50, 50, 5, 5}, 0.9, 0}, {{0, 0, 5, 5}, 0.8, 0}};
  CHECK(average_precision(fp_first, gt, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("mean AP over the threshold grid") {
  std::vector<GtBox> gt{{{0, 0, 10, 10}, 0}};
  std::vector<Detection> perfect{{{0, 0, 10, 10}, 0.99, 0}};
  CHECK(mean_ap(perfect, gt) == doctest::Approx(1.0));
  CHECK(mean_ap({}, gt) == 0.0);

  // IoU exactly 3/5: matches at thresholds 0.50, 0.55, 0.60 only
  std::vector<GtBox> line_gt{{{0, 0, 4, 1}, 0}};
  std::vector<Detection> line_det{{{1, 0, 4, 1}, 0.7, 0}};
  CHECK(mean_ap(line_det, line_gt) == doctest::Approx(0.3).epsilon(1e-15));

  // decomposition: mean of the ten per-threshold APs
  Rng rng(13);
  std::vector<GtBox> gts;
  std::vector<Detection> dets;
  for (int i = 0; i < 4; ++i) {
    BoundingBox b{rng.uniform_int(0, 20), rng.uniform_int(0, 20), rng.uniform_int(3, 9),
                  rng.uniform_int(3, 9)};
    gts.push_back({b, 0});
    dets.push_back({{b.x + rng.uniform_int(0, 2), b.y, b.w, b.h}, rng.uniform(), 0});
  }
  double total = 0;
  for (int k = 0; k < 10; ++k)
    total += average_precision(dets, gts, static_cast<double>(50 + 5 * k) / 100.0);
  CHECK(mean_ap(dets, gts) == doctest::Approx(total / 10.0).epsilon(1e-12));
}

TEST_CASE("embedding determinism and shape") {
  FeatureNetwork phi = FeatureNetwork::seeded(42);
  Rng rng(1);
  std::vector<Tensor> imgs;
  for (int i = 0; i < 3; ++i) {
    Tensor t({1, 16, 16});
    for (auto& v : t.data) v = rng.gaussian();
    imgs.push_back(t);
  }
  auto e = embed(imgs, phi);
  CHECK(e.rows.dim(0) == 3);
  CHECK(e.rows.dim(1) == phi.embed_dim());

  auto twice = embed({imgs[0], imgs[0]}, phi);
  int64_t d = twice.rows.dim(1);
  for (int64_t j = 0; j < d; ++j) CHECK(twice.rows[j] == twice.rows[d + j]);

  auto perm = embed({imgs[2], imgs[0], imgs[1]}, phi);
  for (int64_t j = 0; j < d; ++j) {
    CHECK(perm.rows[0 * d + j] == e.rows[2 * d + j]);
    CHECK(perm.rows[1 * d + j] == e.rows[0 * d + j]);
    CHECK(perm.rows[2 * d + j] == e.rows[1 * d + j]);
  }

  CHECK_THROWS_AS(embed({}, phi), EmptyInput);
}
