#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "tsgan/phantom.hpp"

using namespace tsgan;
using namespace tsgan::phantom;

namespace {

PhantomConfig small_config() {
  PhantomConfig cfg;
  cfg.image_size = 32;
  cfg.max_diameter = 8;
  return cfg;
}

}  // namespace

TEST_CASE("fixed seed reproduces the pair exactly") {
  PhantomConfig cfg = small_config();
  Rng a(42), b(42);
  PairedSample s1 = generate_phantom_pair(a, cfg);
  PairedSample s2 = generate_phantom_pair(b, cfg);
  CHECK(s1.mask.labels == s2.mask.labels);
  REQUIRE(s1.image.numel() == s2.image.numel());
  for (int64_t i = 0; i < s1.image.numel(); ++i) CHECK(s1.image[i] == s2.image[i]);
  CHECK(s1.boxes == s2.boxes);
}

TEST_CASE("generated masks validate and nodules stay inside the lungs") {
  PhantomConfig cfg = small_config();
  Rng rng(7);
  int with_nodule = 0;
  for (int i = 0; i < 300; ++i) {
    LabelMask mask = generate_phantom_mask(rng, cfg);
    ValidationReport rep = validate_mask(mask);
    CHECK(rep.valid);
    if (rep.nodule_present) ++with_nodule;

    // lung bounds include painted nodule pixels (they were lung tissue)
    int64_t x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int64_t y = 0; y < mask.height; ++y)
      for (int64_t x = 0; x < mask.width; ++x) {
        uint8_t c = mask.at(y, x);
        if (c == 2 || c == 3 || c == kNoduleClass) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
      }
    for (const auto& b : nodule_bboxes(mask)) {
      CHECK(b.x >= x0);
      CHECK(b.y >= y0);
      CHECK(b.x + b.w - 1 <= x1);
      CHECK(b.y + b.h - 1 <= y1);
    }
  }
  CHECK(with_nodule > 250);  // min_nodules 1, only bounded-retry failures skip
}

TEST_CASE("boxes field matches the codec on every sample") {
  PhantomConfig cfg = small_config();
  Rng rng(19);
  for (int i = 0; i < 50; ++i) {
    PairedSample s = generate_phantom_pair(rng, cfg);
    CHECK(s.boxes == nodule_bboxes(s.mask));
  }
}

TEST_CASE("noise-free render is piecewise constant with <= 6 values") {
  PhantomConfig cfg = small_config();
  cfg.noise_sigma = 0;
  cfg.texture_scale = 0;
  Rng rng(3);
  LabelMask mask = generate_phantom_mask(rng, cfg);
  Tensor img = render_image_from_mask(mask, cfg, rng);
  std::set<double> values(img.data.begin(), img.data.end());
  CHECK(values.size() <= 6);
}

TEST_CASE("rendered intensities: ordering, clipping, class separation") {
  PhantomConfig cfg = small_config();
  Rng rng(11);
  double nodule_sum = 0, lung_sum = 0;
  int64_t nodule_n = 0, lung_n = 0;
  for (int i = 0; i < 20; ++i) {
    PairedSample s = generate_phantom_pair(rng, cfg);
    for (int64_t p = 0; p < s.image.numel(); ++p) {
      CHECK(s.image[p] >= -1.0);
      CHECK(s.image[p] <= 1.0);
      uint8_t c = s.mask.labels[static_cast<size_t>(p)];
      if (c == kNoduleClass) {
        nodule_sum += s.image[p];
        ++nodule_n;
      } else if (c == 2 || c == 3) {
        lung_sum += s.image[p];
        ++lung_n;
      }
    }
  }
  REQUIRE(nodule_n > 0);
  REQUIRE(lung_n > 0);
  double gap = nodule_sum / nodule_n - lung_sum / lung_n;
  CHECK(gap > 2 * cfg.noise_sigma);
}

TEST_CASE("split arithmetic and determinism") {
  auto tags = split_tags(1186, 4, 1, 9);
  int64_t train = std::count(tags.begin(), tags.end(), 0);
  CHECK(train == 949);
  CHECK(static_cast<int64_t>(tags.size()) - train == 237);

  auto five = split_tags(5, 4, 1, 1);
  CHECK(std::count(five.begin(), five.end(), 0) == 4);
  CHECK(std::count(five.begin(), five.end(), 1) == 1);

  CHECK(split_tags(100, 4, 1, 55) == split_tags(100, 4, 1, 55));
  CHECK(split_tags(100, 4, 1, 55) != split_tags(100, 4, 1, 56));

  CHECK_THROWS_AS(split_tags(1, 4, 1, 0), InsufficientSamples);
  CHECK_THROWS_AS(split_tags(10, 0, 1, 0), ConfigError);
}

TEST_CASE("normalization window arithmetic") {
  Tensor raw({5}, std::vector<double>{-1000.0, -300.0, 400.0, -2000.0, 1000.0});
  Tensor out = normalize_image(raw, -1000.0, 400.0);
  CHECK(out[0] == doctest::Approx(-1.0));
  CHECK(out[1] == doctest::Approx(0.0));
  CHECK(out[2] == doctest::Approx(1.0));
  CHECK(out[3] == doctest::Approx(-1.0));  // clipped below
  CHECK(out[4] == doctest::Approx(1.0));   // clipped above

  Tensor mid({1}, std::vector<double>{5.0});
  CHECK(normalize_image(mid, 0.0, 10.0)[0] == doctest::Approx(0.0));

  CHECK_THROWS_AS(normalize_image(raw, 1.0, 1.0), ConfigError);
}

TEST_CASE("config validation") {
  PhantomConfig cfg = small_config();
  cfg.max_diameter = 30;  // > image_size/2 at 32
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.nodule_intensity = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.min_nodules = 3;
  cfg.max_nodules = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
