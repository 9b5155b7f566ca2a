#pragma once

#include <vector>

#include "tsgan/maskcodec.hpp"
#include "tsgan/rng.hpp"

namespace tsgan::phantom {

struct PhantomConfig {
  int64_t image_size = 64;
  int64_t min_diameter = 3;   // nodule diameter range, pixels
  int64_t max_diameter = 30;
  int64_t min_nodules = 1;
  int64_t max_nodules = 3;
  double background_intensity = -1.0;
  double body_intensity = 0.2;
  double lung_intensity = -0.6;
  double trachea_intensity = -0.9;
  double nodule_intensity = 0.5;
  double noise_sigma = 0.05;
  double texture_scale = 0.1;  // bilinearly upsampled 8x8 field, scaled

  void validate() const;
  double intensity_of(uint8_t cls) const;
};

struct PairedSample {
  LabelMask mask;
  Tensor image;  // [1,H,W] in [-1,1]
  std::vector<BoundingBox> boxes;
};

// Body ellipse enclosing two lung ellipses and a trachea disc, plus 0-3 nodule
// discs placed fully inside lung tissue (bounded retries, skipped on failure).
LabelMask generate_phantom_mask(Rng& rng, const PhantomConfig& cfg);

Tensor render_image_from_mask(const LabelMask& mask, const PhantomConfig& cfg, Rng& rng);

PairedSample generate_phantom_pair(Rng& rng, const PhantomConfig& cfg);

// Deterministic shuffled split; entry i is 0 for train, 1 for test.
// |train| = llround(n * train_ratio / (train_ratio + test_ratio)).
std::vector<uint8_t> split_tags(int64_t n, int64_t train_ratio, int64_t test_ratio,
                                uint64_t seed);

// Clip raw values to [window_min, window_max] and map affinely to [-1,1].
Tensor normalize_image(const Tensor& raw, double window_min, double window_max);

}  // namespace tsgan::phantom
