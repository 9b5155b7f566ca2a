#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tsgan/tensor.hpp"

namespace tsgan {

inline constexpr int kNumClasses = 6;
inline constexpr int kNoduleClass = 5;

// H x W integer label map. Classes: 0 background, 1 body, 2 left lung,
// 3 right lung, 4 trachea, 5 nodule.
struct LabelMask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> labels;  // row-major

  uint8_t at(int64_t y, int64_t x) const { return labels[static_cast<size_t>(y * width + x)]; }
  uint8_t& at(int64_t y, int64_t x) { return labels[static_cast<size_t>(y * width + x)]; }
};

// Dense 6 x H x W one-hot planes.
struct OneHotMask {
  Tensor planes;  // [6,H,W], entries exactly 0.0 or 1.0
};

// Post-softmax class probabilities, 6 x H x W.
struct ClassScoreVolume {
  Tensor scores;  // [6,H,W]
};

struct BoundingBox {
  int64_t x = 0, y = 0, w = 0, h = 0;  // left, top, width, height (pixels)
  bool operator==(const BoundingBox&) const = default;
};

struct ValidationReport {
  bool valid = false;
  bool nodule_present = false;
  std::array<int64_t, kNumClasses> class_counts{};
  std::vector<std::pair<int64_t, int64_t>> out_of_range;  // (y,x) of offending pixels
};

OneHotMask encode_one_hot(const LabelMask& mask);
LabelMask decode_labels(const ClassScoreVolume& scores);
ValidationReport validate_mask(const LabelMask& mask);

// One tight box per 8-connected component of the nodule class, ordered by the
// component's topmost-then-leftmost pixel.
std::vector<BoundingBox> nodule_bboxes(const LabelMask& mask);

// Fixed palette for the human-inspection render (RGB per class).
const std::array<std::array<uint8_t, 3>, kNumClasses>& mask_palette();

}  // namespace tsgan
