#include "tsgan/maskcodec.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "tsgan/errors.hpp"

namespace tsgan {

OneHotMask encode_one_hot(const LabelMask& mask) {
  if (mask.height < 1 || mask.width < 1) throw ShapeError("encode_one_hot: empty mask");
  int64_t hw = mask.height * mask.width;
  if (static_cast<int64_t>(mask.labels.size()) != hw)
    throw ShapeError("encode_one_hot: label buffer size mismatch");
  OneHotMask out;
  out.planes = Tensor({kNumClasses, mask.height, mask.width});
  for (int64_t i = 0; i < hw; ++i) {
    uint8_t l = mask.labels[static_cast<size_t>(i)];
    if (l >= kNumClasses)
      throw InvalidLabel("encode_one_hot: label " + std::to_string(l) + " at index " +
                         std::to_string(i));
    out.planes[static_cast<size_t>(l * hw + i)] = 1.0;
  }
  return out;
}

LabelMask decode_labels(const ClassScoreVolume& scores) {
  const Tensor& s = scores.scores;
  if (s.ndim() != 3 || s.dim(0) != kNumClasses)
    throw ShapeError("decode_labels: expected [6,H,W]");
  int64_t h = s.dim(1), w = s.dim(2), hw = h * w;
  LabelMask m;
  m.height = h;
  m.width = w;
  m.labels.resize(static_cast<size_t>(hw));
  for (int64_t i = 0; i < hw; ++i) {
    int best = 0;
    double bv = s[static_cast<size_t>(i)];
    if (std::isnan(bv)) throw NumericError("decode_labels: NaN score");
    for (int c = 1; c < kNumClasses; ++c) {
      double v = s[static_cast<size_t>(c * hw + i)];
      if (std::isnan(v)) throw NumericError("decode_labels: NaN score");
      if (v > bv) {  // ties break toward the lowest class index
        bv = v;
        best = c;
      }
    }
    m.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return m;
}

ValidationReport validate_mask(const LabelMask& mask) {
  ValidationReport r;
  r.valid = mask.height > 0 && mask.width > 0 &&
            static_cast<int64_t>(mask.labels.size()) == mask.height * mask.width;
  if (!r.valid) return r;
  for (int64_t y = 0; y < mask.height; ++y)
    for (int64_t x = 0; x < mask.width; ++x) {
      uint8_t l = mask.at(y, x);
      if (l >= kNumClasses) {
        r.out_of_range.emplace_back(y, x);
      } else {
        ++r.class_counts[l];
      }
    }
  r.valid = r.out_of_range.empty();
  r.nodule_present = r.class_counts[kNoduleClass] > 0;
  return r;
}

std::vector<BoundingBox> nodule_bboxes(const LabelMask& mask) {
  int64_t h = mask.height, w = mask.width;
  std::vector<uint8_t> seen(static_cast<size_t>(h * w), 0);
  std::vector<BoundingBox> boxes;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      if (mask.at(y, x) != kNoduleClass || seen[static_cast<size_t>(y * w + x)]) continue;
      // BFS over the 8-connected component
      int64_t x0 = x, x1 = x, y0 = y, y1 = y;
      std::deque<std::pair<int64_t, int64_t>> q{{y, x}};
      seen[static_cast<size_t>(y * w + x)] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop_front();
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            int64_t ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            size_t idx = static_cast<size_t>(ny * w + nx);
            if (seen[idx] || mask.labels[idx] != kNoduleClass) continue;
            seen[idx] = 1;
            q.emplace_back(ny, nx);
          }
      }
      boxes.push_back({x0, y0, x1 - x0 + 1, y1 - y0 + 1});
    }
  // Outer scan already visits components in (y,x) order of their first pixel;
  // sort by box (y,x) for the documented ordering.
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  return boxes;
}

const std::array<std::array<uint8_t, 3>, kNumClasses>& mask_palette() {
  static const std::array<std::array<uint8_t, 3>, kNumClasses> kPalette = {{
      {0, 0, 0},        // background
      {128, 96, 64},    // body
      {64, 128, 255},   // left lung
      {64, 255, 128},   // right lung
      {255, 224, 64},   // trachea
      {255, 32, 32},    // nodule
  }};
  return kPalette;
}

}  // namespace tsgan
