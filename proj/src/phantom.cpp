#include "tsgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsgan/autodiff.hpp"

namespace tsgan::phantom {

void PhantomConfig::validate() const {
  if (image_size < 16) throw ConfigError("phantom: image_size must be >= 16");
  if (min_diameter < 1 || max_diameter < min_diameter)
    throw ConfigError("phantom: bad nodule diameter range");
  if (max_diameter > image_size / 2)
    throw ConfigError("phantom: max_diameter exceeds image_size/2");
  if (min_nodules < 0 || max_nodules < min_nodules)
    throw ConfigError("phantom: bad nodule count range");
  for (double v : {background_intensity, body_intensity, lung_intensity, trachea_intensity,
                   nodule_intensity})
    if (v < -1.0 || v > 1.0) throw ConfigError("phantom: intensities must lie in [-1,1]");
  if (noise_sigma < 0 || texture_scale < 0)
    throw ConfigError("phantom: noise/texture scales must be >= 0");
}

double PhantomConfig::intensity_of(uint8_t cls) const {
  switch (cls) {
    case 0: return background_intensity;
    case 1: return body_intensity;
    case 2:
    case 3: return lung_intensity;
    case 4: return trachea_intensity;
    case 5: return nodule_intensity;
    default: throw InvalidLabel("phantom: label " + std::to_string(cls));
  }
}

namespace {

void fill_ellipse(LabelMask& mask, double cy, double cx, double ry, double rx,
                  uint8_t cls) {
  for (int64_t y = 0; y < mask.height; ++y)
    for (int64_t x = 0; x < mask.width; ++x) {
      double dy = (static_cast<double>(y) - cy) / ry;
      double dx = (static_cast<double>(x) - cx) / rx;
      if (dy * dy + dx * dx <= 1.0) mask.at(y, x) = cls;
    }
}

bool try_place_nodule(LabelMask& mask, Rng& rng, int64_t diameter) {
  double r = static_cast<double>(diameter) / 2.0;
  int64_t cy = rng.uniform_int(0, mask.height - 1);
  int64_t cx = rng.uniform_int(0, mask.width - 1);
  uint8_t lung = mask.at(cy, cx);
  if (lung != 2 && lung != 3) return false;

  int64_t reach = static_cast<int64_t>(std::ceil(r));
  std::vector<std::pair<int64_t, int64_t>> pixels;
  for (int64_t y = cy - reach; y <= cy + reach; ++y)
    for (int64_t x = cx - reach; x <= cx + reach; ++x) {
      double dy = static_cast<double>(y - cy), dx = static_cast<double>(x - cx);
      if (dy * dy + dx * dx > r * r) continue;
      if (y < 0 || y >= mask.height || x < 0 || x >= mask.width) return false;
      uint8_t c = mask.at(y, x);
      if (c != 2 && c != 3) return false;  // disc must stay inside lung tissue
      pixels.emplace_back(y, x);
    }
  if (pixels.empty()) return false;
  for (auto [y, x] : pixels) mask.at(y, x) = kNoduleClass;
  return true;
}

}  // namespace

LabelMask generate_phantom_mask(Rng& rng, const PhantomConfig& cfg) {
  cfg.validate();
  int64_t s = cfg.image_size;
  LabelMask mask;
  mask.height = mask.width = s;
  mask.labels.assign(static_cast<size_t>(s * s), 0);
  double S = static_cast<double>(s);

  double cy = S * rng.uniform(0.48, 0.54);
  double cx = S * rng.uniform(0.48, 0.52);
  fill_ellipse(mask, cy, cx, S * rng.uniform(0.40, 0.46), S * rng.uniform(0.36, 0.42), 1);

  double lung_ry = S * rng.uniform(0.24, 0.30);
  double lung_rx = S * rng.uniform(0.13, 0.16);
  double lung_cy = cy + S * rng.uniform(0.00, 0.04);
  double lung_dx = S * rng.uniform(0.17, 0.20);
  fill_ellipse(mask, lung_cy, cx - lung_dx, lung_ry, lung_rx, 2);
  fill_ellipse(mask, lung_cy, cx + lung_dx, lung_ry, lung_rx, 3);

  double trachea_r = S * rng.uniform(0.03, 0.05);
  fill_ellipse(mask, cy - S * 0.30, cx, trachea_r, trachea_r, 4);

  int64_t max_d = std::min<int64_t>(cfg.max_diameter,
                                    static_cast<int64_t>(std::floor(lung_rx)));
  max_d = std::max(max_d, cfg.min_diameter);
  int64_t want = rng.uniform_int(cfg.min_nodules, cfg.max_nodules);
  for (int64_t i = 0; i < want; ++i) {
    int64_t d = rng.uniform_int(cfg.min_diameter, max_d);
    for (int attempt = 0; attempt < 64; ++attempt)
      if (try_place_nodule(mask, rng, d)) break;
  }
  return mask;
}

Tensor render_image_from_mask(const LabelMask& mask, const PhantomConfig& cfg, Rng& rng) {
  int64_t h = mask.height, w = mask.width;
  Tensor img({1, h, w});
  for (int64_t i = 0; i < h * w; ++i)
    img[i] = cfg.intensity_of(mask.labels[static_cast<size_t>(i)]);

  if (cfg.texture_scale > 0) {
    Tensor field({1, 1, 8, 8});
    for (auto& v : field.data) v = rng.gaussian();
    ad::NodePtr up = ad::bilinear_resize(ad::constant(std::move(field)), h, w);
    for (int64_t i = 0; i < h * w; ++i) img[i] += cfg.texture_scale * up->value[i];
  }
  if (cfg.noise_sigma > 0)
    for (auto& v : img.data) v += cfg.noise_sigma * rng.gaussian();
  for (auto& v : img.data) v = std::clamp(v, -1.0, 1.0);
  return img;
}

PairedSample generate_phantom_pair(Rng& rng, const PhantomConfig& cfg) {
  PairedSample sample;
  sample.mask = generate_phantom_mask(rng, cfg);
  sample.image = render_image_from_mask(sample.mask, cfg, rng);
  sample.boxes = nodule_bboxes(sample.mask);
  return sample;
}

std::vector<uint8_t> split_tags(int64_t n, int64_t train_ratio, int64_t test_ratio,
                                uint64_t seed) {
  if (train_ratio < 1 || test_ratio < 1)
    throw ConfigError("split_tags: ratio parts must be positive integers");
  if (n < 2) throw InsufficientSamples("split_tags: need at least 2 samples");
  int64_t n_train = llround(static_cast<double>(n) * static_cast<double>(train_ratio) /
                            static_cast<double>(train_ratio + test_ratio));
  n_train = std::clamp<int64_t>(n_train, 1, n - 1);

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  Rng rng(seed);
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)],
              order[static_cast<size_t>(rng.uniform_int(0, i))]);

  std::vector<uint8_t> tags(static_cast<size_t>(n), 1);
  for (int64_t i = 0; i < n_train; ++i) tags[static_cast<size_t>(order[i])] = 0;
  return tags;
}

Tensor normalize_image(const Tensor& raw, double window_min, double window_max) {
  if (!(window_min < window_max)) throw ConfigError("normalize_image: degenerate window");
  Tensor out(raw.shape);
  double span = window_max - window_min;
  for (int64_t i = 0; i < raw.numel(); ++i) {
    double v = std::clamp(raw[i], window_min, window_max);
    out[i] = 2.0 * (v - window_min) / span - 1.0;
  }
  return out;
}

}  // namespace tsgan::phantom
