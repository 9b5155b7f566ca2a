#pragma once

#include <vector>

#include "tsgan/featurenet.hpp"
#include "tsgan/maskcodec.hpp"

namespace tsgan::metrics {

struct EmbeddingSet {
  Tensor rows;  // [N, d]
};

struct GaussianStats {
  Tensor mu;     // [d]
  Tensor sigma;  // [d, d], symmetric, 1/(N-1) normalization
};

// One row per image: global average pool of the embedder's final stage,
// images bilinearly resized to input_size first. Images are [1,H,W] or [H,W].
EmbeddingSet embed(const std::vector<Tensor>& images, const FeatureNetwork& phi,
                   int64_t input_size = 32);

GaussianStats gaussian_stats(const EmbeddingSet& e);

// Tr((A B)^{1/2}) for symmetric PSD A, B via Tr((A^{1/2} B A^{1/2})^{1/2}).
double trace_sqrt_product(const Tensor& a, const Tensor& b);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), clamped to >= 0.
double fid(const GaussianStats& a, const GaussianStats& b);

// 10 log10(max_val^2 / MSE); +infinity when MSE = 0.
double psnr(const Tensor& x, const Tensor& y, double max_val);

struct SsimConfig {
  int64_t window = 11;
  double sigma = 1.5;      // Gaussian window; <= 0 selects a uniform window
  double dynamic_range = 255.0;
};

// Mean per-window SSIM over all valid window positions.
double ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg = {});

// Tight bounding box of class-5 pixels dilated by margin, clipped to the mask.
BoundingBox nodule_region(const LabelMask& mask, int64_t margin);

Tensor crop_image(const Tensor& img, const BoundingBox& box);

struct MaskedRegionMetrics {
  double psnr = 0;
  double ssim = 0;
  double l1 = 0;
  BoundingBox region;
};

MaskedRegionMetrics masked_region_metrics(const Tensor& x, const Tensor& y,
                                          const LabelMask& mask, double max_val,
                                          const SsimConfig& ssim_cfg = {},
                                          int64_t margin = 8);

double iou(const BoundingBox& a, const BoundingBox& b);

struct Detection {
  BoundingBox box;
  double score = 0;  // in [0,1]
  int64_t image_id = 0;
};

struct GtBox {
  BoundingBox box;
  int64_t image_id = 0;
};

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
};

// Detections sorted by descending score; each greedily matches the
// highest-IoU unmatched ground truth of its image with IoU >= tau.
PrecisionRecall precision_recall(const std::vector<Detection>& dets,
                                 const std::vector<GtBox>& gts, double tau);

// Area under the precision-recall curve, all-point interpolation.
double average_precision(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                         double tau);

// Mean AP over IoU thresholds 0.50 .. 0.95 step 0.05.
double mean_ap(const std::vector<Detection>& dets, const std::vector<GtBox>& gts);

}  // namespace tsgan::metrics
