#include "tsgan/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tsgan::metrics {

namespace {

// Accepts [H,W] or [1,H,W] or [1,1,H,W]; returns (H, W, data pointer offset 0).
std::pair<int64_t, int64_t> plane_dims(const Tensor& img, const char* where) {
  if (img.ndim() == 2) return {img.dim(0), img.dim(1)};
  if (img.ndim() == 3 && img.dim(0) == 1) return {img.dim(1), img.dim(2)};
  if (img.ndim() == 4 && img.dim(0) == 1 && img.dim(1) == 1) return {img.dim(2), img.dim(3)};
  throw ShapeError(std::string(where) + ": expected a single-channel image, got " +
                   img.shape_str());
}

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
  if (t.ndim() != 2) throw ShapeError("expected a matrix, got " + t.shape_str());
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(t.data.data(), t.dim(0), t.dim(1));
}

// Symmetric PSD square root; eigenvalues below 1e-10 clamped to 0.
Mat psd_sqrt(const Mat& m) {
  Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("matrix square root failed to converge");
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) ev[i] = ev[i] < 1e-10 ? 0.0 : std::sqrt(ev[i]);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<double> window_weights(int64_t k, double sigma) {
  std::vector<double> w(static_cast<size_t>(k * k));
  double total = 0;
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j) {
      double di = static_cast<double>(i) - static_cast<double>(k - 1) / 2.0;
      double dj = static_cast<double>(j) - static_cast<double>(k - 1) / 2.0;
      double v = sigma > 0 ? std::exp(-(di * di + dj * dj) / (2 * sigma * sigma)) : 1.0;
      w[static_cast<size_t>(i * k + j)] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

EmbeddingSet embed(const std::vector<Tensor>& images, const FeatureNetwork& phi,
                   int64_t input_size) {
  if (images.empty()) throw EmptyInput("embed: no images");
  int64_t d = phi.embed_dim();
  Tensor rows({static_cast<int64_t>(images.size()), d});
  for (size_t i = 0; i < images.size(); ++i) {
    auto [h, w] = plane_dims(images[i], "embed");
    Tensor img4({1, 1, h, w}, images[i].data);
    ad::NodePtr x = ad::constant(std::move(img4));
    if (h != input_size || w != input_size)
      x = ad::bilinear_resize(x, input_size, input_size);
    ad::NodePtr feat = phi.forward(x).back();
    ad::NodePtr pooled = ad::spatial_mean(feat);  // [1, d]
    if (pooled->value.numel() != d) throw ShapeError("embed: unexpected embedding width");
    for (int64_t j = 0; j < d; ++j) rows[static_cast<int64_t>(i) * d + j] = pooled->value[j];
  }
  return {std::move(rows)};
}

GaussianStats gaussian_stats(const EmbeddingSet& e) {
  int64_t n = e.rows.dim(0), d = e.rows.dim(1);
  if (n < 2) throw InsufficientSamples("gaussian_stats: need at least 2 rows, got " +
                                       std::to_string(n));
  GaussianStats st{Tensor({d}, 0.0), Tensor({d, d}, 0.0)};
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) st.mu[j] += e.rows[i * d + j];
  for (int64_t j = 0; j < d; ++j) st.mu[j] /= static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < d; ++a) {
      double da = e.rows[i * d + a] - st.mu[a];
      for (int64_t b = 0; b < d; ++b)
        st.sigma[a * d + b] += da * (e.rows[i * d + b] - st.mu[b]);
    }
  for (auto& v : st.sigma.data) v /= static_cast<double>(n - 1);
  // enforce exact symmetry against accumulation order effects
  for (int64_t a = 0; a < d; ++a)
    for (int64_t b = a + 1; b < d; ++b) {
      double m = 0.5 * (st.sigma[a * d + b] + st.sigma[b * d + a]);
      st.sigma[a * d + b] = st.sigma[b * d + a] = m;
    }
  return st;
}

double trace_sqrt_product(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw ShapeError("trace_sqrt_product: dimension mismatch");
  Mat ah = psd_sqrt(to_eigen(a));
  return psd_sqrt(ah * to_eigen(b) * ah).trace();
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.mu.shape != b.mu.shape || a.sigma.shape != b.sigma.shape)
    throw ShapeError("fid: dimension mismatch");
  double mean_term = 0;
  for (int64_t i = 0; i < a.mu.numel(); ++i) {
    double d = a.mu[i] - b.mu[i];
    mean_term += d * d;
  }
  double tr_a = 0, tr_b = 0;
  int64_t d = a.mu.numel();
  for (int64_t i = 0; i < d; ++i) {
    tr_a += a.sigma[i * d + i];
    tr_b += b.sigma[i * d + i];
  }
  double v = mean_term + tr_a + tr_b - 2.0 * trace_sqrt_product(a.sigma, b.sigma);
  if (!std::isfinite(v)) throw NumericError("fid: non-finite result");
  return std::max(v, 0.0);
}

double psnr(const Tensor& x, const Tensor& y, double max_val) {
  require_same_shape(x, y, "psnr");
  if (max_val <= 0) throw ConfigError("psnr: max_val must be positive");
  double mse = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = x[i] - y[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
  require_same_shape(x, y, "ssim");
  auto [h, w] = plane_dims(x, "ssim");
  int64_t k = cfg.window;
  if (h < k || w < k)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than window " + std::to_string(k));
  double c1 = 0.01 * cfg.dynamic_range, c2 = 0.03 * cfg.dynamic_range;
  c1 *= c1;
  c2 *= c2;
  std::vector<double> wt = window_weights(k, cfg.sigma);

  double total = 0;
  int64_t count = 0;
  for (int64_t oy = 0; oy + k <= h; ++oy)
    for (int64_t ox = 0; ox + k <= w; ++ox) {
      double mx = 0, my = 0;
      for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
          double wv = wt[static_cast<size_t>(i * k + j)];
          mx += wv * x[(oy + i) * w + ox + j];
          my += wv * y[(oy + i) * w + ox + j];
        }
      double vx = 0, vy = 0, cov = 0;
      for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
          double wv = wt[static_cast<size_t>(i * k + j)];
          double dx = x[(oy + i) * w + ox + j] - mx;
          double dy = y[(oy + i) * w + ox + j] - my;
          vx += wv * dx * dx;
          vy += wv * dy * dy;
          cov += wv * dx * dy;
        }
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

BoundingBox nodule_region(const LabelMask& mask, int64_t margin) {
  int64_t x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int64_t y = 0; y < mask.height; ++y)
    for (int64_t x = 0; x < mask.width; ++x)
      if (mask.at(y, x) == kNoduleClass) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw NoNoduleRegion("mask contains no nodule pixels");
  x0 = std::max<int64_t>(0, x0 - margin);
  y0 = std::max<int64_t>(0, y0 - margin);
  x1 = std::min(mask.width - 1, x1 + margin);
  y1 = std::min(mask.height - 1, y1 + margin);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Tensor crop_image(const Tensor& img, const BoundingBox& box) {
  auto [h, w] = plane_dims(img, "crop_image");
  if (box.x < 0 || box.y < 0 || box.x + box.w > w || box.y + box.h > h || box.w < 1 ||
      box.h < 1)
    throw ShapeError("crop_image: box outside image bounds");
  Tensor out({box.h, box.w});
  for (int64_t y = 0; y < box.h; ++y)
    for (int64_t x = 0; x < box.w; ++x)
      out[y * box.w + x] = img[(box.y + y) * w + box.x + x];
  return out;
}

MaskedRegionMetrics masked_region_metrics(const Tensor& x, const Tensor& y,
                                          const LabelMask& mask, double max_val,
                                          const SsimConfig& ssim_cfg, int64_t margin) {
  auto [h, w] = plane_dims(x, "masked_region_metrics");
  if (h != mask.height || w != mask.width)
    throw ShapeError("masked_region_metrics: mask dims do not match image dims");
  MaskedRegionMetrics out;
  out.region = nodule_region(mask, margin);
  Tensor cx = crop_image(x, out.region);
  Tensor cy = crop_image(y, out.region);
  out.psnr = psnr(cx, cy, max_val);
  SsimConfig cfg = ssim_cfg;
  cfg.window = std::min({cfg.window, out.region.w, out.region.h});
  out.ssim = ssim(cx, cy, cfg);
  double l1 = 0;
  for (int64_t i = 0; i < cx.numel(); ++i) l1 += std::abs(cx[i] - cy[i]);
  out.l1 = l1 / static_cast<double>(cx.numel());
  return out;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  int64_t ix0 = std::max(a.x, b.x), iy0 = std::max(a.y, b.y);
  int64_t ix1 = std::min(a.x + a.w, b.x + b.w), iy1 = std::min(a.y + a.h, b.y + b.h);
  double inter = static_cast<double>(std::max<int64_t>(0, ix1 - ix0)) *
                 static_cast<double>(std::max<int64_t>(0, iy1 - iy0));
  double uni = static_cast<double>(a.w) * static_cast<double>(a.h) +
               static_cast<double>(b.w) * static_cast<double>(b.h) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

// For each detection in descending score order: 1 if it matched a GT, else 0.
std::vector<int> greedy_matches(const std::vector<Detection>& dets,
                                const std::vector<GtBox>& gts, double tau,
                                std::vector<size_t>* order_out) {
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
  std::vector<bool> gt_used(gts.size(), false);
  std::vector<int> matched(dets.size(), 0);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const Detection& det = dets[order[oi]];
    double best = -1;
    size_t best_gt = gts.size();
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].image_id != det.image_id) continue;
      double v = iou(det.box, gts[g].box);
      if (v >= tau && v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt < gts.size()) {
      gt_used[best_gt] = true;
      matched[oi] = 1;
    }
  }
  if (order_out) *order_out = order;
  return matched;
}

}  // namespace

PrecisionRecall precision_recall(const std::vector<Detection>& dets,
                                 const std::vector<GtBox>& gts, double tau) {
  if (tau <= 0 || tau > 1) throw ConfigError("precision_recall: tau must be in (0,1]");
  std::vector<int> matched = greedy_matches(dets, gts, tau, nullptr);
  int64_t tp = std::accumulate(matched.begin(), matched.end(), int64_t{0});
  int64_t fp = static_cast<int64_t>(matched.size()) - tp;
  int64_t fn = static_cast<int64_t>(gts.size()) - tp;
  PrecisionRecall pr;
  pr.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  pr.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return pr;
}

double average_precision(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                         double tau) {
  if (tau <= 0 || tau > 1) throw ConfigError("average_precision: tau must be in (0,1]");
  if (gts.empty() || dets.empty()) return 0.0;
  std::vector<int> matched = greedy_matches(dets, gts, tau, nullptr);

  std::vector<double> prec(matched.size()), rec(matched.size());
  int64_t tp = 0;
  for (size_t i = 0; i < matched.size(); ++i) {
    tp += matched[i];
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(tp) / static_cast<double>(gts.size());
  }
  // precision envelope: monotone non-increasing from the right
  for (size_t i = prec.size() - 1; i-- > 0;) prec[i] = std::max(prec[i], prec[i + 1]);

  double ap = 0, prev_rec = 0;
  for (size_t i = 0; i < prec.size(); ++i) {
    ap += (rec[i] - prev_rec) * prec[i];
    prev_rec = rec[i];
  }
  return ap;
}

double mean_ap(const std::vector<Detection>& dets, const std::vector<GtBox>& gts) {
  double total = 0;
  for (int k = 0; k < 10; ++k) {
    double tau = static_cast<double>(50 + 5 * k) / 100.0;  // exact 0.50 .. 0.95 grid
    total += average_precision(dets, gts, tau);
  }
  return total / 10.0;
}

}  // namespace tsgan::metrics
