#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tsgan/tensor.hpp"

namespace tsgan::ad {

// Reverse-mode autodiff where backward passes are themselves built from graph
// nodes, so gradients of gradients (needed by the WGAN gradient penalty) come
// out of the same machinery.
class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  // Maps the upstream gradient g (same shape as value) to per-input gradient
  // nodes; entries may be null for inputs that do not need a gradient.
  std::function<std::vector<NodePtr>(const std::vector<NodePtr>& inputs, const NodePtr& g)>
      backward;
};

NodePtr constant(Tensor t);
NodePtr leaf(Tensor t);  // trainable parameter / differentiable input

// Computes d(root)/d(wrt_i) for a scalar root. Returned gradients are graph
// nodes, differentiable again. Missing dependence yields a zero tensor.
std::vector<NodePtr> gradients(const NodePtr& root, const std::vector<NodePtr>& wrt);

// Elementwise
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);
NodePtr neg(const NodePtr& x);
NodePtr smul(const NodePtr& x, double c);
NodePtr sadd(const NodePtr& x, double c);
NodePtr exp_(const NodePtr& x);
NodePtr log_(const NodePtr& x);
NodePtr sqrt_(const NodePtr& x);
NodePtr abs_(const NodePtr& x);
NodePtr square(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr tanh_(const NodePtr& x);
NodePtr leaky_relu(const NodePtr& x, double slope);
NodePtr clamp(const NodePtr& x, double lo, double hi);
NodePtr scale_by(const NodePtr& x, const NodePtr& s);  // s: single-element node

// Linear algebra / reshaping
NodePtr matmul(const NodePtr& a, const NodePtr& b);  // [m,k]x[k,n]
NodePtr transpose(const NodePtr& a);                 // [m,n] -> [n,m]
NodePtr reshape(const NodePtr& x, std::vector<int64_t> shape);

// Reductions / broadcasts
NodePtr sum_all(const NodePtr& x);   // -> scalar
NodePtr mean_all(const NodePtr& x);  // -> scalar
NodePtr broadcast_scalar(const NodePtr& s, std::vector<int64_t> shape);
NodePtr row_sum(const NodePtr& x);                 // [R,C] -> [R]
NodePtr row_bcast(const NodePtr& v, int64_t cols); // [R] -> [R,cols]
NodePtr channel_mean(const NodePtr& x);            // [N,C,H,W] -> [C]
NodePtr channel_bcast(const NodePtr& v, int64_t n, int64_t h, int64_t w);
NodePtr spatial_mean(const NodePtr& x);            // [N,C,H,W] -> [N,C]
NodePtr spatial_bcast(const NodePtr& v, int64_t h, int64_t w);
NodePtr channel1_bcast(const NodePtr& w, int64_t c);  // [N,1,H,W] -> [N,C,H,W]
NodePtr channel1_sum(const NodePtr& x);               // [N,C,H,W] -> [N,1,H,W]

// Slicing / concatenation
NodePtr slice_dim0(const NodePtr& x, int64_t a, int64_t b);
NodePtr concat_dim0(const std::vector<NodePtr>& xs);
NodePtr slice_channels(const NodePtr& x, int64_t a, int64_t b);  // [N,C,H,W]
NodePtr concat_channels(const std::vector<NodePtr>& xs);

// Image-shaped ops on [N,C,H,W]
struct ConvGeom {
  int64_t kh, kw, sh, sw, ph, pw;  // zero padding
};
NodePtr im2col(const NodePtr& x, const ConvGeom& g);  // -> [C*kh*kw, N*L]
NodePtr col2im(const NodePtr& cols, const ConvGeom& g, int64_t n, int64_t c, int64_t h,
               int64_t w);
NodePtr cols_to_nchw(const NodePtr& cols, int64_t n, int64_t ho, int64_t wo);  // [C, N*L]
NodePtr nchw_to_cols(const NodePtr& x);
NodePtr avg_pool2d(const NodePtr& x, int64_t k, int64_t s);
NodePtr avg_unpool2d(const NodePtr& y, int64_t k, int64_t s, int64_t h, int64_t w);
NodePtr upsample_nearest2(const NodePtr& x);
NodePtr downsum_nearest2(const NodePtr& x);
NodePtr bilinear_resize(const NodePtr& x, int64_t th, int64_t tw);
NodePtr bilinear_resize_adjoint(const NodePtr& y, int64_t sh, int64_t sw);
NodePtr reflect_pad2d(const NodePtr& x, int64_t pt, int64_t pb, int64_t pl, int64_t pr);
NodePtr reflect_pad2d_adjoint(const NodePtr& y, int64_t pt, int64_t pb, int64_t pl, int64_t pr);
NodePtr crop2d(const NodePtr& x, int64_t top, int64_t left, int64_t h, int64_t w);
NodePtr uncrop2d(const NodePtr& y, int64_t top, int64_t left, int64_t h, int64_t w);
NodePtr window_gather(const NodePtr& x, int64_t s);   // [N,C,H,W] -> [N*nw,C,s,s], H,W % s == 0
NodePtr window_scatter(const NodePtr& w, int64_t n, int64_t h, int64_t wid);

// Composites
NodePtr conv2d(const NodePtr& x, const NodePtr& weight2d, const NodePtr& bias,
               const ConvGeom& g);  // weight2d [Cout, Cin*kh*kw], bias [Cout] or null
NodePtr softmax_rows(const NodePtr& x);  // [R,C], stable, rows sum to 1
NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta, double eps);
NodePtr instance_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta, double eps);

inline ConvGeom conv_geom(int64_t k, int64_t stride, int64_t pad) {
  return ConvGeom{k, k, stride, stride, pad, pad};
}
inline int64_t conv_out(int64_t dim, int64_t k, int64_t s, int64_t p) {
  return (dim + 2 * p - k) / s + 1;
}

}  // namespace tsgan::ad
