#pragma once

#include "tsgan/nn.hpp"

namespace tsgan::attn {

using ad::NodePtr;
using nn::Conv2d;
using nn::ParamStore;

// Exponentially weighted pooling: AvgPool(x * e^x) / AvgPool(e^x).
NodePtr soft_pool(const NodePtr& x, int64_t kernel, int64_t stride);

struct LiaParams {
  Conv2d compress;  // 1x1, C -> max(C/4,1)
  Conv2d down;      // 3x3, stride 2
  Conv2d restore;   // 3x3 -> 1 channel
  NodePtr gate_gain;  // [1], init 1
  NodePtr gate_bias;  // [1], init 0
  int64_t softpool_kernel = 7;
  int64_t softpool_stride = 3;

  static LiaParams create(ParamStore& ps, const std::string& name, int64_t channels,
                          Rng& rng);
};

// Output = X (.) W (.) g with the heatmap W from the soft-pooled conv branch
// and the gate g from a sigmoid over channel 0.
NodePtr lia_forward(const NodePtr& x, const LiaParams& p);

// Reflect-pads to a multiple of s and rearranges into [N*nw, C, s, s] windows
// in row-major window order. window_merge is the exact inverse.
struct Windowed {
  NodePtr windows;
  int64_t n = 0, c = 0, h = 0, w = 0;    // original dims
  int64_t hp = 0, wp = 0, s = 0;          // padded dims, window size
  int64_t count() const { return (hp / s) * (wp / s); }
};

Windowed window_partition(const NodePtr& x, int64_t s);
NodePtr window_merge(const Windowed& geom, const NodePtr& windows);

struct DwmhParams {
  Conv2d q, k, v;        // 1x1 projections
  NodePtr head_weights;  // [n_heads], learnable
  NodePtr gamma;         // [1], init 0
  int64_t n_heads = 0;
  int64_t window = 0;

  static DwmhParams create(ParamStore& ps, const std::string& name, int64_t channels,
                           int64_t n_heads, int64_t window, Rng& rng);
};

NodePtr dwmh_forward(const NodePtr& x, const DwmhParams& p);

}  // namespace tsgan::attn
