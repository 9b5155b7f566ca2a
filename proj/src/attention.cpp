#include "tsgan/attention.hpp"

#include <cmath>

namespace tsgan::attn {

using namespace ad;

NodePtr soft_pool(const NodePtr& x, int64_t kernel, int64_t stride) {
  if (x->value.ndim() != 4) throw ShapeError("soft_pool: expected [N,C,H,W]");
  if (x->value.dim(2) < kernel || x->value.dim(3) < kernel)
    throw ShapeError("soft_pool: window larger than input");
  // a 1x1 window is the identity by construction; computing the quotient
  // would round the result within an ulp
  if (kernel == 1 && stride == 1) return x;
  NodePtr e = exp_(x);
  return div(avg_pool2d(mul(x, e), kernel, stride), avg_pool2d(e, kernel, stride));
}

LiaParams LiaParams::create(ParamStore& ps, const std::string& name, int64_t channels,
                            Rng& rng) {
  LiaParams p;
  int64_t compressed = std::max<int64_t>(channels / 4, 1);
  p.compress = Conv2d(ps, name + ".compress", channels, compressed, 1, 1, 0, rng);
  p.down = Conv2d(ps, name + ".down", compressed, compressed, 3, 2, 1, rng);
  p.restore = Conv2d(ps, name + ".restore", compressed, 1, 3, 1, 1, rng);
  p.gate_gain = ps.create(name + ".gate_gain", Tensor({1}, 1.0));
  p.gate_bias = ps.create(name + ".gate_bias", Tensor({1}, 0.0));
  return p;
}

NodePtr lia_forward(const NodePtr& x, const LiaParams& p) {
  if (x->value.ndim() != 4) throw ShapeError("lia_forward: expected [N,C,H,W]");
  int64_t c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);

  NodePtr branch = p.compress(x);
  int64_t bh = branch->value.dim(2), bw = branch->value.dim(3);
  int64_t k = p.softpool_kernel;
  if (bh < k || bw < k) {
    int64_t pad_b = std::max<int64_t>(k - bh, 0);
    int64_t pad_r = std::max<int64_t>(k - bw, 0);
    if (pad_b > bh - 1 || pad_r > bw - 1)
      throw ShapeError("lia_forward: input too small for heatmap branch");
    branch = reflect_pad2d(branch, 0, pad_b, 0, pad_r);
  }
  branch = soft_pool(branch, k, p.softpool_stride);
  branch = p.down(branch);
  NodePtr heat = sigmoid(p.restore(branch));           // [N,1,h',w']
  NodePtr heat_up = bilinear_resize(heat, h, w);        // W, upsampled to input size

  NodePtr ch0 = slice_channels(x, 0, 1);
  NodePtr gate = sigmoid(add(scale_by(ch0, p.gate_gain),
                             broadcast_scalar(p.gate_bias, ch0->value.shape)));

  return mul(mul(x, channel1_bcast(heat_up, c)), channel1_bcast(gate, c));
}

Windowed window_partition(const NodePtr& x, int64_t s) {
  if (s < 1) throw ConfigError("window_partition: window size < 1");
  if (x->value.ndim() != 4) throw ShapeError("window_partition: expected [N,C,H,W]");
  Windowed g;
  g.n = x->value.dim(0);
  g.c = x->value.dim(1);
  g.h = x->value.dim(2);
  g.w = x->value.dim(3);
  g.s = s;
  g.hp = (g.h + s - 1) / s * s;
  g.wp = (g.w + s - 1) / s * s;
  NodePtr xp = x;
  if (g.hp != g.h || g.wp != g.w) {
    int64_t pb = g.hp - g.h, pr = g.wp - g.w;
    if (pb > g.h - 1 || pr > g.w - 1)
      throw ShapeError("window_partition: input too small to reflect-pad");
    xp = reflect_pad2d(xp, 0, pb, 0, pr);
  }
  g.windows = window_gather(xp, s);
  return g;
}

NodePtr window_merge(const Windowed& g, const NodePtr& windows) {
  NodePtr xp = window_scatter(windows, g.n, g.hp, g.wp);
  if (g.hp != g.h || g.wp != g.w) xp = crop2d(xp, 0, 0, g.h, g.w);
  return xp;
}

DwmhParams DwmhParams::create(ParamStore& ps, const std::string& name, int64_t channels,
                              int64_t n_heads, int64_t window, Rng& rng) {
  if (n_heads < 1 || channels % n_heads != 0)
    throw ConfigError("dwmh: channels must be divisible by head count");
  if (window < 1) throw ConfigError("dwmh: window size < 1");
  DwmhParams p;
  p.q = Conv2d(ps, name + ".q", channels, channels, 1, 1, 0, rng);
  p.k = Conv2d(ps, name + ".k", channels, channels, 1, 1, 0, rng);
  p.v = Conv2d(ps, name + ".v", channels, channels, 1, 1, 0, rng);
  p.head_weights = ps.create(name + ".head_weights", Tensor({n_heads}, 1.0));
  p.gamma = ps.create(name + ".gamma", Tensor({1}, 0.0));
  p.n_heads = n_heads;
  p.window = window;
  return p;
}

NodePtr dwmh_forward(const NodePtr& x, const DwmhParams& p) {
  if (x->value.ndim() != 4) throw ShapeError("dwmh_forward: expected [N,C,H,W]");
  int64_t c = x->value.dim(1);
  if (p.n_heads < 1 || c % p.n_heads != 0)
    throw ConfigError("dwmh_forward: channels not divisible by head count");
  int64_t dk = c / p.n_heads;
  int64_t s = p.window, l = s * s;
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Windowed geom = window_partition(x, s);
  NodePtr xp = geom.hp != geom.h || geom.wp != geom.w
                   ? reflect_pad2d(x, 0, geom.hp - geom.h, 0, geom.wp - geom.w)
                   : x;
  NodePtr qw = window_gather(p.q(xp), s);
  NodePtr kw = window_gather(p.k(xp), s);
  NodePtr vw = window_gather(p.v(xp), s);

  int64_t total_windows = geom.n * geom.count();
  std::vector<NodePtr> outs;
  outs.reserve(static_cast<size_t>(total_windows));
  for (int64_t wi = 0; wi < total_windows; ++wi) {
    NodePtr qi = reshape(slice_dim0(qw, wi, wi + 1), {c, l});
    NodePtr ki = reshape(slice_dim0(kw, wi, wi + 1), {c, l});
    NodePtr vi = reshape(slice_dim0(vw, wi, wi + 1), {c, l});
    std::vector<NodePtr> heads;
    heads.reserve(static_cast<size_t>(p.n_heads));
    for (int64_t h = 0; h < p.n_heads; ++h) {
      NodePtr qh = slice_dim0(qi, h * dk, (h + 1) * dk);  // [dk, l]
      NodePtr kh = slice_dim0(ki, h * dk, (h + 1) * dk);
      NodePtr vh = slice_dim0(vi, h * dk, (h + 1) * dk);
      NodePtr attnmat = softmax_rows(smul(matmul(transpose(qh), kh), scale));  // [l, l]
      attnmat = scale_by(attnmat, slice_dim0(p.head_weights, h, h + 1));
      heads.push_back(matmul(vh, transpose(attnmat)));  // [dk, l]
    }
    outs.push_back(reshape(concat_dim0(heads), {1, c, s, s}));
  }
  NodePtr attended = concat_dim0(outs);  // [NW, C, s, s]
  NodePtr merged = window_merge(geom, add(scale_by(attended, p.gamma), geom.windows));
  return merged;
}

}  // namespace tsgan::attn
