#include "tsgan/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace tsgan::ad {

namespace {

using BackwardFn =
    std::function<std::vector<NodePtr>(const std::vector<NodePtr>&, const NodePtr&)>;

NodePtr make_op(Tensor value, std::vector<NodePtr> inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in && in->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward = std::move(backward);
  return n;
}

using MatC = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>;
using Mat =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_nchw(const NodePtr& x, const char* op) {
  if (x->value.ndim() != 4) throw ShapeError(std::string(op) + ": expected 4-D [N,C,H,W]");
}

NodePtr embed_dim0(const NodePtr& g, int64_t at, int64_t total);
NodePtr embed_channels(const NodePtr& g, int64_t at, int64_t total);

}  // namespace

NodePtr constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

NodePtr leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return n;
}

std::vector<NodePtr> gradients(const NodePtr& root, const std::vector<NodePtr>& wrt) {
  if (root->value.numel() != 1) throw ShapeError("gradients: root must be a scalar");

  // Post-order over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  if (root->requires_grad) stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* child = node->inputs[idx].get();
      ++idx;
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, NodePtr> grad;
  grad[root.get()] = constant(Tensor(root->value.shape, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto git = grad.find(node);
    if (git == grad.end() || !node->backward) continue;
    std::vector<NodePtr> igs = node->backward(node->inputs, git->second);
    for (size_t i = 0; i < igs.size(); ++i) {
      const NodePtr& in = node->inputs[i];
      if (!in || !in->requires_grad || !igs[i]) continue;
      auto cur = grad.find(in.get());
      if (cur == grad.end())
        grad[in.get()] = igs[i];
      else
        cur->second = add(cur->second, igs[i]);
    }
  }

  std::vector<NodePtr> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = grad.find(w.get());
    out.push_back(it != grad.end() ? it->second : constant(Tensor(w->value.shape, 0.0)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor v(a->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] + b->value[i];
  return make_op(std::move(v), {a, b},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{g, g};
                 });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor v(a->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] - b->value[i];
  return make_op(std::move(v), {a, b},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{g, neg(g)};
                 });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor v(a->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] * b->value[i];
  return make_op(std::move(v), {a, b},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   return std::vector<NodePtr>{mul(g, in[1]), mul(g, in[0])};
                 });
}

NodePtr div(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "div");
  Tensor v(a->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] / b->value[i];
  return make_op(std::move(v), {a, b},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   NodePtr ga = div(g, in[1]);
                   NodePtr gb = neg(mul(ga, div(in[0], in[1])));
                   return std::vector<NodePtr>{ga, gb};
                 });
}

NodePtr neg(const NodePtr& x) { return smul(x, -1.0); }

NodePtr smul(const NodePtr& x, double c) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = x->value[i] * c;
  return make_op(std::move(v), {x},
                 [c](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{smul(g, c)};
                 });
}

NodePtr sadd(const NodePtr& x, double c) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = x->value[i] + c;
  return make_op(std::move(v), {x},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{g};
                 });
}

NodePtr exp_(const NodePtr& x) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::exp(x->value[i]);
  return make_op(std::move(v), {x},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   return std::vector<NodePtr>{mul(g, exp_(in[0]))};
                 });
}

NodePtr log_(const NodePtr& x) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::log(x->value[i]);
  return make_op(std::move(v), {x},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   return std::vector<NodePtr>{div(g, in[0])};
                 });
}

NodePtr sqrt_(const NodePtr& x) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::sqrt(x->value[i]);
  return make_op(std::move(v), {x},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   return std::vector<NodePtr>{div(g, smul(sqrt_(in[0]), 2.0))};
                 });
}

NodePtr abs_(const NodePtr& x) {
  Tensor v(x->value.shape);
  Tensor sign(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) {
    v[i] = std::abs(x->value[i]);
    sign[i] = x->value[i] > 0 ? 1.0 : (x->value[i] < 0 ? -1.0 : 0.0);
  }
  NodePtr mask = constant(std::move(sign));
  return make_op(std::move(v), {x},
                 [mask](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{mul(g, mask)};
                 });
}

NodePtr square(const NodePtr& x) { return mul(x, x); }

NodePtr sigmoid(const NodePtr& x) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  return make_op(std::move(v), {x},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   NodePtr y = sigmoid(in[0]);
                   return std::vector<NodePtr>{mul(g, mul(y, sadd(neg(y), 1.0)))};
                 });
}

NodePtr tanh_(const NodePtr& x) {
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::tanh(x->value[i]);
  return make_op(std::move(v), {x},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   NodePtr y = tanh_(in[0]);
                   return std::vector<NodePtr>{mul(g, sadd(neg(square(y)), 1.0))};
                 });
}

NodePtr leaky_relu(const NodePtr& x, double slope) {
  Tensor v(x->value.shape);
  Tensor m(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) {
    bool pos = x->value[i] > 0;
    v[i] = pos ? x->value[i] : slope * x->value[i];
    m[i] = pos ? 1.0 : slope;
  }
  NodePtr mask = constant(std::move(m));
  return make_op(std::move(v), {x},
                 [mask](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{mul(g, mask)};
                 });
}

NodePtr clamp(const NodePtr& x, double lo, double hi) {
  Tensor v(x->value.shape);
  Tensor m(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) {
    double t = x->value[i];
    v[i] = std::min(std::max(t, lo), hi);
    m[i] = (t > lo && t < hi) ? 1.0 : 0.0;
  }
  NodePtr mask = constant(std::move(m));
  return make_op(std::move(v), {x},
                 [mask](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{mul(g, mask)};
                 });
}

NodePtr scale_by(const NodePtr& x, const NodePtr& s) {
  if (s->value.numel() != 1) throw ShapeError("scale_by: scale must have one element");
  double c = s->value[0];
  Tensor v(x->value.shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = x->value[i] * c;
  return make_op(std::move(v), {x, s},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   NodePtr gx = scale_by(g, in[1]);
                   NodePtr gs = reshape(sum_all(mul(g, in[0])), in[1]->value.shape);
                   return std::vector<NodePtr>{gx, gs};
                 });
}

// ---------------------------------------------------------------------------
// Linear algebra

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul: " + a->value.shape_str() + " x " + b->value.shape_str());
  int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor v({m, n});
  MatC am(a->value.data.data(), m, k);
  MatC bm(b->value.data.data(), k, n);
  Mat vm(v.data.data(), m, n);
  vm.noalias() = am * bm;
  return make_op(std::move(v), {a, b},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   return std::vector<NodePtr>{matmul(g, transpose(in[1])),
                                               matmul(transpose(in[0]), g)};
                 });
}

NodePtr transpose(const NodePtr& a) {
  if (a->value.ndim() != 2) throw ShapeError("transpose: expected 2-D");
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Tensor v({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) v.data[j * m + i] = a->value.data[i * n + j];
  return make_op(std::move(v), {a},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{transpose(g)};
                 });
}

NodePtr reshape(const NodePtr& x, std::vector<int64_t> shape) {
  if (Tensor::numel_of(shape) != x->value.numel())
    throw ShapeError("reshape: element count mismatch");
  Tensor v(shape, x->value.data);
  std::vector<int64_t> orig = x->value.shape;
  return make_op(std::move(v), {x},
                 [orig](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{reshape(g, orig)};
                 });
}

// ---------------------------------------------------------------------------
// Reductions / broadcasts

NodePtr sum_all(const NodePtr& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  std::vector<int64_t> orig = x->value.shape;
  return make_op(Tensor::scalar(s), {x},
                 [orig](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{broadcast_scalar(g, orig)};
                 });
}

NodePtr mean_all(const NodePtr& x) {
  return smul(sum_all(x), 1.0 / static_cast<double>(x->value.numel()));
}

NodePtr broadcast_scalar(const NodePtr& s, std::vector<int64_t> shape) {
  if (s->value.numel() != 1) throw ShapeError("broadcast_scalar: expected one element");
  Tensor v(shape, s->value[0]);
  return make_op(std::move(v), {s},
                 [](const std::vector<NodePtr>& in, const NodePtr& g) {
                   return std::vector<NodePtr>{reshape(sum_all(g), in[0]->value.shape)};
                 });
}

NodePtr row_sum(const NodePtr& x) {
  if (x->value.ndim() != 2) throw ShapeError("row_sum: expected 2-D");
  int64_t r = x->value.dim(0), c = x->value.dim(1);
  Tensor v({r});
  for (int64_t i = 0; i < r; ++i) {
    double s = 0;
    for (int64_t j = 0; j < c; ++j) s += x->value.data[i * c + j];
    v[i] = s;
  }
  return make_op(std::move(v), {x},
                 [c](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{row_bcast(g, c)};
                 });
}

NodePtr row_bcast(const NodePtr& v, int64_t cols) {
  if (v->value.ndim() != 1) throw ShapeError("row_bcast: expected 1-D");
  int64_t r = v->value.dim(0);
  Tensor out({r, cols});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < cols; ++j) out.data[i * cols + j] = v->value[i];
  return make_op(std::move(out), {v},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{row_sum(g)};
                 });
}

NodePtr channel_mean(const NodePtr& x) {
  require_nchw(x, "channel_mean");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  int64_t hw = h * w;
  Tensor v({c});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* p = x->value.data.data() + (ni * c + ci) * hw;
      double s = 0;
      for (int64_t i = 0; i < hw; ++i) s += p[i];
      v[ci] += s;
    }
  double inv = 1.0 / static_cast<double>(n * hw);
  for (int64_t ci = 0; ci < c; ++ci) v[ci] *= inv;
  return make_op(std::move(v), {x},
                 [n, h, w, inv](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{smul(channel_bcast(g, n, h, w), inv)};
                 });
}

NodePtr channel_bcast(const NodePtr& v, int64_t n, int64_t h, int64_t w) {
  if (v->value.ndim() != 1) throw ShapeError("channel_bcast: expected 1-D");
  int64_t c = v->value.dim(0), hw = h * w;
  Tensor out({n, c, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      double* p = out.data.data() + (ni * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) p[i] = v->value[ci];
    }
  double scale = static_cast<double>(n * hw);
  return make_op(std::move(out), {v},
                 [scale](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{smul(channel_mean(g), scale)};
                 });
}

NodePtr spatial_mean(const NodePtr& x) {
  require_nchw(x, "spatial_mean");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  int64_t hw = h * w;
  Tensor v({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* p = x->value.data.data() + i * hw;
    double s = 0;
    for (int64_t k = 0; k < hw; ++k) s += p[k];
    v[static_cast<size_t>(i)] = s / static_cast<double>(hw);
  }
  return make_op(std::move(v), {x},
                 [h, w, hw](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{smul(spatial_bcast(g, h, w), 1.0 / hw)};
                 });
}

NodePtr spatial_bcast(const NodePtr& v, int64_t h, int64_t w) {
  if (v->value.ndim() != 2) throw ShapeError("spatial_bcast: expected 2-D [N,C]");
  int64_t n = v->value.dim(0), c = v->value.dim(1), hw = h * w;
  Tensor out({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i) {
    double* p = out.data.data() + i * hw;
    for (int64_t k = 0; k < hw; ++k) p[k] = v->value[static_cast<size_t>(i)];
  }
  return make_op(std::move(out), {v},
                 [hw](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{smul(spatial_mean(g), static_cast<double>(hw))};
                 });
}

NodePtr channel1_bcast(const NodePtr& w, int64_t c) {
  require_nchw(w, "channel1_bcast");
  if (w->value.dim(1) != 1) throw ShapeError("channel1_bcast: expected single channel");
  int64_t n = w->value.dim(0), h = w->value.dim(2), wd = w->value.dim(3);
  int64_t hw = h * wd;
  Tensor out({n, c, h, wd});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci)
      std::copy_n(w->value.data.data() + ni * hw, hw,
                  out.data.data() + (ni * c + ci) * hw);
  return make_op(std::move(out), {w},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{channel1_sum(g)};
                 });
}

NodePtr channel1_sum(const NodePtr& x) {
  require_nchw(x, "channel1_sum");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  int64_t hw = h * w;
  Tensor out({n, 1, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* p = x->value.data.data() + (ni * c + ci) * hw;
      double* q = out.data.data() + ni * hw;
      for (int64_t i = 0; i < hw; ++i) q[i] += p[i];
    }
  return make_op(std::move(out), {x},
                 [c](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{channel1_bcast(g, c)};
                 });
}

// ---------------------------------------------------------------------------
// Slicing / concatenation

namespace {

NodePtr embed_dim0(const NodePtr& g, int64_t at, int64_t total) {
  int64_t rows = g->value.dim(0);
  int64_t stride = g->value.numel() / std::max<int64_t>(rows, 1);
  std::vector<int64_t> shape = g->value.shape;
  shape[0] = total;
  Tensor out(shape);
  std::copy_n(g->value.data.data(), rows * stride, out.data.data() + at * stride);
  return make_op(std::move(out), {g},
                 [at, rows](const std::vector<NodePtr>&, const NodePtr& gg) {
                   return std::vector<NodePtr>{slice_dim0(gg, at, at + rows)};
                 });
}

NodePtr embed_channels(const NodePtr& g, int64_t at, int64_t total) {
  int64_t n = g->value.dim(0), c = g->value.dim(1), h = g->value.dim(2), w = g->value.dim(3);
  int64_t hw = h * w;
  Tensor out({n, total, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    std::copy_n(g->value.data.data() + ni * c * hw, c * hw,
                out.data.data() + (ni * total + at) * hw);
  return make_op(std::move(out), {g},
                 [at, c](const std::vector<NodePtr>&, const NodePtr& gg) {
                   return std::vector<NodePtr>{slice_channels(gg, at, at + c)};
                 });
}

}  // namespace

NodePtr slice_dim0(const NodePtr& x, int64_t a, int64_t b) {
  if (x->value.ndim() < 1 || a < 0 || b > x->value.dim(0) || a >= b)
    throw ShapeError("slice_dim0: bad range");
  int64_t total = x->value.dim(0);
  int64_t stride = x->value.numel() / total;
  std::vector<int64_t> shape = x->value.shape;
  shape[0] = b - a;
  Tensor out(shape);
  std::copy_n(x->value.data.data() + a * stride, (b - a) * stride, out.data.data());
  return make_op(std::move(out), {x},
                 [a, total](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{embed_dim0(g, a, total)};
                 });
}

NodePtr concat_dim0(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw ShapeError("concat_dim0: empty input");
  std::vector<int64_t> shape = xs[0]->value.shape;
  int64_t rows = 0;
  for (const auto& x : xs) {
    auto s = x->value.shape;
    s[0] = shape[0];
    if (s != shape) throw ShapeError("concat_dim0: incompatible shapes");
    rows += x->value.dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  std::vector<int64_t> offsets;
  int64_t at = 0;
  for (const auto& x : xs) {
    offsets.push_back(at);
    std::copy(x->value.data.begin(), x->value.data.end(),
              out.data.begin() + at * (out.numel() / rows));
    at += x->value.dim(0);
  }
  return make_op(std::move(out), xs,
                 [offsets](const std::vector<NodePtr>& in, const NodePtr& g) {
                   std::vector<NodePtr> gs;
                   for (size_t i = 0; i < in.size(); ++i)
                     gs.push_back(
                         slice_dim0(g, offsets[i], offsets[i] + in[i]->value.dim(0)));
                   return gs;
                 });
}

NodePtr slice_channels(const NodePtr& x, int64_t a, int64_t b) {
  require_nchw(x, "slice_channels");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (a < 0 || b > c || a >= b) throw ShapeError("slice_channels: bad range");
  int64_t hw = h * w;
  Tensor out({n, b - a, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    std::copy_n(x->value.data.data() + (ni * c + a) * hw, (b - a) * hw,
                out.data.data() + ni * (b - a) * hw);
  return make_op(std::move(out), {x},
                 [a, c](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{embed_channels(g, a, c)};
                 });
}

NodePtr concat_channels(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input");
  int64_t n = xs[0]->value.dim(0), h = xs[0]->value.dim(2), w = xs[0]->value.dim(3);
  int64_t ctot = 0;
  for (const auto& x : xs) {
    require_nchw(x, "concat_channels");
    if (x->value.dim(0) != n || x->value.dim(2) != h || x->value.dim(3) != w)
      throw ShapeError("concat_channels: incompatible shapes");
    ctot += x->value.dim(1);
  }
  int64_t hw = h * w;
  Tensor out({n, ctot, h, w});
  std::vector<int64_t> offsets;
  int64_t at = 0;
  for (const auto& x : xs) {
    offsets.push_back(at);
    int64_t c = x->value.dim(1);
    for (int64_t ni = 0; ni < n; ++ni)
      std::copy_n(x->value.data.data() + ni * c * hw, c * hw,
                  out.data.data() + (ni * ctot + at) * hw);
    at += c;
  }
  return make_op(std::move(out), xs,
                 [offsets](const std::vector<NodePtr>& in, const NodePtr& g) {
                   std::vector<NodePtr> gs;
                   for (size_t i = 0; i < in.size(); ++i)
                     gs.push_back(slice_channels(g, offsets[i],
                                                 offsets[i] + in[i]->value.dim(1)));
                   return gs;
                 });
}

// ---------------------------------------------------------------------------
// Image ops

NodePtr im2col(const NodePtr& x, const ConvGeom& g) {
  require_nchw(x, "im2col");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  int64_t ho = conv_out(h, g.kh, g.sh, g.ph), wo = conv_out(w, g.kw, g.sw, g.pw);
  if (ho < 1 || wo < 1) throw ShapeError("im2col: empty output grid");
  int64_t l = ho * wo;
  Tensor out({c * g.kh * g.kw, n * l});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* src = x->value.data.data() + (ni * c + ci) * h * w;
      for (int64_t dy = 0; dy < g.kh; ++dy)
        for (int64_t dx = 0; dx < g.kw; ++dx) {
          double* dst = out.data.data() + ((ci * g.kh + dy) * g.kw + dx) * (n * l) + ni * l;
          for (int64_t oy = 0; oy < ho; ++oy) {
            int64_t iy = oy * g.sh - g.ph + dy;
            if (iy < 0 || iy >= h) continue;
            for (int64_t ox = 0; ox < wo; ++ox) {
              int64_t ix = ox * g.sw - g.pw + dx;
              if (ix < 0 || ix >= w) continue;
              dst[oy * wo + ox] = src[iy * w + ix];
            }
          }
        }
    }
  ConvGeom geom = g;
  return make_op(std::move(out), {x},
                 [geom, n, c, h, w](const std::vector<NodePtr>&, const NodePtr& gg) {
                   return std::vector<NodePtr>{col2im(gg, geom, n, c, h, w)};
                 });
}

NodePtr col2im(const NodePtr& cols, const ConvGeom& g, int64_t n, int64_t c, int64_t h,
               int64_t w) {
  int64_t ho = conv_out(h, g.kh, g.sh, g.ph), wo = conv_out(w, g.kw, g.sw, g.pw);
  int64_t l = ho * wo;
  if (cols->value.ndim() != 2 || cols->value.dim(0) != c * g.kh * g.kw ||
      cols->value.dim(1) != n * l)
    throw ShapeError("col2im: shape mismatch");
  Tensor out({n, c, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      double* dst = out.data.data() + (ni * c + ci) * h * w;
      for (int64_t dy = 0; dy < g.kh; ++dy)
        for (int64_t dx = 0; dx < g.kw; ++dx) {
          const double* src =
              cols->value.data.data() + ((ci * g.kh + dy) * g.kw + dx) * (n * l) + ni * l;
          for (int64_t oy = 0; oy < ho; ++oy) {
            int64_t iy = oy * g.sh - g.ph + dy;
            if (iy < 0 || iy >= h) continue;
            for (int64_t ox = 0; ox < wo; ++ox) {
              int64_t ix = ox * g.sw - g.pw + dx;
              if (ix < 0 || ix >= w) continue;
              dst[iy * w + ix] += src[oy * wo + ox];
            }
          }
        }
    }
  ConvGeom geom = g;
  return make_op(std::move(out), {cols},
                 [geom](const std::vector<NodePtr>&, const NodePtr& gg) {
                   return std::vector<NodePtr>{im2col(gg, geom)};
                 });
}

NodePtr cols_to_nchw(const NodePtr& cols, int64_t n, int64_t ho, int64_t wo) {
  if (cols->value.ndim() != 2 || cols->value.dim(1) != n * ho * wo)
    throw ShapeError("cols_to_nchw: shape mismatch");
  int64_t c = cols->value.dim(0), l = ho * wo;
  Tensor out({n, c, ho, wo});
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ni = 0; ni < n; ++ni)
      std::copy_n(cols->value.data.data() + ci * (n * l) + ni * l, l,
                  out.data.data() + (ni * c + ci) * l);
  return make_op(std::move(out), {cols},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{nchw_to_cols(g)};
                 });
}

NodePtr nchw_to_cols(const NodePtr& x) {
  require_nchw(x, "nchw_to_cols");
  int64_t n = x->value.dim(0), c = x->value.dim(1), l = x->value.dim(2) * x->value.dim(3);
  int64_t ho = x->value.dim(2), wo = x->value.dim(3);
  Tensor out({c, n * l});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci)
      std::copy_n(x->value.data.data() + (ni * c + ci) * l, l,
                  out.data.data() + ci * (n * l) + ni * l);
  return make_op(std::move(out), {x},
                 [n, ho, wo](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{cols_to_nchw(g, n, ho, wo)};
                 });
}

NodePtr avg_pool2d(const NodePtr& x, int64_t k, int64_t s) {
  require_nchw(x, "avg_pool2d");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  int64_t ho = (h - k) / s + 1, wo = (w - k) / s + 1;
  if (h < k || w < k) throw ShapeError("avg_pool2d: window larger than input");
  double inv = 1.0 / static_cast<double>(k * k);
  Tensor out({n, c, ho, wo});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = x->value.data.data() + i * h * w;
    double* dst = out.data.data() + i * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        double acc = 0;
        for (int64_t dy = 0; dy < k; ++dy)
          for (int64_t dx = 0; dx < k; ++dx) acc += src[(oy * s + dy) * w + ox * s + dx];
        dst[oy * wo + ox] = acc * inv;
      }
  }
  return make_op(std::move(out), {x},
                 [k, s, h, w](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{avg_unpool2d(g, k, s, h, w)};
                 });
}

NodePtr avg_unpool2d(const NodePtr& y, int64_t k, int64_t s, int64_t h, int64_t w) {
  require_nchw(y, "avg_unpool2d");
  int64_t n = y->value.dim(0), c = y->value.dim(1), ho = y->value.dim(2), wo = y->value.dim(3);
  double inv = 1.0 / static_cast<double>(k * k);
  Tensor out({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = y->value.data.data() + i * ho * wo;
    double* dst = out.data.data() + i * h * w;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        double v = src[oy * wo + ox] * inv;
        for (int64_t dy = 0; dy < k; ++dy)
          for (int64_t dx = 0; dx < k; ++dx) dst[(oy * s + dy) * w + ox * s + dx] += v;
      }
  }
  return make_op(std::move(out), {y},
                 [k, s](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{avg_pool2d(g, k, s)};
                 });
}

NodePtr upsample_nearest2(const NodePtr& x) {
  require_nchw(x, "upsample_nearest2");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = x->value.data.data() + i * h * w;
    double* dst = out.data.data() + i * 4 * h * w;
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return make_op(std::move(out), {x},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{downsum_nearest2(g)};
                 });
}

NodePtr downsum_nearest2(const NodePtr& x) {
  require_nchw(x, "downsum_nearest2");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h % 2 || w % 2) throw ShapeError("downsum_nearest2: odd dims");
  Tensor out({n, c, h / 2, w / 2});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = x->value.data.data() + i * h * w;
    double* dst = out.data.data() + i * (h / 2) * (w / 2);
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t xx = 0; xx < w / 2; ++xx)
        dst[y * (w / 2) + xx] = src[2 * y * w + 2 * xx] + src[2 * y * w + 2 * xx + 1] +
                                src[(2 * y + 1) * w + 2 * xx] +
                                src[(2 * y + 1) * w + 2 * xx + 1];
  }
  return make_op(std::move(out), {x},
                 [](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{upsample_nearest2(g)};
                 });
}

namespace {

// Half-pixel-center sampling weights for one axis.
struct LinTap {
  int64_t i0, i1;
  double w0, w1;
};

std::vector<LinTap> bilinear_taps(int64_t src, int64_t dst) {
  std::vector<LinTap> taps(static_cast<size_t>(dst));
  double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (int64_t t = 0; t < dst; ++t) {
    double s = (static_cast<double>(t) + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > static_cast<double>(src - 1)) s = static_cast<double>(src - 1);
    int64_t i0 = static_cast<int64_t>(std::floor(s));
    int64_t i1 = std::min(i0 + 1, src - 1);
    double f = s - static_cast<double>(i0);
    taps[static_cast<size_t>(t)] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

NodePtr bilinear_resize(const NodePtr& x, int64_t th, int64_t tw) {
  require_nchw(x, "bilinear_resize");
  if (th < 1 || tw < 1) throw ShapeError("bilinear_resize: target dims < 1");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  auto ty = bilinear_taps(h, th), tx = bilinear_taps(w, tw);
  Tensor out({n, c, th, tw});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = x->value.data.data() + i * h * w;
    double* dst = out.data.data() + i * th * tw;
    for (int64_t y = 0; y < th; ++y)
      for (int64_t xx = 0; xx < tw; ++xx) {
        const auto& ay = ty[static_cast<size_t>(y)];
        const auto& ax = tx[static_cast<size_t>(xx)];
        dst[y * tw + xx] = ay.w0 * (ax.w0 * src[ay.i0 * w + ax.i0] + ax.w1 * src[ay.i0 * w + ax.i1]) +
                           ay.w1 * (ax.w0 * src[ay.i1 * w + ax.i0] + ax.w1 * src[ay.i1 * w + ax.i1]);
      }
  }
  return make_op(std::move(out), {x},
                 [h, w](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{bilinear_resize_adjoint(g, h, w)};
                 });
}

NodePtr bilinear_resize_adjoint(const NodePtr& y, int64_t sh, int64_t sw) {
  require_nchw(y, "bilinear_resize_adjoint");
  int64_t n = y->value.dim(0), c = y->value.dim(1), th = y->value.dim(2), tw = y->value.dim(3);
  auto ty = bilinear_taps(sh, th), tx = bilinear_taps(sw, tw);
  Tensor out({n, c, sh, sw});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = y->value.data.data() + i * th * tw;
    double* dst = out.data.data() + i * sh * sw;
    for (int64_t yy = 0; yy < th; ++yy)
      for (int64_t xx = 0; xx < tw; ++xx) {
        const auto& ay = ty[static_cast<size_t>(yy)];
        const auto& ax = tx[static_cast<size_t>(xx)];
        double v = src[yy * tw + xx];
        dst[ay.i0 * sw + ax.i0] += ay.w0 * ax.w0 * v;
        dst[ay.i0 * sw + ax.i1] += ay.w0 * ax.w1 * v;
        dst[ay.i1 * sw + ax.i0] += ay.w1 * ax.w0 * v;
        dst[ay.i1 * sw + ax.i1] += ay.w1 * ax.w1 * v;
      }
  }
  return make_op(std::move(out), {y},
                 [th, tw](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{bilinear_resize(g, th, tw)};
                 });
}

namespace {

int64_t reflect_index(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

NodePtr reflect_pad2d(const NodePtr& x, int64_t pt, int64_t pb, int64_t pl, int64_t pr) {
  require_nchw(x, "reflect_pad2d");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (pt > h - 1 || pb > h - 1 || pl > w - 1 || pr > w - 1)
    throw ShapeError("reflect_pad2d: padding exceeds dim-1");
  int64_t ho = h + pt + pb, wo = w + pl + pr;
  Tensor out({n, c, ho, wo});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = x->value.data.data() + i * h * w;
    double* dst = out.data.data() + i * ho * wo;
    for (int64_t y = 0; y < ho; ++y) {
      int64_t sy = reflect_index(y - pt, h);
      for (int64_t xx = 0; xx < wo; ++xx)
        dst[y * wo + xx] = src[sy * w + reflect_index(xx - pl, w)];
    }
  }
  return make_op(std::move(out), {x},
                 [pt, pb, pl, pr](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{reflect_pad2d_adjoint(g, pt, pb, pl, pr)};
                 });
}

NodePtr reflect_pad2d_adjoint(const NodePtr& y, int64_t pt, int64_t pb, int64_t pl,
                              int64_t pr) {
  require_nchw(y, "reflect_pad2d_adjoint");
  int64_t n = y->value.dim(0), c = y->value.dim(1), ho = y->value.dim(2), wo = y->value.dim(3);
  int64_t h = ho - pt - pb, w = wo - pl - pr;
  Tensor out({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = y->value.data.data() + i * ho * wo;
    double* dst = out.data.data() + i * h * w;
    for (int64_t yy = 0; yy < ho; ++yy) {
      int64_t sy = reflect_index(yy - pt, h);
      for (int64_t xx = 0; xx < wo; ++xx)
        dst[sy * w + reflect_index(xx - pl, w)] += src[yy * wo + xx];
    }
  }
  return make_op(std::move(out), {y},
                 [pt, pb, pl, pr](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{reflect_pad2d(g, pt, pb, pl, pr)};
                 });
}

NodePtr crop2d(const NodePtr& x, int64_t top, int64_t left, int64_t h, int64_t w) {
  require_nchw(x, "crop2d");
  int64_t n = x->value.dim(0), c = x->value.dim(1), hi = x->value.dim(2), wi = x->value.dim(3);
  if (top < 0 || left < 0 || top + h > hi || left + w > wi)
    throw ShapeError("crop2d: region outside input");
  Tensor out({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i)
    for (int64_t y = 0; y < h; ++y)
      std::copy_n(x->value.data.data() + i * hi * wi + (top + y) * wi + left, w,
                  out.data.data() + i * h * w + y * w);
  return make_op(std::move(out), {x},
                 [top, left, hi, wi](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{uncrop2d(g, top, left, hi, wi)};
                 });
}

NodePtr uncrop2d(const NodePtr& y, int64_t top, int64_t left, int64_t h, int64_t w) {
  require_nchw(y, "uncrop2d");
  int64_t n = y->value.dim(0), c = y->value.dim(1), hs = y->value.dim(2), ws = y->value.dim(3);
  Tensor out({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i)
    for (int64_t yy = 0; yy < hs; ++yy)
      std::copy_n(y->value.data.data() + i * hs * ws + yy * ws, ws,
                  out.data.data() + i * h * w + (top + yy) * w + left);
  return make_op(std::move(out), {y},
                 [top, left, hs, ws](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{crop2d(g, top, left, hs, ws)};
                 });
}

NodePtr window_gather(const NodePtr& x, int64_t s) {
  require_nchw(x, "window_gather");
  if (s < 1) throw ConfigError("window_gather: window size < 1");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h % s || w % s) throw ShapeError("window_gather: dims not divisible by window size");
  int64_t gh = h / s, gw = w / s, nw = gh * gw;
  Tensor out({n * nw, c, s, s});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t wy = 0; wy < gh; ++wy)
      for (int64_t wx = 0; wx < gw; ++wx)
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* src = x->value.data.data() + (ni * c + ci) * h * w;
          double* dst = out.data.data() +
                        (((ni * nw + wy * gw + wx) * c + ci) * s) * s;
          for (int64_t y = 0; y < s; ++y)
            std::copy_n(src + (wy * s + y) * w + wx * s, s, dst + y * s);
        }
  return make_op(std::move(out), {x},
                 [n, h, w](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{window_scatter(g, n, h, w)};
                 });
}

NodePtr window_scatter(const NodePtr& win, int64_t n, int64_t h, int64_t w) {
  require_nchw(win, "window_scatter");
  int64_t s = win->value.dim(2), c = win->value.dim(1);
  int64_t gh = h / s, gw = w / s, nw = gh * gw;
  if (win->value.dim(0) != n * nw || win->value.dim(3) != s)
    throw ShapeError("window_scatter: shape mismatch");
  Tensor out({n, c, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t wy = 0; wy < gh; ++wy)
      for (int64_t wx = 0; wx < gw; ++wx)
        for (int64_t ci = 0; ci < c; ++ci) {
          double* dst = out.data.data() + (ni * c + ci) * h * w;
          const double* src = win->value.data.data() +
                              (((ni * nw + wy * gw + wx) * c + ci) * s) * s;
          for (int64_t y = 0; y < s; ++y)
            std::copy_n(src + y * s, s, dst + (wy * s + y) * w + wx * s);
        }
  return make_op(std::move(out), {win},
                 [s](const std::vector<NodePtr>&, const NodePtr& g) {
                   return std::vector<NodePtr>{window_gather(g, s)};
                 });
}

// ---------------------------------------------------------------------------
// Composites

NodePtr conv2d(const NodePtr& x, const NodePtr& weight2d, const NodePtr& bias,
               const ConvGeom& g) {
  require_nchw(x, "conv2d");
  int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (weight2d->value.ndim() != 2 || weight2d->value.dim(1) != c * g.kh * g.kw)
    throw ShapeError("conv2d: weight shape mismatch");
  int64_t ho = conv_out(h, g.kh, g.sh, g.ph), wo = conv_out(w, g.kw, g.sw, g.pw);
  NodePtr y = cols_to_nchw(matmul(weight2d, im2col(x, g)), n, ho, wo);
  if (bias) y = add(y, channel_bcast(bias, n, ho, wo));
  return y;
}

NodePtr softmax_rows(const NodePtr& x) {
  if (x->value.ndim() != 2) throw ShapeError("softmax_rows: expected 2-D");
  if (!x->value.all_finite()) throw NumericError("softmax_rows: non-finite input");
  int64_t r = x->value.dim(0), c = x->value.dim(1);
  Tensor mx({r});
  for (int64_t i = 0; i < r; ++i) {
    double m = x->value.data[i * c];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, x->value.data[i * c + j]);
    mx[static_cast<size_t>(i)] = m;
  }
  NodePtr shifted = sub(x, row_bcast(constant(std::move(mx)), c));
  NodePtr e = exp_(shifted);
  return div(e, row_bcast(row_sum(e), c));
}

NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta, double eps) {
  require_nchw(x, "batch_norm");
  int64_t n = x->value.dim(0), h = x->value.dim(2), w = x->value.dim(3);
  NodePtr xc = sub(x, channel_bcast(channel_mean(x), n, h, w));
  NodePtr var = channel_mean(square(xc));
  NodePtr xn = div(xc, channel_bcast(sqrt_(sadd(var, eps)), n, h, w));
  return add(mul(xn, channel_bcast(gamma, n, h, w)), channel_bcast(beta, n, h, w));
}

NodePtr instance_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                      double eps) {
  require_nchw(x, "instance_norm");
  int64_t n = x->value.dim(0), h = x->value.dim(2), w = x->value.dim(3);
  NodePtr xc = sub(x, spatial_bcast(spatial_mean(x), h, w));
  NodePtr var = spatial_mean(square(xc));
  NodePtr xn = div(xc, spatial_bcast(sqrt_(sadd(var, eps)), h, w));
  return add(mul(xn, channel_bcast(gamma, n, h, w)), channel_bcast(beta, n, h, w));
}

}  // namespace tsgan::ad
