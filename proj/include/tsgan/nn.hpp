#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tsgan/autodiff.hpp"
#include "tsgan/rng.hpp"

namespace tsgan::nn {

using ad::NodePtr;

// Named parameter registry shared by networks, the optimizer, and checkpoints.
class ParamStore {
 public:
  NodePtr create(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    NodePtr p = ad::leaf(std::move(init));
    params_[name] = p;
    order_.push_back(name);
    return p;
  }

  NodePtr get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }

  std::vector<NodePtr> all() const {
    std::vector<NodePtr> v;
    for (const auto& n : order_) v.push_back(params_.at(n));
    return v;
  }

  std::vector<NodePtr> with_prefix(const std::string& prefix) const {
    std::vector<NodePtr> v;
    for (const auto& n : order_)
      if (n.rfind(prefix, 0) == 0) v.push_back(params_.at(n));
    return v;
  }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> v;
    for (const auto& n : order_)
      if (n.rfind(prefix, 0) == 0) v.push_back(n);
    return v;
  }

 private:
  std::map<std::string, NodePtr> params_;
  std::vector<std::string> order_;
};

inline Tensor he_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(shape);
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = std * rng.gaussian();
  return t;
}

// Convolution layer owning a [Cout, Cin*k*k] weight and [Cout] bias.
struct Conv2d {
  NodePtr weight, bias;
  ad::ConvGeom geom;
  int64_t cin = 0, cout = 0;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int64_t cin_, int64_t cout_, int64_t k,
         int64_t stride, int64_t pad, Rng& rng)
      : geom(ad::conv_geom(k, stride, pad)), cin(cin_), cout(cout_) {
    weight = ps.create(name + ".weight", he_init({cout_, cin_ * k * k}, cin_ * k * k, rng));
    bias = ps.create(name + ".bias", Tensor({cout_}, 0.0));
  }

  NodePtr operator()(const NodePtr& x) const { return ad::conv2d(x, weight, bias, geom); }
};

struct Linear {
  NodePtr weight, bias;  // weight [out, in]

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng) {
    weight = ps.create(name + ".weight", he_init({out, in}, in, rng));
    bias = ps.create(name + ".bias", Tensor({out}, 0.0));
  }

  // x: [in, batch] column-major samples -> [out, batch]
  NodePtr operator()(const NodePtr& x) const {
    int64_t batch = x->value.dim(1);
    return ad::add(ad::matmul(weight, x),
                   ad::row_bcast(bias, batch));
  }
};

struct NormParams {
  NodePtr gamma, beta;

  NormParams() = default;
  NormParams(ParamStore& ps, const std::string& name, int64_t c) {
    gamma = ps.create(name + ".gamma", Tensor({c}, 1.0));
    beta = ps.create(name + ".beta", Tensor({c}, 0.0));
  }
};

// Adam with bias correction; state lives alongside each parameter so it can be
// checkpointed by name.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void step(const std::vector<std::string>& names, const std::vector<NodePtr>& params,
            const std::vector<NodePtr>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i]->value;
      const Tensor& g = grads[i]->value;
      auto& slot = state_[names[i]];
      if (slot.m.numel() == 0) {
        slot.m = Tensor(p.shape, 0.0);
        slot.v = Tensor(p.shape, 0.0);
      }
      for (int64_t k = 0; k < p.numel(); ++k) {
        slot.m[k] = beta1_ * slot.m[k] + (1.0 - beta1_) * g[k];
        slot.v[k] = beta2_ * slot.v[k] + (1.0 - beta2_) * g[k] * g[k];
        double mh = slot.m[k] / bc1;
        double vh = slot.v[k] / bc2;
        p[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  struct Slot {
    Tensor m, v;
  };
  std::map<std::string, Slot>& state() { return state_; }
  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Slot> state_;
};

}  // namespace tsgan::nn
