#include "tsgan/featurenet.hpp"

#include "tsgan/errors.hpp"

namespace tsgan {

using namespace ad;

FeatureNetwork FeatureNetwork::seeded(uint64_t seed, int64_t input_channels,
                                      std::vector<int64_t> widths) {
  if (widths.empty()) throw ConfigError("feature network needs at least one stage");
  FeatureNetwork net;
  net.input_channels_ = input_channels;
  Rng rng(seed);
  int64_t cin = input_channels;
  for (int64_t cout : widths) {
    Stage st;
    st.weight = Tensor({cout, cin * 9});
    double std = std::sqrt(2.0 / static_cast<double>(cin * 9));
    for (auto& v : st.weight.data) v = std * rng.gaussian();
    st.bias = Tensor({cout});
    for (auto& v : st.bias.data) v = 0.1 * rng.gaussian();
    net.stages_.push_back(std::move(st));
    cin = cout;
  }
  return net;
}

FeatureNetwork FeatureNetwork::identity(int64_t input_channels) {
  FeatureNetwork net;
  net.input_channels_ = input_channels;
  net.identity_ = true;
  return net;
}

std::vector<NodePtr> FeatureNetwork::forward(const NodePtr& x) const {
  if (x->value.ndim() != 4) throw ShapeError("FeatureNetwork: expected [N,C,H,W]");
  if (identity_) return {x};
  std::vector<NodePtr> feats;
  NodePtr h = x;
  for (const auto& st : stages_) {
    h = conv2d(h, constant(st.weight), constant(st.bias), conv_geom(3, 1, 1));
    h = leaky_relu(h, 0.2);
    if (st.pool && h->value.dim(2) >= 2 && h->value.dim(3) >= 2)
      h = avg_pool2d(h, 2, 2);
    feats.push_back(h);
  }
  return feats;
}

int64_t FeatureNetwork::embed_dim() const {
  if (identity_) return input_channels_;
  return stages_.back().weight.shape[0];
}

}  // namespace tsgan
