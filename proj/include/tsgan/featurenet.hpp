#pragma once

#include <vector>

#include "tsgan/autodiff.hpp"
#include "tsgan/rng.hpp"

namespace tsgan {

// Fixed, deterministically seeded feature extractor standing in for the
// pretrained perceptual / embedding backbones. Weights are constants; the
// stage list is the pluggable contract.
class FeatureNetwork {
 public:
  struct Stage {
    Tensor weight;  // [Cout, Cin*9]
    Tensor bias;    // [Cout]
    bool pool = true;
  };

  static FeatureNetwork seeded(uint64_t seed, int64_t input_channels = 1,
                               std::vector<int64_t> widths = {8, 16, 32});
  static FeatureNetwork identity(int64_t input_channels = 1);

  // Per-stage activations for x: [N,C,H,W].
  std::vector<ad::NodePtr> forward(const ad::NodePtr& x) const;

  size_t stage_count() const { return stages_.size(); }
  int64_t input_channels() const { return input_channels_; }
  int64_t embed_dim() const;
  bool is_identity() const { return identity_; }

 private:
  std::vector<Stage> stages_;
  int64_t input_channels_ = 1;
  bool identity_ = false;
};

}  // namespace tsgan
