#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsgan/maskcodec.hpp"
#include "tsgan/nn.hpp"

namespace tsgan::maskgan {

using ad::NodePtr;

struct MaskGanConfig {
  int64_t latent_dim = 512;
  int64_t style_dim = 512;
  int64_t mapping_depth = 4;
  int64_t start_resolution = 4;
  int64_t target_resolution = 64;   // desk-scale default; the full-size run uses 512
  int64_t steps_per_resolution = 10000;
  double lambda_gp = 10.0;
  double lambda_drift = 0.001;
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  int64_t base_channels = 32;  // channels at the 4x4 stage, halved per doubling
  int64_t min_channels = 8;
  int64_t batch_size = 4;

  void validate() const;
  int64_t num_stages() const;                    // stages start_res .. target_res
  int64_t channels_at_stage(int64_t stage) const;
  int64_t stage_of_resolution(int64_t res) const;  // ConfigError if not in schedule
};

struct Schedule {
  int64_t resolution;
  double alpha;
};

// Resolution doubles every steps_per_resolution; alpha ramps linearly over the
// first half of each stage after the first.
Schedule progressive_schedule(int64_t step, const MaskGanConfig& cfg);

// Style-based generator: mapping MLP + progressive synthesis blocks with the
// style code injected as a per-block, per-sample channel bias.
class MaskGenerator {
 public:
  MaskGenerator(nn::ParamStore& ps, const MaskGanConfig& cfg, Rng& rng);

  // z: [latent_dim, N] -> w: [style_dim, N]
  NodePtr map_latent(const NodePtr& z) const;

  // w: [style_dim, N] -> class scores [N, 6, R, R], per-pixel softmax.
  NodePtr synthesize(const NodePtr& w, int64_t resolution, double alpha) const;

  NodePtr forward(const NodePtr& z, int64_t resolution, double alpha) const {
    return synthesize(map_latent(z), resolution, alpha);
  }

  const MaskGanConfig& config() const { return cfg_; }

 private:
  MaskGanConfig cfg_;
  std::vector<nn::Linear> mapping_;
  NodePtr const_base_;                    // [C0*4*4]
  std::vector<nn::Conv2d> block_conv_;
  std::vector<nn::NormParams> block_norm_;
  std::vector<nn::Linear> style_affine_;  // style -> per-block channel bias
  std::vector<nn::Conv2d> to_scores_;     // 1x1 -> 6 per stage
};

// Norm-free conv critic mirroring the generator, scalar output per sample.
class MaskCritic {
 public:
  MaskCritic(nn::ParamStore& ps, const MaskGanConfig& cfg, Rng& rng);

  // x: [N, 6, R, R] -> scores [1, N]
  NodePtr forward(const NodePtr& x, int64_t resolution, double alpha) const;

 private:
  MaskGanConfig cfg_;
  std::vector<nn::Conv2d> from_scores_;
  std::vector<nn::Conv2d> block_conv_;
  nn::Conv2d final_conv_;
  nn::Linear head_;
};

using CriticFn = std::function<NodePtr(const NodePtr&)>;  // batch -> [1,N] scores

// E[(||grad_xhat D(xhat)||_2 - 1)^2] over per-sample uniform interpolates.
NodePtr gradient_penalty(const CriticFn& critic, const Tensor& x_real, const Tensor& x_fake,
                         Rng& rng);

struct CriticLossParts {
  NodePtr total;
  double wasserstein = 0, penalty = 0, drift = 0;
};

CriticLossParts critic_loss(const CriticFn& critic, const Tensor& x_real,
                            const Tensor& x_fake, const MaskGanConfig& cfg, Rng& rng);

// L_G = -E[D(G(z))]; scores is the critic output on a generated batch.
NodePtr generator_loss_mask(const NodePtr& fake_scores);

struct StepLosses {
  double critic_loss = 0;
  double gen_loss = 0;
};

class Trainer {
 public:
  Trainer(const MaskGanConfig& cfg, uint64_t seed);

  // One critic update then one generator update on a real score batch whose
  // resolution must match the schedule at the current step.
  StepLosses train_step(const Tensor& real_batch);

  Tensor sample_latent_batch(int64_t n);
  ClassScoreVolume sample_scores(Rng& rng, int64_t resolution, double alpha) const;

  int64_t step() const { return step_; }
  Schedule current_schedule() const { return progressive_schedule(step_, cfg_); }
  const MaskGanConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const MaskGenerator& generator() const { return *gen_; }
  const MaskCritic& critic() const { return *critic_; }
  nn::Adam& critic_opt() { return opt_critic_; }
  nn::Adam& generator_opt() { return opt_gen_; }
  Rng& rng() { return rng_; }
  int64_t& step_ref() { return step_; }

 private:
  MaskGanConfig cfg_;
  nn::ParamStore ps_;
  std::unique_ptr<MaskGenerator> gen_;
  std::unique_ptr<MaskCritic> critic_;
  nn::Adam opt_critic_;
  nn::Adam opt_gen_;
  Rng rng_;
  int64_t step_ = 0;
};

}  // namespace tsgan::maskgan
