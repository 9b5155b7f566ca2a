#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tsgan/attention.hpp"
#include "tsgan/featurenet.hpp"
#include "tsgan/maskcodec.hpp"
#include "tsgan/nn.hpp"

namespace tsgan::translator {

using ad::NodePtr;

struct TranslatorConfig {
  int64_t image_size = 32;       // powers of two only
  int64_t base_width = 32;
  int64_t max_width = 256;
  int64_t dwmh_heads = 4;
  int64_t dwmh_window = 4;
  bool use_lia = true;
  bool use_dwmh = true;
  double lambda_l1 = 200.0;
  double lambda_perceptual = 10.0;
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int64_t epochs = 200;
  int64_t decay_start_epoch = 100;
  uint64_t feature_seed = 1234;

  int64_t depth() const;  // log2(image_size) - 2, at least 1
  void validate() const;
};

// Constant learning rate until decay_start_epoch, then linear to 0 at `epochs`.
double lr_schedule(int64_t epoch, const TranslatorConfig& cfg);

// Attention-augmented UNet: LIA on every skip connection, DWMH at the
// bottleneck, tanh head producing 1-channel images in [-1,1].
class Generator {
 public:
  Generator(nn::ParamStore& ps, const TranslatorConfig& cfg, Rng& rng);

  // cond: [N,6,H,W] one-hot planes -> [N,1,H,W]
  NodePtr forward(const NodePtr& cond) const;

  // Reference forward with all attention bypassed (plain UNet on the same
  // weights); used by tests and the identity-reduction check.
  NodePtr forward_plain(const NodePtr& cond) const;

  attn::DwmhParams& dwmh() { return *dwmh_; }
  std::vector<attn::LiaParams>& lia() { return lia_; }

 private:
  NodePtr run(const NodePtr& cond, bool with_attention) const;

  TranslatorConfig cfg_;
  std::vector<nn::Conv2d> enc_conv_;
  std::vector<nn::NormParams> enc_norm_;
  std::vector<nn::Conv2d> dec_conv_;
  std::vector<nn::NormParams> dec_norm_;
  nn::Conv2d out_conv_;
  std::vector<attn::LiaParams> lia_;
  std::unique_ptr<attn::DwmhParams> dwmh_;
};

// Conditional patch critic on (one-hot mask ++ image), logit grid output.
class PatchCritic {
 public:
  PatchCritic(nn::ParamStore& ps, const TranslatorConfig& cfg, Rng& rng);

  // cond [N,6,H,W], image [N,1,H,W] -> logits [N,1,h,w]
  NodePtr forward(const NodePtr& cond, const NodePtr& image) const;

 private:
  std::vector<nn::Conv2d> convs_;
};

NodePtr l1_loss(const NodePtr& y, const NodePtr& yhat);
NodePtr perceptual_loss(const NodePtr& y, const NodePtr& yhat, const FeatureNetwork& phi);

struct AdvLosses {
  NodePtr critic_loss;
  NodePtr gen_adv_loss;
};

// Patch BCE-with-logits; logits clamped to +-15 before the loss.
AdvLosses adversarial_loss(const PatchCritic& critic, const NodePtr& cond,
                           const NodePtr& y_real, const NodePtr& y_fake);

struct LossParts {
  double adv = 0, l1 = 0, perceptual = 0;
};

struct LossWeights {
  double lambda_l1 = 200.0;
  double lambda_perceptual = 10.0;
};

double total_generator_loss(const LossParts& parts, const LossWeights& w);
NodePtr total_generator_loss(const NodePtr& adv, const NodePtr& l1, const NodePtr& perc,
                             const LossWeights& w);

struct StepLosses {
  double adv = 0, l1 = 0, perceptual = 0, total = 0, critic = 0;
};

class Trainer {
 public:
  Trainer(const TranslatorConfig& cfg, uint64_t seed);

  // cond [N,6,H,W], target [N,1,H,W]; critic step then generator step.
  StepLosses train_step(const Tensor& cond, const Tensor& target);

  Tensor translate(const Tensor& cond) const;  // [N,6,H,W] -> [N,1,H,W]

  const TranslatorConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  Generator& generator() { return *gen_; }
  const PatchCritic& critic() const { return *critic_; }
  const FeatureNetwork& feature_net() const { return phi_; }
  nn::Adam& critic_opt() { return opt_critic_; }
  nn::Adam& generator_opt() { return opt_gen_; }
  void set_lr(double lr) { opt_critic_.set_lr(lr); opt_gen_.set_lr(lr); }

 private:
  TranslatorConfig cfg_;
  nn::ParamStore ps_;
  std::unique_ptr<Generator> gen_;
  std::unique_ptr<PatchCritic> critic_;
  FeatureNetwork phi_;
  nn::Adam opt_critic_;
  nn::Adam opt_gen_;
};

}  // namespace tsgan::translator
