#pragma once

#include <optional>
#include <string>

#include "tsgan/checkpoint.hpp"
#include "tsgan/dataset.hpp"
#include "tsgan/gradcheck.hpp"
#include "tsgan/maskgan.hpp"
#include "tsgan/metrics.hpp"
#include "tsgan/translator.hpp"

namespace tsgan::pipeline {

struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "out";
  int64_t n_samples = 64;

  phantom::PhantomConfig phantom;
  maskgan::MaskGanConfig maskgan;
  translator::TranslatorConfig translator;

  // 0 means the full schedule (maskgan: stages * steps_per_resolution,
  // translator: epochs * train-set size); otherwise a hard step cap.
  int64_t max_steps = 0;

  double metric_psnr_max = 2.0;      // dynamic range of [-1,1] images
  double metric_ssim_range = 2.0;
  int64_t masked_margin = 8;

  void validate() const;
};

// Majority label per pooling window; ties resolve to the lowest label.
LabelMask downsample_mask_majority(const LabelMask& mask, int64_t factor);

// Trainer persistence (params, both Adam states, rng, step counters).
void save_maskgan_trainer(const std::string& dir, maskgan::Trainer& tr);
void load_maskgan_trainer(const std::string& dir, maskgan::Trainer& tr);
void save_translator_trainer(const std::string& dir, translator::Trainer& tr,
                             int64_t epoch, int64_t step);
// returns (epoch, step) stored in the checkpoint
std::pair<int64_t, int64_t> load_translator_trainer(const std::string& dir,
                                                    translator::Trainer& tr);

// Commands throw on failure; the CLI maps exceptions to exit codes.
void cmd_synth_data(const RunConfig& cfg);
void cmd_train_maskgan(const RunConfig& cfg, const std::string& dataset_dir,
                       const std::string& resume_dir = "");
void cmd_sample_masks(const RunConfig& cfg, const std::string& checkpoint_dir, int64_t n);
void cmd_train_translator(const RunConfig& cfg, const std::string& dataset_dir,
                          const std::string& resume_dir = "");
void cmd_translate(const RunConfig& cfg, const std::string& checkpoint_dir,
                   const std::string& dataset_dir);
void cmd_compose(const RunConfig& cfg, const std::string& mask_ckpt,
                 const std::string& translator_ckpt, int64_t n);
void cmd_eval(const RunConfig& cfg, const std::string& real_dir,
              const std::string& synth_dir);
bool cmd_gradcheck(const RunConfig& cfg);  // true when every check passes

}  // namespace tsgan::pipeline
