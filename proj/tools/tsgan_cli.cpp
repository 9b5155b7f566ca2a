#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tsgan/pipeline.hpp"

namespace fs = std::filesystem;
using tsgan::pipeline::RunConfig;

namespace {

// CLI11 maps config-file sections onto subcommands, so [phantom] would never
// reach an option named --phantom.image_size. Flatten sections into dotted
// key names instead; unknown keys then fail option lookup and are reported
// by name.
struct FlatToml : CLI::ConfigTOML {
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    std::vector<CLI::ConfigItem> out;
    for (auto& it : items) {
      if (it.name == "++" || it.name == "--") continue;  // section markers
      std::string flat;
      for (auto& p : it.parents) flat += p + ".";
      it.name = flat + it.name;
      it.parents.clear();
      out.push_back(std::move(it));
    }
    return out;
  }
};

// Registers the full config schema so every field can come from the TOML
// file ([phantom] image_size = 64 ...) or be overridden on the command line
// (--phantom.image_size 64).
void add_config_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->set_config("--config", "", "TOML config file");
  cmd->config_formatter(std::make_shared<FlatToml>());
  cmd->allow_config_extras(CLI::config_extras_mode::error);

  cmd->add_option("--seed", cfg.seed, "global random seed");
  cmd->add_option("--out", cfg.out_dir, "output directory");
  cmd->add_option("--n-samples,--n_samples", cfg.n_samples, "sample count");
  cmd->add_option("--max-steps,--max_steps", cfg.max_steps,
                  "hard training step cap (0 = full schedule)");

  auto& ph = cfg.phantom;
  cmd->add_option("--phantom.image_size", ph.image_size);
  cmd->add_option("--phantom.min_diameter", ph.min_diameter);
  cmd->add_option("--phantom.max_diameter", ph.max_diameter);
  cmd->add_option("--phantom.min_nodules", ph.min_nodules);
  cmd->add_option("--phantom.max_nodules", ph.max_nodules);
  cmd->add_option("--phantom.noise_sigma", ph.noise_sigma);
  cmd->add_option("--phantom.texture_scale", ph.texture_scale);

  auto& mg = cfg.maskgan;
  cmd->add_option("--maskgan.latent_dim", mg.latent_dim);
  cmd->add_option("--maskgan.style_dim", mg.style_dim);
  cmd->add_option("--maskgan.mapping_depth", mg.mapping_depth);
  cmd->add_option("--maskgan.start_resolution", mg.start_resolution);
  cmd->add_option("--maskgan.target_resolution", mg.target_resolution);
  cmd->add_option("--maskgan.steps_per_resolution", mg.steps_per_resolution);
  cmd->add_option("--maskgan.base_channels", mg.base_channels);
  cmd->add_option("--maskgan.min_channels", mg.min_channels);
  cmd->add_option("--maskgan.batch_size", mg.batch_size);
  cmd->add_option("--maskgan.lambda_gp", mg.lambda_gp);
  cmd->add_option("--maskgan.lambda_drift", mg.lambda_drift);
  cmd->add_option("--maskgan.lr", mg.lr);
  cmd->add_option("--maskgan.beta1", mg.beta1);
  cmd->add_option("--maskgan.beta2", mg.beta2);

  auto& tr = cfg.translator;
  cmd->add_option("--translator.image_size", tr.image_size);
  cmd->add_option("--translator.base_width", tr.base_width);
  cmd->add_option("--translator.max_width", tr.max_width);
  cmd->add_option("--translator.dwmh_heads", tr.dwmh_heads);
  cmd->add_option("--translator.dwmh_window", tr.dwmh_window);
  cmd->add_option("--translator.use_lia", tr.use_lia);
  cmd->add_option("--translator.use_dwmh", tr.use_dwmh);
  cmd->add_option("--translator.lambda_l1", tr.lambda_l1);
  cmd->add_option("--translator.lambda_perceptual", tr.lambda_perceptual);
  cmd->add_option("--translator.lr", tr.lr);
  cmd->add_option("--translator.beta1", tr.beta1);
  cmd->add_option("--translator.beta2", tr.beta2);
  cmd->add_option("--translator.epochs", tr.epochs);
  cmd->add_option("--translator.decay_start_epoch", tr.decay_start_epoch);
  cmd->add_option("--translator.feature_seed", tr.feature_seed);

  cmd->add_option("--metrics.psnr_max", cfg.metric_psnr_max);
  cmd->add_option("--metrics.ssim_range", cfg.metric_ssim_range);
  cmd->add_option("--metrics.masked_margin", cfg.masked_margin);
}

void echo_effective_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "config_effective.toml");
  out << "seed = " << cfg.seed << "\n"
      << "out = \"" << cfg.out_dir << "\"\n"
      << "n_samples = " << cfg.n_samples << "\n"
      << "max_steps = " << cfg.max_steps << "\n\n"
      << "[phantom]\n"
      << "image_size = " << cfg.phantom.image_size << "\n"
      << "min_diameter = " << cfg.phantom.min_diameter << "\n"
      << "max_diameter = " << cfg.phantom.max_diameter << "\n"
      << "min_nodules = " << cfg.phantom.min_nodules << "\n"
      << "max_nodules = " << cfg.phantom.max_nodules << "\n"
      << "noise_sigma = " << cfg.phantom.noise_sigma << "\n"
      << "texture_scale = " << cfg.phantom.texture_scale << "\n\n"
      << "[maskgan]\n"
      << "latent_dim = " << cfg.maskgan.latent_dim << "\n"
      << "style_dim = " << cfg.maskgan.style_dim << "\n"
      << "mapping_depth = " << cfg.maskgan.mapping_depth << "\n"
      << "start_resolution = " << cfg.maskgan.start_resolution << "\n"
      << "target_resolution = " << cfg.maskgan.target_resolution << "\n"
      << "steps_per_resolution = " << cfg.maskgan.steps_per_resolution << "\n"
      << "base_channels = " << cfg.maskgan.base_channels << "\n"
      << "min_channels = " << cfg.maskgan.min_channels << "\n"
      << "batch_size = " << cfg.maskgan.batch_size << "\n"
      << "lambda_gp = " << cfg.maskgan.lambda_gp << "\n"
      << "lambda_drift = " << cfg.maskgan.lambda_drift << "\n"
      << "lr = " << cfg.maskgan.lr << "\n"
      << "beta1 = " << cfg.maskgan.beta1 << "\n"
      << "beta2 = " << cfg.maskgan.beta2 << "\n\n"
      << "[translator]\n"
      << "image_size = " << cfg.translator.image_size << "\n"
      << "base_width = " << cfg.translator.base_width << "\n"
      << "max_width = " << cfg.translator.max_width << "\n"
      << "dwmh_heads = " << cfg.translator.dwmh_heads << "\n"
      << "dwmh_window = " << cfg.translator.dwmh_window << "\n"
      << "use_lia = " << (cfg.translator.use_lia ? "true" : "false") << "\n"
      << "use_dwmh = " << (cfg.translator.use_dwmh ? "true" : "false") << "\n"
      << "lambda_l1 = " << cfg.translator.lambda_l1 << "\n"
      << "lambda_perceptual = " << cfg.translator.lambda_perceptual << "\n"
      << "lr = " << cfg.translator.lr << "\n"
      << "beta1 = " << cfg.translator.beta1 << "\n"
      << "beta2 = " << cfg.translator.beta2 << "\n"
      << "epochs = " << cfg.translator.epochs << "\n"
      << "decay_start_epoch = " << cfg.translator.decay_start_epoch << "\n"
      << "feature_seed = " << cfg.translator.feature_seed << "\n\n"
      << "[metrics]\n"
      << "psnr_max = " << cfg.metric_psnr_max << "\n"
      << "ssim_range = " << cfg.metric_ssim_range << "\n"
      << "masked_margin = " << cfg.masked_margin << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage mask-conditioned lung nodule image synthesis"};
  app.require_subcommand(1);
  app.fallthrough(true);  // common flags may follow the subcommand name

  RunConfig cfg;
  if (const char* root = std::getenv("TSGAN_OUT_ROOT"); root && *root)
    cfg.out_dir = root;
  add_config_options(&app, cfg);

  std::string data_dir, resume_dir, checkpoint_dir;
  std::string mask_ckpt, translator_ckpt, real_dir, synth_dir;

  CLI::App* synth = app.add_subcommand("synth-data", "generate a phantom dataset");

  CLI::App* tmg = app.add_subcommand("train-maskgan", "train the mask generator");
  tmg->add_option("--data", data_dir, "dataset directory")->required();
  tmg->add_option("--resume", resume_dir, "checkpoint directory to resume from");

  CLI::App* smp = app.add_subcommand("sample-masks", "sample masks from a checkpoint");
  smp->add_option("--checkpoint", checkpoint_dir, "mask generator checkpoint")->required();

  CLI::App* ttr = app.add_subcommand("train-translator", "train the mask-to-image translator");
  ttr->add_option("--data", data_dir, "dataset directory")->required();
  ttr->add_option("--resume", resume_dir, "checkpoint directory to resume from");

  CLI::App* tra = app.add_subcommand("translate", "translate dataset masks to images");
  tra->add_option("--checkpoint", checkpoint_dir, "translator checkpoint")->required();
  tra->add_option("--data", data_dir, "dataset directory")->required();

  CLI::App* cmp = app.add_subcommand("compose", "run both stages: masks then images");
  cmp->add_option("--mask-checkpoint", mask_ckpt, "mask generator checkpoint")->required();
  cmp->add_option("--translator-checkpoint", translator_ckpt, "translator checkpoint")
      ->required();

  CLI::App* evl = app.add_subcommand("eval", "compare a synthetic set against a real set");
  evl->add_option("--real", real_dir, "reference dataset directory")->required();
  evl->add_option("--synth", synth_dir, "synthetic dataset directory")->required();

  CLI::App* grd = app.add_subcommand("gradcheck", "finite-difference gradient audit");

  CLI11_PARSE(app, argc, argv);

  try {
    using namespace tsgan::pipeline;
    echo_effective_config(cfg);
    if (synth->parsed()) {
      cmd_synth_data(cfg);
    } else if (tmg->parsed()) {
      cmd_train_maskgan(cfg, data_dir, resume_dir);
    } else if (smp->parsed()) {
      cmd_sample_masks(cfg, checkpoint_dir, cfg.n_samples);
    } else if (ttr->parsed()) {
      cmd_train_translator(cfg, data_dir, resume_dir);
    } else if (tra->parsed()) {
      cmd_translate(cfg, checkpoint_dir, data_dir);
    } else if (cmp->parsed()) {
      cmd_compose(cfg, mask_ckpt, translator_ckpt, cfg.n_samples);
    } else if (evl->parsed()) {
      cmd_eval(cfg, real_dir, synth_dir);
    } else if (grd->parsed()) {
      if (!cmd_gradcheck(cfg)) {
        std::cerr << "gradcheck: at least one target exceeded tolerance\n";
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
