#include "tsgan/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace tsgan::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

void RunConfig::validate() const {
  if (n_samples < 1) throw ConfigError("config: n_samples must be >= 1");
  if (out_dir.empty()) throw ConfigError("config: out_dir must be set");
  if (max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
  if (metric_psnr_max <= 0 || metric_ssim_range <= 0)
    throw ConfigError("config: metric ranges must be positive");
  phantom.validate();
  maskgan.validate();
  translator.validate();
}

LabelMask downsample_mask_majority(const LabelMask& mask, int64_t factor) {
  if (factor < 1) throw ConfigError("downsample_mask_majority: factor must be >= 1");
  if (mask.height % factor != 0 || mask.width % factor != 0)
    throw ShapeError("downsample_mask_majority: dims not divisible by factor " +
                     std::to_string(factor));
  LabelMask out;
  out.height = mask.height / factor;
  out.width = mask.width / factor;
  out.labels.assign(static_cast<size_t>(out.height * out.width), 0);
  for (int64_t y = 0; y < out.height; ++y)
    for (int64_t x = 0; x < out.width; ++x) {
      int counts[kNumClasses] = {};
      for (int64_t dy = 0; dy < factor; ++dy)
        for (int64_t dx = 0; dx < factor; ++dx)
          ++counts[mask.at(y * factor + dy, x * factor + dx)];
      int best = 0;
      for (int c = 1; c < kNumClasses; ++c)
        if (counts[c] > counts[best]) best = c;  // ties keep the lowest label
      out.at(y, x) = static_cast<uint8_t>(best);
    }
  return out;
}

namespace {

Tensor downsample_image_avg(const Tensor& img, int64_t factor) {
  int64_t h = img.dim(1), w = img.dim(2);
  if (h % factor != 0 || w % factor != 0)
    throw ShapeError("image dims not divisible by downsample factor");
  Tensor out({1, h / factor, w / factor});
  double inv = 1.0 / static_cast<double>(factor * factor);
  for (int64_t y = 0; y < h / factor; ++y)
    for (int64_t x = 0; x < w / factor; ++x) {
      double acc = 0;
      for (int64_t dy = 0; dy < factor; ++dy)
        for (int64_t dx = 0; dx < factor; ++dx)
          acc += img[(y * factor + dy) * w + x * factor + dx];
      out[y * (w / factor) + x] = acc * inv;
    }
  return out;
}

Tensor one_hot_at_resolution(const LabelMask& mask, int64_t resolution) {
  LabelMask m = mask;
  if (mask.height != resolution) {
    if (mask.height % resolution != 0)
      throw ShapeError("mask size " + std::to_string(mask.height) +
                       " not divisible by resolution " + std::to_string(resolution));
    m = downsample_mask_majority(mask, mask.height / resolution);
  }
  return encode_one_hot(m).planes;  // [6,R,R]
}

struct LoadedDataset {
  dataset::Manifest manifest;
  std::vector<LabelMask> masks;          // all samples, manifest order
  std::vector<Tensor> images;            // [1,H,W]
  std::vector<size_t> train_indices;
  std::vector<size_t> test_indices;
};

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset ds;
  ds.manifest = dataset::load_manifest(dir);
  if (ds.manifest.samples.empty()) throw EmptyInput("dataset " + dir + " has no samples");
  for (size_t i = 0; i < ds.manifest.samples.size(); ++i) {
    const auto& rec = ds.manifest.samples[i];
    ds.masks.push_back(dataset::load_mask_png((fs::path(dir) / rec.mask_path).string()));
    ds.images.push_back(
        dataset::load_image_png((fs::path(dir) / rec.image_path).string()));
    (rec.split == "train" ? ds.train_indices : ds.test_indices).push_back(i);
  }
  return ds;
}

std::vector<std::pair<std::string, Tensor>> snapshot_params(nn::ParamStore& ps) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& name : ps.names()) out.emplace_back("param." + name, ps.get(name)->value);
  return out;
}

void snapshot_adam(std::vector<std::pair<std::string, Tensor>>& out, nn::Adam& opt,
                   const std::string& prefix) {
  for (auto& [name, slot] : opt.state()) {
    out.emplace_back(prefix + name + ".m", slot.m);
    out.emplace_back(prefix + name + ".v", slot.v);
  }
}

void restore_params(nn::ParamStore& ps, const std::map<std::string, Tensor>& tensors) {
  for (const auto& name : ps.names()) {
    auto it = tensors.find("param." + name);
    if (it == tensors.end()) throw FormatError("checkpoint missing parameter " + name);
    auto p = ps.get(name);
    if (p->value.shape != it->second.shape)
      throw FormatError("checkpoint shape mismatch for " + name);
    p->value = it->second;
  }
}

void restore_adam(nn::Adam& opt, const std::map<std::string, Tensor>& tensors,
                  const std::string& prefix, int64_t step_count) {
  opt.state().clear();
  for (const auto& [name, t] : tensors) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    if (rest.size() < 3) throw FormatError("bad optimizer tensor name " + name);
    std::string param = rest.substr(0, rest.size() - 2);
    std::string part = rest.substr(rest.size() - 2);
    auto& slot = opt.state()[param];
    if (part == ".m")
      slot.m = t;
    else if (part == ".v")
      slot.v = t;
    else
      throw FormatError("bad optimizer tensor name " + name);
  }
  opt.set_step_count(step_count);
}

int64_t extra_int(const ckpt::Meta& meta, const std::string& key) {
  auto it = meta.extra.find(key);
  if (it == meta.extra.end()) throw FormatError("checkpoint missing meta key " + key);
  return std::stoll(it->second);
}

double extra_double(const ckpt::Meta& meta, const std::string& key) {
  auto it = meta.extra.find(key);
  if (it == meta.extra.end()) throw FormatError("checkpoint missing meta key " + key);
  return std::stod(it->second);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_maskgan_config(ckpt::Meta& meta, const maskgan::MaskGanConfig& cfg) {
  auto& e = meta.extra;
  e["latent_dim"] = std::to_string(cfg.latent_dim);
  e["style_dim"] = std::to_string(cfg.style_dim);
  e["mapping_depth"] = std::to_string(cfg.mapping_depth);
  e["start_resolution"] = std::to_string(cfg.start_resolution);
  e["target_resolution"] = std::to_string(cfg.target_resolution);
  e["steps_per_resolution"] = std::to_string(cfg.steps_per_resolution);
  e["base_channels"] = std::to_string(cfg.base_channels);
  e["min_channels"] = std::to_string(cfg.min_channels);
  e["batch_size"] = std::to_string(cfg.batch_size);
  e["lambda_gp"] = fmt(cfg.lambda_gp);
  e["lambda_drift"] = fmt(cfg.lambda_drift);
  e["lr"] = fmt(cfg.lr);
  e["beta1"] = fmt(cfg.beta1);
  e["beta2"] = fmt(cfg.beta2);
}

maskgan::MaskGanConfig get_maskgan_config(const ckpt::Meta& meta) {
  maskgan::MaskGanConfig cfg;
  cfg.latent_dim = extra_int(meta, "latent_dim");
  cfg.style_dim = extra_int(meta, "style_dim");
  cfg.mapping_depth = extra_int(meta, "mapping_depth");
  cfg.start_resolution = extra_int(meta, "start_resolution");
  cfg.target_resolution = extra_int(meta, "target_resolution");
  cfg.steps_per_resolution = extra_int(meta, "steps_per_resolution");
  cfg.base_channels = extra_int(meta, "base_channels");
  cfg.min_channels = extra_int(meta, "min_channels");
  cfg.batch_size = extra_int(meta, "batch_size");
  cfg.lambda_gp = extra_double(meta, "lambda_gp");
  cfg.lambda_drift = extra_double(meta, "lambda_drift");
  cfg.lr = extra_double(meta, "lr");
  cfg.beta1 = extra_double(meta, "beta1");
  cfg.beta2 = extra_double(meta, "beta2");
  return cfg;
}

void put_translator_config(ckpt::Meta& meta, const translator::TranslatorConfig& cfg) {
  auto& e = meta.extra;
  e["image_size"] = std::to_string(cfg.image_size);
  e["base_width"] = std::to_string(cfg.base_width);
  e["max_width"] = std::to_string(cfg.max_width);
  e["dwmh_heads"] = std::to_string(cfg.dwmh_heads);
  e["dwmh_window"] = std::to_string(cfg.dwmh_window);
  e["use_lia"] = cfg.use_lia ? "1" : "0";
  e["use_dwmh"] = cfg.use_dwmh ? "1" : "0";
  e["lambda_l1"] = fmt(cfg.lambda_l1);
  e["lambda_perceptual"] = fmt(cfg.lambda_perceptual);
  e["lr"] = fmt(cfg.lr);
  e["beta1"] = fmt(cfg.beta1);
  e["beta2"] = fmt(cfg.beta2);
  e["epochs"] = std::to_string(cfg.epochs);
  e["decay_start_epoch"] = std::to_string(cfg.decay_start_epoch);
  e["feature_seed"] = std::to_string(cfg.feature_seed);
}

translator::TranslatorConfig get_translator_config(const ckpt::Meta& meta) {
  translator::TranslatorConfig cfg;
  cfg.image_size = extra_int(meta, "image_size");
  cfg.base_width = extra_int(meta, "base_width");
  cfg.max_width = extra_int(meta, "max_width");
  cfg.dwmh_heads = extra_int(meta, "dwmh_heads");
  cfg.dwmh_window = extra_int(meta, "dwmh_window");
  cfg.use_lia = extra_int(meta, "use_lia") != 0;
  cfg.use_dwmh = extra_int(meta, "use_dwmh") != 0;
  cfg.lambda_l1 = extra_double(meta, "lambda_l1");
  cfg.lambda_perceptual = extra_double(meta, "lambda_perceptual");
  cfg.lr = extra_double(meta, "lr");
  cfg.beta1 = extra_double(meta, "beta1");
  cfg.beta2 = extra_double(meta, "beta2");
  cfg.epochs = extra_int(meta, "epochs");
  cfg.decay_start_epoch = extra_int(meta, "decay_start_epoch");
  cfg.feature_seed = static_cast<uint64_t>(extra_int(meta, "feature_seed"));
  return cfg;
}

}  // namespace

void save_maskgan_trainer(const std::string& dir, maskgan::Trainer& tr) {
  ckpt::Meta meta;
  meta.kind = "maskgan";
  meta.step = tr.step();
  meta.rng_state = tr.rng().save_state();
  meta.extra["opt_critic_t"] = std::to_string(tr.critic_opt().step_count());
  meta.extra["opt_gen_t"] = std::to_string(tr.generator_opt().step_count());
  put_maskgan_config(meta, tr.config());
  auto tensors = snapshot_params(tr.params());
  snapshot_adam(tensors, tr.critic_opt(), "adamc.");
  snapshot_adam(tensors, tr.generator_opt(), "adamg.");
  ckpt::save_checkpoint(dir, meta, tensors);
}

void load_maskgan_trainer(const std::string& dir, maskgan::Trainer& tr) {
  ckpt::Loaded loaded = ckpt::load_checkpoint(dir);
  if (loaded.meta.kind != "maskgan")
    throw FormatError("checkpoint " + dir + " is not a mask-GAN checkpoint");
  restore_params(tr.params(), loaded.tensors);
  restore_adam(tr.critic_opt(), loaded.tensors, "adamc.",
               extra_int(loaded.meta, "opt_critic_t"));
  restore_adam(tr.generator_opt(), loaded.tensors, "adamg.",
               extra_int(loaded.meta, "opt_gen_t"));
  tr.step_ref() = loaded.meta.step;
  tr.rng().load_state(loaded.meta.rng_state);
}

void save_translator_trainer(const std::string& dir, translator::Trainer& tr,
                             int64_t epoch, int64_t step) {
  ckpt::Meta meta;
  meta.kind = "translator";
  meta.step = step;
  meta.epoch = epoch;
  meta.extra["opt_critic_t"] = std::to_string(tr.critic_opt().step_count());
  meta.extra["opt_gen_t"] = std::to_string(tr.generator_opt().step_count());
  put_translator_config(meta, tr.config());
  auto tensors = snapshot_params(tr.params());
  snapshot_adam(tensors, tr.critic_opt(), "adamc.");
  snapshot_adam(tensors, tr.generator_opt(), "adamg.");
  ckpt::save_checkpoint(dir, meta, tensors);
}

std::pair<int64_t, int64_t> load_translator_trainer(const std::string& dir,
                                                    translator::Trainer& tr) {
  ckpt::Loaded loaded = ckpt::load_checkpoint(dir);
  if (loaded.meta.kind != "translator")
    throw FormatError("checkpoint " + dir + " is not a translator checkpoint");
  restore_params(tr.params(), loaded.tensors);
  restore_adam(tr.critic_opt(), loaded.tensors, "adamc.",
               extra_int(loaded.meta, "opt_critic_t"));
  restore_adam(tr.generator_opt(), loaded.tensors, "adamg.",
               extra_int(loaded.meta, "opt_gen_t"));
  return {loaded.meta.epoch, loaded.meta.step};
}

void cmd_synth_data(const RunConfig& cfg) {
  cfg.validate();
  Rng base(cfg.seed);
  std::vector<phantom::PairedSample> samples;
  for (int64_t i = 0; i < cfg.n_samples; ++i) {
    Rng rng = base.fork(static_cast<uint64_t>(i));
    samples.push_back(phantom::generate_phantom_pair(rng, cfg.phantom));
  }
  dataset::write_dataset(cfg.out_dir, samples, cfg.seed, cfg.phantom.image_size);
}

void cmd_train_maskgan(const RunConfig& cfg, const std::string& dataset_dir,
                       const std::string& resume_dir) {
  cfg.validate();
  LoadedDataset ds = load_dataset(dataset_dir);
  if (ds.train_indices.empty()) throw EmptyInput("dataset has no training samples");
  if (ds.manifest.image_size < cfg.maskgan.target_resolution)
    throw ConfigError("dataset masks are smaller than the target resolution");

  maskgan::Trainer tr(cfg.maskgan, cfg.seed);
  bool resumed = false;
  if (!resume_dir.empty()) {
    load_maskgan_trainer(resume_dir, tr);
    resumed = true;
  }

  fs::create_directories(cfg.out_dir);
  std::string log_path = (fs::path(cfg.out_dir) / "maskgan_loss.csv").string();
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::out);
  if (!log) throw IoError("cannot write " + log_path);
  if (!resumed) log << "step,resolution,alpha,critic_loss,gen_loss\n";

  int64_t total = cfg.maskgan.num_stages() * cfg.maskgan.steps_per_resolution;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  Rng pick_base(cfg.seed ^ 0xDA7A);
  std::string ckpt_dir = (fs::path(cfg.out_dir) / "maskgan_ckpt").string();
  while (tr.step() < total) {
    int64_t step = tr.step();
    auto sch = tr.current_schedule();
    Rng pick = pick_base.fork(static_cast<uint64_t>(step));
    Tensor batch({cfg.maskgan.batch_size, kNumClasses, sch.resolution, sch.resolution});
    int64_t per = kNumClasses * sch.resolution * sch.resolution;
    for (int64_t b = 0; b < cfg.maskgan.batch_size; ++b) {
      size_t idx = ds.train_indices[static_cast<size_t>(pick.uniform_int(
          0, static_cast<int64_t>(ds.train_indices.size()) - 1))];
      Tensor planes = one_hot_at_resolution(ds.masks[idx], sch.resolution);
      std::copy(planes.data.begin(), planes.data.end(), batch.data.begin() + b * per);
    }
    auto losses = tr.train_step(batch);
    log << step << "," << sch.resolution << "," << sch.alpha << "," << losses.critic_loss
        << "," << losses.gen_loss << "\n";
    bool stage_end = (tr.step() % cfg.maskgan.steps_per_resolution) == 0;
    if (stage_end || tr.step() == total) save_maskgan_trainer(ckpt_dir, tr);
  }
}

void cmd_sample_masks(const RunConfig& cfg, const std::string& checkpoint_dir, int64_t n) {
  ckpt::Loaded peek = ckpt::load_checkpoint(checkpoint_dir);
  if (peek.meta.kind != "maskgan")
    throw FormatError(checkpoint_dir + " is not a mask-GAN checkpoint");
  maskgan::MaskGanConfig mg_cfg = get_maskgan_config(peek.meta);
  maskgan::Trainer tr(mg_cfg, cfg.seed);
  load_maskgan_trainer(checkpoint_dir, tr);

  fs::create_directories(fs::path(cfg.out_dir) / "masks");
  Rng base(cfg.seed);
  for (int64_t i = 0; i < n; ++i) {
    Rng rng = base.fork(static_cast<uint64_t>(i));
    ClassScoreVolume vol = tr.sample_scores(rng, mg_cfg.target_resolution, 1.0);
    LabelMask mask = decode_labels(vol);
    ValidationReport rep = validate_mask(mask);
    if (!rep.valid) throw NumericError("sampled mask failed validation");
    char name[48];
    std::snprintf(name, sizeof name, "masks/%06lld.png", static_cast<long long>(i));
    dataset::save_mask_png((fs::path(cfg.out_dir) / name).string(), mask);
    std::snprintf(name, sizeof name, "masks/%06lld_preview.png",
                  static_cast<long long>(i));
    dataset::save_mask_preview_png((fs::path(cfg.out_dir) / name).string(), mask);
  }
}

void cmd_train_translator(const RunConfig& cfg, const std::string& dataset_dir,
                          const std::string& resume_dir) {
  cfg.validate();
  LoadedDataset ds = load_dataset(dataset_dir);
  if (ds.train_indices.empty()) throw EmptyInput("dataset has no training samples");
  int64_t size = cfg.translator.image_size;
  int64_t factor = ds.manifest.image_size / size;
  if (factor * size != ds.manifest.image_size)
    throw ConfigError("dataset image size is not a multiple of the translator size");

  // precompute conditioning/target tensors once
  std::vector<Tensor> conds, targets;
  for (size_t idx : ds.train_indices) {
    Tensor planes = one_hot_at_resolution(ds.masks[idx], size);
    conds.push_back(Tensor({1, kNumClasses, size, size}, std::move(planes.data)));
    Tensor img = factor > 1 ? downsample_image_avg(ds.images[idx], factor)
                            : ds.images[idx];
    targets.push_back(Tensor({1, 1, size, size}, std::move(img.data)));
  }

  translator::Trainer tr(cfg.translator, cfg.seed);
  int64_t epoch = 0, pos = 0, done = 0;
  bool resumed = false;
  if (!resume_dir.empty()) {
    auto [e, s] = load_translator_trainer(resume_dir, tr);
    epoch = e;
    done = s;
    pos = s % static_cast<int64_t>(conds.size());
    resumed = true;
  }

  fs::create_directories(cfg.out_dir);
  std::string log_path = (fs::path(cfg.out_dir) / "translator_loss.csv").string();
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::out);
  if (!log) throw IoError("cannot write " + log_path);
  if (!resumed) log << "epoch,step,lr,adv,l1,perceptual,total,critic\n";

  int64_t per_epoch = static_cast<int64_t>(conds.size());
  int64_t total = cfg.translator.epochs * per_epoch;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  Rng order_base(cfg.seed ^ 0x0DDE);
  std::string ckpt_dir = (fs::path(cfg.out_dir) / "translator_ckpt").string();
  while (done < total && epoch < cfg.translator.epochs) {
    double lr = translator::lr_schedule(epoch, cfg.translator);
    tr.set_lr(lr);

    std::vector<int64_t> order(static_cast<size_t>(per_epoch));
    std::iota(order.begin(), order.end(), int64_t{0});
    Rng shuffle = order_base.fork(static_cast<uint64_t>(epoch));
    for (int64_t i = per_epoch - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.uniform_int(0, i))]);

    for (; pos < per_epoch && done < total; ++pos, ++done) {
      size_t k = static_cast<size_t>(order[static_cast<size_t>(pos)]);
      auto losses = tr.train_step(conds[k], targets[k]);
      log << epoch << "," << done << "," << lr << "," << losses.adv << "," << losses.l1
          << "," << losses.perceptual << "," << losses.total << "," << losses.critic
          << "\n";
    }
    if (pos == per_epoch) {
      ++epoch;
      pos = 0;
    }
    save_translator_trainer(ckpt_dir, tr, epoch, done);
  }
}

void cmd_translate(const RunConfig& cfg, const std::string& checkpoint_dir,
                   const std::string& dataset_dir) {
  ckpt::Loaded peek = ckpt::load_checkpoint(checkpoint_dir);
  if (peek.meta.kind != "translator")
    throw FormatError(checkpoint_dir + " is not a translator checkpoint");
  translator::TranslatorConfig t_cfg = get_translator_config(peek.meta);
  translator::Trainer tr(t_cfg, cfg.seed);
  load_translator_trainer(checkpoint_dir, tr);

  LoadedDataset ds = load_dataset(dataset_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "translated");
  for (size_t i = 0; i < ds.manifest.samples.size(); ++i) {
    Tensor planes = one_hot_at_resolution(
        ds.masks[i], t_cfg.image_size);
    Tensor cond({1, kNumClasses, t_cfg.image_size, t_cfg.image_size},
                std::move(planes.data));
    Tensor img = tr.translate(cond);
    Tensor img3({1, t_cfg.image_size, t_cfg.image_size}, std::move(img.data));
    dataset::save_image_png((fs::path(cfg.out_dir) / "translated" /
                             (ds.manifest.samples[i].id + ".png"))
                                .string(),
                            img3);
  }
}

void cmd_compose(const RunConfig& cfg, const std::string& mask_ckpt,
                 const std::string& translator_ckpt, int64_t n) {
  ckpt::Loaded mg_peek = ckpt::load_checkpoint(mask_ckpt);
  if (mg_peek.meta.kind != "maskgan")
    throw FormatError(mask_ckpt + " is not a mask-GAN checkpoint");
  maskgan::MaskGanConfig mg_cfg = get_maskgan_config(mg_peek.meta);

  ckpt::Loaded tr_peek = ckpt::load_checkpoint(translator_ckpt);
  if (tr_peek.meta.kind != "translator")
    throw FormatError(translator_ckpt + " is not a translator checkpoint");
  translator::TranslatorConfig t_cfg = get_translator_config(tr_peek.meta);

  if (mg_cfg.target_resolution != t_cfg.image_size)
    throw ConfigError("stage resolutions differ: mask generator emits " +
                      std::to_string(mg_cfg.target_resolution) + ", translator expects " +
                      std::to_string(t_cfg.image_size));

  maskgan::Trainer mg(mg_cfg, cfg.seed);
  load_maskgan_trainer(mask_ckpt, mg);
  translator::Trainer tl(t_cfg, cfg.seed);
  load_translator_trainer(translator_ckpt, tl);

  int64_t size = t_cfg.image_size;
  Rng base(cfg.seed);
  std::vector<phantom::PairedSample> samples;
  for (int64_t i = 0; i < n; ++i) {
    Rng rng = base.fork(static_cast<uint64_t>(i));
    ClassScoreVolume vol = mg.sample_scores(rng, size, 1.0);
    phantom::PairedSample s;
    s.mask = decode_labels(vol);
    Tensor cond({1, kNumClasses, size, size}, encode_one_hot(s.mask).planes.data);
    Tensor img = tl.translate(cond);
    s.image = Tensor({1, size, size}, std::move(img.data));
    s.boxes = nodule_bboxes(s.mask);
    samples.push_back(std::move(s));
  }
  dataset::write_dataset(cfg.out_dir, samples, cfg.seed, size);
}

namespace {

json finite_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

double mean_of(const std::vector<double>& v) {
  double total = 0;
  for (double x : v) {
    if (std::isinf(x)) return std::numeric_limits<double>::infinity();
    total += x;
  }
  return v.empty() ? 0.0 : total / static_cast<double>(v.size());
}

}  // namespace

void cmd_eval(const RunConfig& cfg, const std::string& real_dir,
              const std::string& synth_dir) {
  LoadedDataset real = load_dataset(real_dir);
  LoadedDataset synth = load_dataset(synth_dir);

  std::map<std::string, size_t> synth_by_id;
  for (size_t i = 0; i < synth.manifest.samples.size(); ++i)
    synth_by_id[synth.manifest.samples[i].id] = i;

  FeatureNetwork phi = FeatureNetwork::seeded(cfg.translator.feature_seed);
  metrics::SsimConfig ssim_cfg;
  ssim_cfg.dynamic_range = cfg.metric_ssim_range;

  std::vector<double> psnrs, ssims, m_psnrs, m_ssims;
  std::vector<Tensor> real_crops, synth_crops;
  size_t paired = 0;
  for (size_t i = 0; i < real.manifest.samples.size(); ++i) {
    auto it = synth_by_id.find(real.manifest.samples[i].id);
    if (it == synth_by_id.end()) continue;
    ++paired;
    const Tensor& x = real.images[i];
    const Tensor& y = synth.images[it->second];
    if (x.shape != y.shape) throw ShapeError("paired images have mismatched shapes");
    psnrs.push_back(metrics::psnr(x, y, cfg.metric_psnr_max));
    ssims.push_back(metrics::ssim(x, y, ssim_cfg));
    try {
      auto m = metrics::masked_region_metrics(x, y, real.masks[i], cfg.metric_psnr_max,
                                              ssim_cfg, cfg.masked_margin);
      m_psnrs.push_back(m.psnr);
      m_ssims.push_back(m.ssim);
      real_crops.push_back(metrics::crop_image(x, m.region));
      synth_crops.push_back(metrics::crop_image(y, m.region));
    } catch (const NoNoduleRegion&) {
      // nodule-free slice: full-image metrics only
    }
  }
  if (paired == 0) throw PairingError("no overlapping sample ids between " + real_dir +
                                      " and " + synth_dir);

  json report;
  report["version"] = 1;
  report["pairs"] = paired;

  auto real_stats = metrics::gaussian_stats(metrics::embed(real.images, phi));
  auto synth_stats = metrics::gaussian_stats(metrics::embed(synth.images, phi));
  report["full_image"] = {{"fid", metrics::fid(real_stats, synth_stats)},
                          {"psnr_mean", finite_or_inf(mean_of(psnrs))},
                          {"ssim_mean", mean_of(ssims)}};

  json masked;
  masked["psnr_mean"] = m_psnrs.empty() ? json(nullptr) : finite_or_inf(mean_of(m_psnrs));
  masked["ssim_mean"] = m_ssims.empty() ? json(nullptr) : json(mean_of(m_ssims));
  if (real_crops.size() >= 2) {
    auto rc = metrics::gaussian_stats(metrics::embed(real_crops, phi));
    auto sc = metrics::gaussian_stats(metrics::embed(synth_crops, phi));
    masked["fid"] = metrics::fid(rc, sc);
  } else {
    masked["fid"] = nullptr;
  }
  report["masked_region"] = masked;

  fs::create_directories(cfg.out_dir);
  std::string path = (fs::path(cfg.out_dir) / "eval_report.json").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << report.dump(2) << "\n";
}

bool cmd_gradcheck(const RunConfig& cfg) {
  GradCheckReport rep = run_gradcheck(cfg.seed);
  json j;
  j["version"] = 1;
  j["all_pass"] = rep.all_pass;
  j["entries"] = json::array();
  for (const auto& e : rep.entries)
    j["entries"].push_back(
        {{"target", e.target}, {"max_rel_err", e.max_rel_err}, {"pass", e.pass}});
  fs::create_directories(cfg.out_dir);
  std::string path = (fs::path(cfg.out_dir) / "gradcheck_report.json").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  return rep.all_pass;
}

}  // namespace tsgan::pipeline
