#include "tsgan/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsgan/pngio.hpp"

namespace tsgan::dataset {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError("invalid json in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

uint16_t quantize16(double v) {
  double c = std::clamp(v, -1.0, 1.0);
  return static_cast<uint16_t>(llround((c + 1.0) / 2.0 * 65535.0));
}

double dequantize16(uint16_t v) {
  return 2.0 * static_cast<double>(v) / 65535.0 - 1.0;
}

void save_mask_png(const std::string& path, const LabelMask& mask) {
  pngio::write_gray8(path, mask.labels, mask.height, mask.width);
}

LabelMask load_mask_png(const std::string& path) {
  LabelMask mask;
  mask.labels = pngio::read_gray8(path, mask.height, mask.width);
  for (uint8_t v : mask.labels)
    if (v >= kNumClasses)
      throw InvalidLabel("mask file " + path + " has label " + std::to_string(v));
  return mask;
}

void save_mask_preview_png(const std::string& path, const LabelMask& mask) {
  const auto& palette = mask_palette();
  std::vector<uint8_t> rgb(static_cast<size_t>(mask.height * mask.width * 3));
  for (size_t i = 0; i < mask.labels.size(); ++i) {
    const auto& c = palette[mask.labels[i]];
    rgb[3 * i] = c[0];
    rgb[3 * i + 1] = c[1];
    rgb[3 * i + 2] = c[2];
  }
  pngio::write_rgb8(path, rgb, mask.height, mask.width);
}

void save_image_png(const std::string& path, const Tensor& image) {
  int64_t h, w;
  if (image.ndim() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.ndim() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw ShapeError("save_image_png: expected [H,W] or [1,H,W], got " + image.shape_str());
  }
  std::vector<uint16_t> px(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) px[static_cast<size_t>(i)] = quantize16(image[i]);
  pngio::write_gray16(path, px, h, w);
}

Tensor load_image_png(const std::string& path) {
  int64_t h, w;
  std::vector<uint16_t> px = pngio::read_gray16(path, h, w);
  Tensor img({1, h, w});
  for (int64_t i = 0; i < h * w; ++i) img[i] = dequantize16(px[static_cast<size_t>(i)]);
  return img;
}

void save_manifest(const std::string& dir, const Manifest& m) {
  json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["image_size"] = m.image_size;
  j["samples"] = json::array();
  for (const auto& s : m.samples)
    j["samples"].push_back({{"id", s.id},
                            {"mask", s.mask_path},
                            {"image", s.image_path},
                            {"split", s.split}});
  write_json_file((fs::path(dir) / "manifest.json").string(), j);
}

Manifest load_manifest(const std::string& dir) {
  json j = read_json_file((fs::path(dir) / "manifest.json").string());
  Manifest m;
  try {
    m.version = j.at("version").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.image_size = j.at("image_size").get<int64_t>();
    for (const auto& s : j.at("samples")) {
      SampleRecord rec;
      rec.id = s.at("id").get<std::string>();
      rec.mask_path = s.at("mask").get<std::string>();
      rec.image_path = s.at("image").get<std::string>();
      rec.split = s.at("split").get<std::string>();
      if (rec.split != "train" && rec.split != "test")
        throw FormatError("manifest: unknown split tag '" + rec.split + "'");
      m.samples.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  return m;
}

Manifest write_dataset(const std::string& dir,
                       const std::vector<phantom::PairedSample>& samples, uint64_t seed,
                       int64_t image_size, int64_t train_ratio, int64_t test_ratio) {
  if (samples.empty()) throw EmptyInput("write_dataset: no samples");
  fs::create_directories(fs::path(dir) / "masks");
  fs::create_directories(fs::path(dir) / "images");

  std::vector<uint8_t> tags =
      samples.size() > 1
          ? phantom::split_tags(static_cast<int64_t>(samples.size()), train_ratio,
                                test_ratio, seed)
          : std::vector<uint8_t>{0};

  Manifest m;
  m.seed = seed;
  m.image_size = image_size;
  for (size_t i = 0; i < samples.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%06zu", i);
    SampleRecord rec;
    rec.id = id;
    rec.mask_path = "masks/" + rec.id + ".png";
    rec.image_path = "images/" + rec.id + ".png";
    rec.split = tags[i] == 0 ? "train" : "test";
    save_mask_png((fs::path(dir) / rec.mask_path).string(), samples[i].mask);
    save_image_png((fs::path(dir) / rec.image_path).string(), samples[i].image);
    m.samples.push_back(std::move(rec));
  }
  save_manifest(dir, m);
  export_coco(dir, m);
  return m;
}

void export_coco(const std::string& dir, const Manifest& m) {
  json j;
  j["categories"] = json::array({{{"id", 1}, {"name", "nodule"}}});
  j["images"] = json::array();
  j["annotations"] = json::array();
  int64_t ann_id = 1;
  for (size_t i = 0; i < m.samples.size(); ++i) {
    const auto& rec = m.samples[i];
    std::string mask_file = (fs::path(dir) / rec.mask_path).string();
    if (!fs::exists(mask_file)) throw IoError("missing mask file: " + mask_file);
    LabelMask mask = load_mask_png(mask_file);
    int64_t image_id = static_cast<int64_t>(i) + 1;
    j["images"].push_back({{"id", image_id},
                           {"file_name", rec.image_path},
                           {"width", mask.width},
                           {"height", mask.height}});
    for (const auto& b : nodule_bboxes(mask)) {
      j["annotations"].push_back({{"id", ann_id++},
                                  {"image_id", image_id},
                                  {"category_id", 1},
                                  {"bbox", {b.x, b.y, b.w, b.h}},
                                  {"area", b.w * b.h},
                                  {"iscrowd", 0}});
    }
  }
  write_json_file((fs::path(dir) / "annotations.json").string(), j);
}

CocoDoc import_coco(const std::string& path) {
  json j = read_json_file(path);
  CocoDoc doc;
  try {
    for (const auto& im : j.at("images"))
      doc.images.push_back({im.at("id").get<int64_t>(),
                            im.at("file_name").get<std::string>(),
                            im.at("width").get<int64_t>(), im.at("height").get<int64_t>()});
    for (const auto& an : j.at("annotations")) {
      CocoAnnotation a;
      a.id = an.at("id").get<int64_t>();
      a.image_id = an.at("image_id").get<int64_t>();
      const auto& bb = an.at("bbox");
      a.bbox = {bb.at(0).get<int64_t>(), bb.at(1).get<int64_t>(), bb.at(2).get<int64_t>(),
                bb.at(3).get<int64_t>()};
      doc.annotations.push_back(a);
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return doc;
}

}  // namespace tsgan::dataset
