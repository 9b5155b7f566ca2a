#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsgan/phantom.hpp"

namespace tsgan::dataset {

// Affine mapping between [-1,1] reals and the 16-bit PNG storage range.
uint16_t quantize16(double v);
double dequantize16(uint16_t v);

void save_mask_png(const std::string& path, const LabelMask& mask);
LabelMask load_mask_png(const std::string& path);

// Mask rendered through the fixed class palette, for human inspection.
void save_mask_preview_png(const std::string& path, const LabelMask& mask);

void save_image_png(const std::string& path, const Tensor& image);  // [1,H,W] or [H,W]
Tensor load_image_png(const std::string& path);                     // [1,H,W]

struct SampleRecord {
  std::string id;
  std::string mask_path;   // relative to the dataset directory
  std::string image_path;
  std::string split;       // "train" or "test"
};

struct Manifest {
  int version = 1;
  uint64_t seed = 0;
  int64_t image_size = 0;
  std::vector<SampleRecord> samples;
};

void save_manifest(const std::string& dir, const Manifest& m);
Manifest load_manifest(const std::string& dir);

// Full dataset directory: masks/, images/, manifest.json, annotations.json.
Manifest write_dataset(const std::string& dir,
                       const std::vector<phantom::PairedSample>& samples, uint64_t seed,
                       int64_t image_size, int64_t train_ratio = 4, int64_t test_ratio = 1);

struct CocoImage {
  int64_t id = 0;
  std::string file_name;
  int64_t width = 0, height = 0;
};

struct CocoAnnotation {
  int64_t id = 0;
  int64_t image_id = 0;
  BoundingBox bbox;
};

struct CocoDoc {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
};

// One annotation per nodule box, category "nodule" id 1.
void export_coco(const std::string& dir, const Manifest& m);
CocoDoc import_coco(const std::string& path);

}  // namespace tsgan::dataset
