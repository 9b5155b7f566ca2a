#include "tsgan/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace tsgan::ckpt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'S', 'G', 'N'};
constexpr uint32_t kFormatVersion = 1;
constexpr uint8_t kDtypeF64 = 0;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Meta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  fs::create_directories(dir);

  json j;
  j["version"] = meta.version;
  j["kind"] = meta.kind;
  j["step"] = meta.step;
  j["epoch"] = meta.epoch;
  j["rng_state"] = meta.rng_state;
  j["extra"] = meta.extra;
  std::ofstream mout((fs::path(dir) / "meta.json").string());
  if (!mout) throw IoError("cannot write meta.json in " + dir);
  mout << j.dump(2) << "\n";

  std::string bin = (fs::path(dir) / "tensors.bin").string();
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write " + bin);
  out.write(kMagic, 4);
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_pod(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, kDtypeF64);
    write_pod(out, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape) write_pod(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + bin);
}

Loaded load_checkpoint(const std::string& dir) {
  std::string meta_path = (fs::path(dir) / "meta.json").string();
  std::ifstream min(meta_path);
  if (!min) throw IoError("cannot open " + meta_path);
  Loaded loaded;
  try {
    json j;
    min >> j;
    loaded.meta.version = j.at("version").get<uint32_t>();
    loaded.meta.kind = j.at("kind").get<std::string>();
    loaded.meta.step = j.at("step").get<int64_t>();
    loaded.meta.epoch = j.at("epoch").get<int64_t>();
    loaded.meta.rng_state = j.at("rng_state").get<std::string>();
    loaded.meta.extra = j.at("extra").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(meta_path + ": " + e.what());
  }

  std::string bin = (fs::path(dir) / "tensors.bin").string();
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic in " + bin);
  uint32_t version = read_pod<uint32_t>(in, bin);
  if (version != kFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  uint64_t count = read_pod<uint64_t>(in, bin);
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = read_pod<uint32_t>(in, bin);
    if (name_len > 4096) throw FormatError("implausible tensor name length in " + bin);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint8_t dtype = read_pod<uint8_t>(in, bin);
    if (dtype != kDtypeF64)
      throw FormatError("unsupported dtype " + std::to_string(dtype) + " in " + bin);
    uint32_t ndim = read_pod<uint32_t>(in, bin);
    if (ndim > 8) throw FormatError("implausible tensor rank in " + bin);
    std::vector<int64_t> shape;
    for (uint32_t d = 0; d < ndim; ++d)
      shape.push_back(static_cast<int64_t>(read_pod<uint64_t>(in, bin)));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw FormatError("truncated tensor data in " + bin);
    loaded.tensors.emplace(std::move(name), std::move(t));
  }
  return loaded;
}

}  // namespace tsgan::ckpt
