#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tsgan/tensor.hpp"

namespace tsgan::ckpt {

// Checkpoint directory: meta.json plus tensors.bin
// (magic "TSGN", u32 version, u64 count, then per tensor:
//  u32 name length, name bytes, u8 dtype (0 = float64), u32 ndim,
//  u64 dims, raw little-endian data).

struct Meta {
  uint32_t version = 1;
  std::string kind;  // "maskgan" or "translator"
  int64_t step = 0;
  int64_t epoch = 0;
  std::string rng_state;
  std::map<std::string, std::string> extra;
};

void save_checkpoint(const std::string& dir, const Meta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

struct Loaded {
  Meta meta;
  std::map<std::string, Tensor> tensors;
};

Loaded load_checkpoint(const std::string& dir);

}  // namespace tsgan::ckpt
