#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "labelforge/model.hpp"

namespace labelforge {

// Training bookkeeping carried inside a checkpoint.
struct CheckpointMeta {
  std::uint64_t rng_state = 0;
  int epoch = 0;
  std::vector<double> losses;
};

// File layout: "LFCK" magic, u32 version, u32 length + UTF-8 JSON metadata
// (preset, seed, rng state, epoch, losses, tensor count), then per tensor:
// u32 name length, name bytes, u32 rank, u32 dims, little-endian f32 payload.
void save_checkpoint(Model& model, const std::string& path,
                     const CheckpointMeta& meta = {});

Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace labelforge
