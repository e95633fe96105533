#pragma once

#include <filesystem>

#include "rbo/model.hpp"

namespace rbo {

// Binary layout, all integers and reals little-endian:
//   "RBOCKPT\0"                       8-byte magic
//   u32 version (= 1)
//   u32 meta length, meta bytes       `key = value` lines (ModelConfig)
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 extents[rank],
//               f64 values[product(extents)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rbo
