#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "fuselab/models.hpp"

namespace fuselab {

// Checkpoint byte layout:
//   bytes [0,8)      header length L, unsigned 64-bit little-endian
//   bytes [8,8+L)    UTF-8 JSON header (architecture, loss, seed, tensor names
//                    and shapes in storage order)
//   bytes [8+L,...)  every tensor's values as little-endian IEEE-754 doubles,
//                    row-major, concatenated in header order

std::string serialize_checkpoint(const CnnParams& params);
std::string serialize_checkpoint(const FusionParams& params);

using AnyParams = std::variant<CnnParams, FusionParams>;
AnyParams deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const CnnParams& params);
void save_checkpoint(const std::filesystem::path& path, const FusionParams& params);
AnyParams load_checkpoint(const std::filesystem::path& path);
CnnParams load_cnn_checkpoint(const std::filesystem::path& path);
FusionParams load_fusion_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 over the serialized checkpoint; used to assert parameters were not mutated.
std::uint64_t params_hash(const CnnParams& params);
std::uint64_t params_hash(const FusionParams& params);

}  // namespace fuselab
