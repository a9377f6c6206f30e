#pragma once

#include "frea/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace frea {

/// Checkpoint layout (little-endian):
///   "FREAM1"
///   u32 n, n bytes of model config text (`key = value` lines)
///   u32 parameter count, then per tensor: u32 rank, u32 dims..., f64 values
///   u32 buffer count, then the batch-norm running statistics likewise
std::vector<std::uint8_t> serialize(const FreaUnet& model);
FreaUnet deserialize(const std::vector<unsigned char>& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const FreaUnet& model);
FreaUnet load_checkpoint(const std::filesystem::path& path);

/// Git blob id (SHA-1 over "blob <size>\0" + content), lowercase hex.
std::string content_hash(const std::vector<std::uint8_t>& bytes);

}  // namespace frea
