#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "siamreid/tensor.hpp"

namespace siamreid {

/// Named tensors, persisted in the toolkit's native little-endian weight format:
///   "SRTA" u32 version u32 count, then per entry:
///   u32 name_len, name bytes, u32 rank, i32 dims[rank], f32 values[numel].
using TensorArchive = std::map<std::string, Tensor>;

void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace siamreid
