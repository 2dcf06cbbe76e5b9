#pragma once

#include <cstdint>
#include <filesystem>

namespace siamreid {

struct SynthOptions {
  int identities = 8;
  int images_per_identity = 40;  // per view
  std::uint64_t seed = 0;
  int image_size = 160;
};

/// Writes <out>/cat_XX/{front,top}/NNNN.png. Each identity gets its own hue
/// and texture; each image gets random jitter in position and brightness.
/// Throws kInvalidConfig when `out_dir` exists and is not empty.
void generate_synthetic_dataset(const std::filesystem::path& out_dir, const SynthOptions& options);

}  // namespace siamreid
