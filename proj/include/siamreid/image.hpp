#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "siamreid/dataset.hpp"
#include "siamreid/tensor.hpp"

namespace siamreid {

inline constexpr int kImageSize = 150;
inline constexpr int kImageChannels = 3;

/// RGB image as a CHW float tensor with values in [0, 1].
/// Canonical network inputs are 3x150x150; other sizes are representable
/// so that shape errors surface where they are consumed.
class PixelTensor {
 public:
  PixelTensor() : PixelTensor(kImageSize, kImageSize) {}
  PixelTensor(int height, int width, int channels = kImageChannels, float fill = 0.0f)
      : tensor_({channels, height, width}, fill) {}
  explicit PixelTensor(Tensor chw);

  int channels() const { return tensor_.dim(0); }
  int height() const { return tensor_.dim(1); }
  int width() const { return tensor_.dim(2); }

  float& at(int c, int y, int x) noexcept { return tensor_.at(c, y, x); }
  float at(int c, int y, int x) const noexcept { return tensor_.at(c, y, x); }

  const Tensor& tensor() const noexcept { return tensor_; }
  Tensor& tensor() noexcept { return tensor_; }

  bool is_canonical_shape() const noexcept;
  /// Shape is 3x150x150 and all values finite within [0, 1].
  bool is_valid() const noexcept;

  friend bool operator==(const PixelTensor&, const PixelTensor&) = default;

 private:
  Tensor tensor_;
};

/// Decode, convert to RGB, bilinear-resize (stretching) to 150x150, scale to [0, 1].
PixelTensor load_image(const std::filesystem::path& path);
inline PixelTensor load_image(const ImageRecord& record) { return load_image(record.path); }

enum class AugmentationKind { kNone, kFlip, kRotate, kNoise };

std::string_view to_string(AugmentationKind k) noexcept;
AugmentationKind parse_augmentation(std::string_view s);

inline constexpr double kMaxRotationDegrees = 20.0;
/// Standard deviation in [0, 1] units (0.05 x 255 on the 8-bit scale).
inline constexpr double kNoiseSigma = 0.05;

/// The rotation angle `augment(kRotate, seed)` uses, in degrees, uniform in [-20, 20].
double rotation_angle_for_seed(std::uint64_t seed);

/// Returns a new tensor; the input is never modified.
PixelTensor augment(const PixelTensor& image, AugmentationKind kind, std::uint64_t seed);

/// The additive noise field `augment(kNoise, seed)` draws, before clamping.
Tensor noise_field(const std::vector<int>& shape, std::uint64_t seed);

}  // namespace siamreid
