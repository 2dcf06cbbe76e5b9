#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace siamreid {

enum class ErrorCode {
  kMissingRoot,
  kEmptyDataset,
  kTooFewImages,
  kDecodeFailure,
  kSingleIdentity,
  kWeightsUnavailable,
  kShapeMismatch,
  kDimensionMismatch,
  kInvalidMargin,
  kInvalidConfig,
  kNonFiniteLoss,
  kEmptyGrid,
  kDuplicateIdentity,
  kEmptyAnchors,
  kEmptyTestSet,
  kMissingGalleryIdentity,
  kIo,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the toolkit; `code()` says which contract failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace siamreid
