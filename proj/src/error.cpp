#include "siamreid/error.hpp"

namespace siamreid {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kMissingRoot: return "MissingRoot";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kTooFewImages: return "TooFewImages";
    case ErrorCode::kDecodeFailure: return "DecodeFailure";
    case ErrorCode::kSingleIdentity: return "SingleIdentity";
    case ErrorCode::kWeightsUnavailable: return "WeightsUnavailable";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidMargin: return "InvalidMargin";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptyGrid: return "EmptyGrid";
    case ErrorCode::kDuplicateIdentity: return "DuplicateIdentity";
    case ErrorCode::kEmptyAnchors: return "EmptyAnchors";
    case ErrorCode::kEmptyTestSet: return "EmptyTestSet";
    case ErrorCode::kMissingGalleryIdentity: return "MissingGalleryIdentity";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace siamreid
