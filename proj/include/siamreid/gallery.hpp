#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siamreid/dataset.hpp"
#include "siamreid/embedding.hpp"

namespace siamreid {

inline constexpr double kDefaultThreshold = 0.4;
inline constexpr const char* kUnknownLabel = "UNKNOWN";

struct GalleryEntry {
  ImageRecord anchor;
  EmbeddingVector embedding;
};

/// One anchor embedding per known identity; immutable once built.
class Gallery {
 public:
  Gallery() = default;
  /// Throws kEmptyAnchors, kDuplicateIdentity, kDimensionMismatch.
  explicit Gallery(std::vector<GalleryEntry> entries);

  const std::map<std::string, GalleryEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(const std::string& identity) const { return entries_.contains(identity); }

 private:
  std::map<std::string, GalleryEntry> entries_;
};

struct MatchResult {
  std::optional<std::string> verdict;  // nullopt means UNKNOWN
  std::map<std::string, double> distances;
  double threshold = kDefaultThreshold;
};

nlohmann::json to_json(const MatchResult& m);

/// One anchor per identity: the lowest (view, index) record of that identity in
/// `split`, or a seeded uniform pick when `seed` is given.
std::vector<ImageRecord> select_anchors(std::span<const ImageRecord> split,
                                        std::optional<std::uint64_t> seed = std::nullopt);

Gallery build_gallery(const EmbeddingNetwork& network, std::span<const ImageRecord> anchors);

/// Nearest anchor if its distance is <= threshold (both rounded to float), else
/// UNKNOWN. Ties go to the lexicographically smallest identity.
MatchResult identify_embedding(const Gallery& gallery, const EmbeddingVector& query,
                               double threshold = kDefaultThreshold);
MatchResult identify(const EmbeddingNetwork& network, const Gallery& gallery, const PixelTensor& query,
                     double threshold = kDefaultThreshold);

nlohmann::json gallery_to_json(const Gallery& gallery);
Gallery gallery_from_json(const nlohmann::json& j);
void save_gallery(const Gallery& gallery, const std::filesystem::path& file);
Gallery load_gallery(const std::filesystem::path& file);

}  // namespace siamreid
