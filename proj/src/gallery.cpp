#include "siamreid/gallery.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>

#include "siamreid/error.hpp"
#include "siamreid/rng.hpp"

namespace fs = std::filesystem;

namespace siamreid {

Gallery::Gallery(std::vector<GalleryEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::kEmptyAnchors, "gallery needs at least one anchor");
  for (auto& e : entries) {
    if (e.embedding.size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw Error(ErrorCode::kDimensionMismatch, "anchor embedding for '" + e.anchor.identity_id + "' has length " +
                                                     std::to_string(e.embedding.size()));
    }
    const std::string id = e.anchor.identity_id;
    if (!entries_.emplace(id, std::move(e)).second) {
      throw Error(ErrorCode::kDuplicateIdentity, "more than one anchor for identity '" + id + "'");
    }
  }
}

nlohmann::json to_json(const MatchResult& m) {
  nlohmann::json distances = nlohmann::json::object();
  for (const auto& [id, d] : m.distances) distances[id] = d;
  return {{"verdict", m.verdict.value_or(kUnknownLabel)}, {"distances", distances}, {"threshold", m.threshold}};
}

std::vector<ImageRecord> select_anchors(std::span<const ImageRecord> split, std::optional<std::uint64_t> seed) {
  std::map<std::string, std::vector<const ImageRecord*>> by_identity;
  for (const auto& r : split) by_identity[r.identity_id].push_back(&r);
  std::vector<ImageRecord> anchors;
  for (auto& [id, members] : by_identity) {
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return record_less(*a, *b); });
    std::size_t pick = 0;
    if (seed) {
      Rng rng(sub_seed(*seed, {stable_hash(id)}));
      pick = std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng);
    }
    anchors.push_back(*members[pick]);
  }
  return anchors;
}

Gallery build_gallery(const EmbeddingNetwork& network, std::span<const ImageRecord> anchors) {
  if (anchors.empty()) throw Error(ErrorCode::kEmptyAnchors, "no anchor images given");
  std::map<std::string, int> seen;
  for (const auto& a : anchors) {
    if (++seen[a.identity_id] > 1) {
      throw Error(ErrorCode::kDuplicateIdentity, "more than one anchor for identity '" + a.identity_id + "'");
    }
  }
  std::vector<GalleryEntry> entries;
  entries.reserve(anchors.size());
  for (const auto& a : anchors) entries.push_back({a, network.embed(load_image(a))});
  return Gallery(std::move(entries));
}

MatchResult identify_embedding(const Gallery& gallery, const EmbeddingVector& query, double threshold) {
  if (gallery.size() == 0) throw Error(ErrorCode::kEmptyAnchors, "gallery is empty");
  MatchResult result;
  result.threshold = threshold;
  double best = std::numeric_limits<double>::infinity();
  const std::string* best_id = nullptr;
  // entries are ordered by identity, so strict < keeps the smallest id on ties
  for (const auto& [id, entry] : gallery.entries()) {
    const double d = pairwise_distance(query, entry.embedding);
    result.distances[id] = d;
    if (d < best) {
      best = d;
      best_id = &id;
    }
  }
  // embeddings are float32, so the boundary is compared at that resolution
  if (best_id && static_cast<float>(best) <= static_cast<float>(threshold)) result.verdict = *best_id;
  return result;
}

MatchResult identify(const EmbeddingNetwork& network, const Gallery& gallery, const PixelTensor& query,
                     double threshold) {
  return identify_embedding(gallery, network.embed(query), threshold);
}

nlohmann::json gallery_to_json(const Gallery& gallery) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, e] : gallery.entries()) {
    j[id] = {{"anchor_path", e.anchor.path.generic_string()},
             {"view", to_string(e.anchor.view)},
             {"index", e.anchor.index},
             {"embedding", e.embedding.values}};
  }
  return j;
}

Gallery gallery_from_json(const nlohmann::json& j) {
  try {
    std::vector<GalleryEntry> entries;
    for (const auto& [id, e] : j.items()) {
      GalleryEntry entry;
      entry.anchor.identity_id = id;
      entry.anchor.path = e.at("anchor_path").get<std::string>();
      entry.anchor.view = parse_view(e.value("view", "front"));
      entry.anchor.index = e.value("index", 0);
      entry.embedding.values = e.at("embedding").get<std::vector<float>>();
      entries.push_back(std::move(entry));
    }
    return Gallery(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed gallery: ") + e.what());
  }
}

void save_gallery(const Gallery& gallery, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out << gallery_to_json(gallery).dump(2) << '\n';
}

Gallery load_gallery(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read gallery " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "malformed gallery " + file.string() + ": " + e.what());
  }
  return gallery_from_json(j);
}

}  // namespace siamreid
