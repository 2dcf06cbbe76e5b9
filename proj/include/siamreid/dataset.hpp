#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace siamreid {

enum class View { kFront, kTop };
enum class PhotoType { kFront, kTop, kAll };

std::string_view to_string(View v) noexcept;
std::string_view to_string(PhotoType p) noexcept;
View parse_view(std::string_view s);
PhotoType parse_photo_type(std::string_view s);
bool admits(PhotoType p, View v) noexcept;

struct ImageRecord {
  std::string identity_id;
  View view = View::kFront;
  std::filesystem::path path;
  int index = 0;  // ordinal within (identity, view), lexicographic by filename

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Orders by (identity, view, index).
bool record_less(const ImageRecord& a, const ImageRecord& b) noexcept;

struct DatasetCatalog {
  std::filesystem::path root;
  std::vector<ImageRecord> records;
  std::set<std::string> identities;
  PhotoType photo_type = PhotoType::kAll;

  friend bool operator==(const DatasetCatalog&, const DatasetCatalog&) = default;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

struct SplitManifest {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> val;
  std::vector<ImageRecord> test;
  std::uint64_t seed = 0;
  SplitFractions fractions;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

/// True for .jpg/.jpeg/.png in any letter case.
bool is_image_file(const std::filesystem::path& p);

DatasetCatalog scan_dataset(const std::filesystem::path& root);
DatasetCatalog filter_min_images(const DatasetCatalog& catalog, int min_count);
DatasetCatalog select_view(const DatasetCatalog& catalog, PhotoType photo_type);

/// Holdout size for an identity with n records: round-half-up of 0.2n, at least 2
/// once n >= 5. Val gets floor(holdout/2), test the rest.
int holdout_size(int n) noexcept;

SplitManifest stratified_split(const DatasetCatalog& catalog, std::uint64_t seed);

/// Keeps only records whose view is admitted by `photo_type`; splits stay disjoint.
SplitManifest restrict_manifest(const SplitManifest& manifest, PhotoType photo_type);

nlohmann::json manifest_to_json(const SplitManifest& manifest, const std::filesystem::path& root);
SplitManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);
void save_manifest(const SplitManifest& manifest, const std::filesystem::path& root,
                   const std::filesystem::path& file);
SplitManifest load_manifest(const std::filesystem::path& file, const std::filesystem::path& root);

}  // namespace siamreid
