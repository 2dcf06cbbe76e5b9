#include "siamreid/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "siamreid/error.hpp"
#include "siamreid/log.hpp"
#include "siamreid/rng.hpp"

namespace fs = std::filesystem;

namespace siamreid {

std::string_view to_string(View v) noexcept { return v == View::kFront ? "front" : "top"; }

std::string_view to_string(PhotoType p) noexcept {
  switch (p) {
    case PhotoType::kFront: return "front";
    case PhotoType::kTop: return "top";
    case PhotoType::kAll: return "all";
  }
  return "all";
}

View parse_view(std::string_view s) {
  if (s == "front") return View::kFront;
  if (s == "top") return View::kTop;
  throw Error(ErrorCode::kInvalidConfig, "unknown view '" + std::string(s) + "'");
}

PhotoType parse_photo_type(std::string_view s) {
  if (s == "front") return PhotoType::kFront;
  if (s == "top") return PhotoType::kTop;
  if (s == "all") return PhotoType::kAll;
  throw Error(ErrorCode::kInvalidConfig, "unknown photo type '" + std::string(s) + "' (front, top, all)");
}

bool admits(PhotoType p, View v) noexcept {
  return p == PhotoType::kAll || (p == PhotoType::kFront) == (v == View::kFront);
}

bool record_less(const ImageRecord& a, const ImageRecord& b) noexcept {
  if (a.identity_id != b.identity_id) return a.identity_id < b.identity_id;
  if (a.view != b.view) return a.view < b.view;
  return a.index < b.index;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

namespace {

std::set<std::string> identities_of(const std::vector<ImageRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.identity_id);
  return ids;
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

}  // namespace

DatasetCatalog scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::kMissingRoot, "dataset root not found: " + root.string());

  DatasetCatalog catalog;
  catalog.root = root;
  catalog.photo_type = PhotoType::kAll;
  for (const auto& identity_dir : sorted_children(root, true)) {
    const std::string identity = identity_dir.filename().string();
    for (View view : {View::kFront, View::kTop}) {
      const fs::path view_dir = identity_dir / std::string(to_string(view));
      if (!fs::is_directory(view_dir)) continue;
      int index = 0;
      for (const auto& file : sorted_children(view_dir, false)) {
        if (!is_image_file(file)) {
          log_warning("skipping non-image file " + file.string());
          continue;
        }
        catalog.records.push_back({identity, view, file, index++});
      }
    }
  }
  if (catalog.records.empty()) throw Error(ErrorCode::kEmptyDataset, "no images under " + root.string());
  catalog.identities = identities_of(catalog.records);
  return catalog;
}

DatasetCatalog filter_min_images(const DatasetCatalog& catalog, int min_count) {
  if (min_count < 1) throw Error(ErrorCode::kInvalidConfig, "min_count must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& r : catalog.records) {
    if (admits(catalog.photo_type, r.view)) ++counts[r.identity_id];
  }
  DatasetCatalog out;
  out.root = catalog.root;
  out.photo_type = catalog.photo_type;
  for (const auto& r : catalog.records) {
    if (counts[r.identity_id] >= min_count) out.records.push_back(r);
  }
  out.identities = identities_of(out.records);
  if (out.records.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no identity has at least " + std::to_string(min_count) + " images");
  }
  return out;
}

DatasetCatalog select_view(const DatasetCatalog& catalog, PhotoType photo_type) {
  DatasetCatalog out;
  out.root = catalog.root;
  out.photo_type = photo_type;
  std::copy_if(catalog.records.begin(), catalog.records.end(), std::back_inserter(out.records),
               [&](const ImageRecord& r) { return admits(photo_type, r.view); });
  out.identities = identities_of(out.records);
  if (out.records.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no records for photo type " + std::string(to_string(photo_type)));
  }
  return out;
}

int holdout_size(int n) noexcept {
  const int rounded = (2 * n + 5) / 10;
  // below five records a second held-out image would push train more than one record under 0.8n
  return n >= 5 ? std::max(2, rounded) : rounded;
}

SplitManifest stratified_split(const DatasetCatalog& catalog, std::uint64_t seed) {
  std::map<std::string, std::vector<ImageRecord>> by_identity;
  for (const auto& r : catalog.records) by_identity[r.identity_id].push_back(r);

  SplitManifest manifest;
  manifest.seed = seed;
  for (auto& [identity, records] : by_identity) {
    const int n = static_cast<int>(records.size());
    if (n < 3) {
      throw Error(ErrorCode::kTooFewImages,
                  "identity '" + identity + "' has " + std::to_string(n) + " images; at least 3 are required");
    }
    std::sort(records.begin(), records.end(), record_less);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(sub_seed(seed, {stable_hash(identity)}));
    std::shuffle(order.begin(), order.end(), rng);

    const int holdout = holdout_size(n);
    const int n_val = holdout / 2;
    std::vector<char> role(n, 't');  // t=train, v=val, s=test
    for (int k = 0; k < holdout; ++k) role[order[k]] = k < n_val ? 'v' : 's';
    for (int i = 0; i < n; ++i) {
      auto& dst = role[i] == 't' ? manifest.train : role[i] == 'v' ? manifest.val : manifest.test;
      dst.push_back(records[i]);
    }
  }
  return manifest;
}

SplitManifest restrict_manifest(const SplitManifest& manifest, PhotoType photo_type) {
  auto keep = [&](const std::vector<ImageRecord>& in) {
    std::vector<ImageRecord> out;
    std::copy_if(in.begin(), in.end(), std::back_inserter(out),
                 [&](const ImageRecord& r) { return admits(photo_type, r.view); });
    return out;
  };
  SplitManifest out = manifest;
  out.train = keep(manifest.train);
  out.val = keep(manifest.val);
  out.test = keep(manifest.test);
  if (out.train.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "manifest has no " + std::string(to_string(photo_type)) + " records");
  }
  return out;
}

namespace {

nlohmann::json records_to_json(const std::vector<ImageRecord>& records, const fs::path& root) {
  auto arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"identity", r.identity_id},
                   {"view", to_string(r.view)},
                   {"path", r.path.lexically_relative(root).generic_string()},
                   {"index", r.index}});
  }
  return arr;
}

std::vector<ImageRecord> records_from_json(const nlohmann::json& arr, const fs::path& root) {
  std::vector<ImageRecord> out;
  for (const auto& j : arr) {
    ImageRecord r;
    r.identity_id = j.at("identity").get<std::string>();
    r.view = parse_view(j.at("view").get<std::string>());
    r.path = root / fs::path(j.at("path").get<std::string>());
    r.index = j.value("index", 0);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

nlohmann::json manifest_to_json(const SplitManifest& m, const fs::path& root) {
  return {{"seed", m.seed},
          {"fractions", {m.fractions.train, m.fractions.val, m.fractions.test}},
          {"splits",
           {{"train", records_to_json(m.train, root)},
            {"val", records_to_json(m.val, root)},
            {"test", records_to_json(m.test, root)}}}};
}

SplitManifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
  try {
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& f = j.at("fractions");
    m.fractions = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()};
    const auto& s = j.at("splits");
    m.train = records_from_json(s.at("train"), root);
    m.val = records_from_json(s.at("val"), root);
    m.test = records_from_json(s.at("test"), root);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed manifest: ") + e.what());
  }
}

void save_manifest(const SplitManifest& manifest, const fs::path& root, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out << manifest_to_json(manifest, root).dump(2) << '\n';
}

SplitManifest load_manifest(const fs::path& file, const fs::path& root) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read manifest " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "malformed manifest " + file.string() + ": " + e.what());
  }
  return manifest_from_json(j, root);
}

}  // namespace siamreid
