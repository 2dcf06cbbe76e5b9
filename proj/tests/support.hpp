#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "siamreid/dataset.hpp"

namespace siamreid::testing {

/// Directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("siamreid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// In-memory catalog with `counts[i]` top-view records for identity "id_<i>".
inline DatasetCatalog make_catalog(const std::vector<int>& counts, View view = View::kTop) {
  DatasetCatalog c;
  c.root = "/nonexistent";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "id_%02zu", i);
    c.identities.insert(id);
    for (int k = 0; k < counts[i]; ++k) {
      char file[32];
      std::snprintf(file, sizeof file, "%04d.png", k);
      c.records.push_back({id, view, c.root / id / std::string(to_string(view)) / file, k});
    }
  }
  return c;
}

}  // namespace siamreid::testing
