#include "siamreid/tensor_archive.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "siamreid/error.hpp"

namespace siamreid {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'R', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error(ErrorCode::kIo, "truncated tensor archive " + path.string());
  }
  return v;
}

}  // namespace

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.size()));
  for (const auto& [name, tensor] : archive) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw Error(ErrorCode::kIo, "not a tensor archive: " + path.string());
  }
  if (get<std::uint32_t>(in, path) != kVersion) {
    throw Error(ErrorCode::kIo, "unsupported archive version in " + path.string());
  }
  const auto count = get<std::uint32_t>(in, path);
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw Error(ErrorCode::kIo, "truncated tensor archive " + path.string());
    }
    std::vector<int> shape(get<std::uint32_t>(in, path));
    for (int& d : shape) d = get<std::int32_t>(in, path);
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw Error(ErrorCode::kIo, "truncated tensor archive " + path.string());
    }
    archive.emplace(std::move(name), std::move(t));
  }
  return archive;
}

}  // namespace siamreid
