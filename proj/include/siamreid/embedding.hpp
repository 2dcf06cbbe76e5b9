#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "siamreid/image.hpp"
#include "siamreid/nn/layers.hpp"
#include "siamreid/nn/parameters.hpp"

namespace siamreid {

inline constexpr int kEmbeddingDim = 128;
inline constexpr int kHiddenUnits = 256;

enum class BackboneName { kVgg16, kMobileNetV3Large, kEfficientNetB0, kTinyConv };

std::string_view to_string(BackboneName b) noexcept;
BackboneName parse_backbone(std::string_view s);

struct BackboneSpec {
  BackboneName name = BackboneName::kTinyConv;
  bool pretrained = false;
  bool frozen = false;

  /// Defaults used throughout: tinyconv trains from scratch, the others are
  /// pretrained frozen feature extractors.
  static BackboneSpec defaults_for(BackboneName name);
  /// Throws kInvalidConfig when the combination is not supported.
  void validate() const;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Euclidean distance. Throws kDimensionMismatch on unequal lengths.
double pairwise_distance(const EmbeddingVector& a, const EmbeddingVector& b);
double pairwise_distance(std::span<const float> a, std::span<const float> b);

/// Where pretrained backbone archives are looked up: <cache_dir>/<backbone>.srta
std::filesystem::path backbone_weights_path(const std::filesystem::path& cache_dir, BackboneName name);

/// Twin embedding network: backbone -> flatten -> dense(256, ReLU) -> dense(128, linear).
/// Both (or all three) branches of a training sample run through this single
/// instance, so there is exactly one parameter store.
class EmbeddingNetwork {
 public:
  EmbeddingNetwork(BackboneSpec spec, std::uint64_t seed, nn::ParameterStore store, nn::Sequential backbone,
                   nn::Sequential head, std::vector<int> feature_shape);
  EmbeddingNetwork(EmbeddingNetwork&&) noexcept = default;
  EmbeddingNetwork& operator=(EmbeddingNetwork&&) noexcept = default;

  const BackboneSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  nn::ParameterStore& parameters() noexcept { return store_; }
  const nn::ParameterStore& parameters() const noexcept { return store_; }

  /// Backbone output shape (C, H, W) for a 3x150x150 input.
  const std::vector<int>& feature_shape() const noexcept { return feature_shape_; }

  /// Backbone features, preprocessing included. Throws kShapeMismatch.
  Tensor features(const PixelTensor& image) const;
  EmbeddingVector embed_features(const Tensor& features) const;
  EmbeddingVector embed(const PixelTensor& image) const;
  std::vector<EmbeddingVector> embed_batch(std::span<const PixelTensor> images) const;

  /// Training pass. When the backbone is frozen the caller may pass cached
  /// features and skip the backbone entirely.
  struct Trace {
    bool has_backbone = false;
    nn::LayerContext backbone;
    nn::LayerContext head;
  };
  EmbeddingVector forward_image(const PixelTensor& image, Trace& trace) const;
  EmbeddingVector forward_features(const Tensor& features, Trace& trace) const;
  void backward(const Trace& trace, std::span<const float> grad_embedding) const;

  std::uint64_t backbone_checksum() const noexcept { return store_.checksum("backbone."); }
  std::uint64_t head_checksum() const noexcept { return store_.checksum("head."); }

 private:
  BackboneSpec spec_;
  std::uint64_t seed_;
  nn::ParameterStore store_;
  nn::Sequential backbone_;
  nn::Sequential head_;
  std::vector<int> feature_shape_;
};

/// Builds the network. Pretrained backbones are read from `cache_dir`
/// (kWeightsUnavailable if absent); head weights are seeded Glorot-uniform.
EmbeddingNetwork build_network(const BackboneSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& cache_dir = {});

/// Number of trainable scalars in the head for a given backbone feature shape.
std::size_t head_parameter_count(const std::vector<int>& feature_shape) noexcept;

/// Seeded random values for every backbone parameter, named as a pretrained
/// archive would be. Useful to stand in for downloaded weights.
TensorArchive random_backbone_archive(BackboneName name, std::uint64_t seed);

struct CheckpointMetadata {
  BackboneSpec backbone;
  std::uint64_t seed = 0;
  int embedding_dim = kEmbeddingDim;
  std::string config_hash;
  std::uint64_t backbone_checksum = 0;
};

nlohmann::json to_json(const CheckpointMetadata& m);
CheckpointMetadata checkpoint_metadata_from_json(const nlohmann::json& j);

/// Writes metadata.json and weights.srta into `dir`. Pretrained backbones are
/// not copied; their checksum is recorded and verified on load.
void save_checkpoint(const EmbeddingNetwork& network, const std::filesystem::path& dir,
                     const std::string& config_hash);
EmbeddingNetwork load_checkpoint(const std::filesystem::path& dir, const std::filesystem::path& cache_dir = {});
CheckpointMetadata read_checkpoint_metadata(const std::filesystem::path& dir);

}  // namespace siamreid
