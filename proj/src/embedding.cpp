#include "siamreid/embedding.hpp"

#include <cmath>
#include <fstream>

#include "siamreid/error.hpp"
#include "siamreid/nn/backbones.hpp"
#include "siamreid/rng.hpp"

namespace fs = std::filesystem;

namespace siamreid {

std::string_view to_string(BackboneName b) noexcept {
  switch (b) {
    case BackboneName::kVgg16: return "vgg16";
    case BackboneName::kMobileNetV3Large: return "mobilenet_v3_large";
    case BackboneName::kEfficientNetB0: return "efficientnet_b0";
    case BackboneName::kTinyConv: return "tinyconv";
  }
  return "tinyconv";
}

BackboneName parse_backbone(std::string_view s) {
  if (s == "vgg16" || s == "vgg") return BackboneName::kVgg16;
  if (s == "mobilenet_v3_large" || s == "mobilenet") return BackboneName::kMobileNetV3Large;
  if (s == "efficientnet_b0" || s == "efficientnet") return BackboneName::kEfficientNetB0;
  if (s == "tinyconv") return BackboneName::kTinyConv;
  throw Error(ErrorCode::kInvalidConfig, "unknown backbone '" + std::string(s) +
                                             "' (vgg16, mobilenet_v3_large, efficientnet_b0, tinyconv)");
}

BackboneSpec BackboneSpec::defaults_for(BackboneName name) {
  const bool pretrained = name != BackboneName::kTinyConv;
  return {name, pretrained, pretrained};
}

void BackboneSpec::validate() const {
  if (name == BackboneName::kTinyConv && pretrained) {
    throw Error(ErrorCode::kInvalidConfig, "tinyconv has no pretrained weights");
  }
  if (pretrained && !frozen) {
    throw Error(ErrorCode::kInvalidConfig, "pretrained backbones are used frozen; fine-tuning is not supported");
  }
  if ((name == BackboneName::kMobileNetV3Large || name == BackboneName::kEfficientNetB0) && !frozen) {
    throw Error(ErrorCode::kInvalidConfig, std::string(to_string(name)) + " can only be used as a frozen extractor");
  }
}

double pairwise_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding lengths differ: " + std::to_string(a.size()) + " vs " +
                                                   std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

double pairwise_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  return pairwise_distance(std::span<const float>(a.values), std::span<const float>(b.values));
}

fs::path backbone_weights_path(const fs::path& cache_dir, BackboneName name) {
  return cache_dir / (std::string(to_string(name)) + ".srta");
}

std::size_t head_parameter_count(const std::vector<int>& feature_shape) noexcept {
  const std::size_t f = shape_numel(feature_shape);
  return f * kHiddenUnits + kHiddenUnits + static_cast<std::size_t>(kHiddenUnits) * kEmbeddingDim + kEmbeddingDim;
}

// ---- EmbeddingNetwork ----

EmbeddingNetwork::EmbeddingNetwork(BackboneSpec spec, std::uint64_t seed, nn::ParameterStore store,
                                   nn::Sequential backbone, nn::Sequential head, std::vector<int> feature_shape)
    : spec_(spec),
      seed_(seed),
      store_(std::move(store)),
      backbone_(std::move(backbone)),
      head_(std::move(head)),
      feature_shape_(std::move(feature_shape)) {}

namespace {

void check_input(const PixelTensor& image) {
  if (!image.is_canonical_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "network input must be 3x150x150, got " +
                                               shape_string(image.tensor().shape()));
  }
}

EmbeddingVector to_embedding(const Tensor& t) { return {{t.values().begin(), t.values().end()}}; }

}  // namespace

Tensor EmbeddingNetwork::features(const PixelTensor& image) const {
  check_input(image);
  return backbone_.forward(image.tensor(), nullptr);
}

EmbeddingVector EmbeddingNetwork::embed_features(const Tensor& feats) const {
  return to_embedding(head_.forward(feats, nullptr));
}

EmbeddingVector EmbeddingNetwork::embed(const PixelTensor& image) const { return embed_features(features(image)); }

std::vector<EmbeddingVector> EmbeddingNetwork::embed_batch(std::span<const PixelTensor> images) const {
  for (const auto& img : images) check_input(img);
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed(img));
  return out;
}

EmbeddingVector EmbeddingNetwork::forward_image(const PixelTensor& image, Trace& trace) const {
  check_input(image);
  trace.has_backbone = !spec_.frozen;
  const Tensor feats = backbone_.forward(image.tensor(), trace.has_backbone ? &trace.backbone : nullptr);
  return to_embedding(head_.forward(feats, &trace.head));
}

EmbeddingVector EmbeddingNetwork::forward_features(const Tensor& feats, Trace& trace) const {
  trace.has_backbone = false;
  return to_embedding(head_.forward(feats, &trace.head));
}

void EmbeddingNetwork::backward(const Trace& trace, std::span<const float> grad_embedding) const {
  Tensor grad({static_cast<int>(grad_embedding.size())}, {grad_embedding.begin(), grad_embedding.end()});
  Tensor grad_features = head_.backward(trace.head, grad);
  if (trace.has_backbone) backbone_.backward(trace.backbone, grad_features);
}

// ---- construction ----

namespace {

nn::Sequential build_backbone_graph(BackboneName name, nn::ParameterStore& store, bool trainable) {
  switch (name) {
    case BackboneName::kVgg16: return nn::build_vgg16(store, trainable);
    case BackboneName::kMobileNetV3Large: return nn::build_mobilenet_v3_large(store, trainable);
    case BackboneName::kEfficientNetB0: return nn::build_efficientnet_b0(store, trainable);
    case BackboneName::kTinyConv: return nn::build_tinyconv(store, trainable);
  }
  return nn::build_tinyconv(store, trainable);
}

bool ends_with(const std::string& s, std::string_view suffix) { return s.ends_with(suffix); }

// He-uniform conv/dense weights, zero biases, identity batch norm; `jitter_bn`
// perturbs the batch-norm statistics so stand-in weights exercise them.
void init_backbone(nn::ParameterStore& store, std::uint64_t seed, bool jitter_bn) {
  Rng rng(seed);
  for (std::size_t i = 0; i < store.size(); ++i) {
    nn::Parameter& p = store[i];
    if (!p.name.starts_with("backbone.")) continue;
    auto uniform = [&](float lo, float hi) {
      std::uniform_real_distribution<float> dist(lo, hi);
      for (float& v : p.value.values()) v = dist(rng);
    };
    if (p.value.rank() >= 2) {
      const std::size_t fan_in = p.value.size() / static_cast<std::size_t>(p.value.dim(0));
      const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
      uniform(-limit, limit);
    } else if (ends_with(p.name, "running_var")) {
      jitter_bn ? uniform(0.5f, 1.5f) : p.value.fill(1.0f);
    } else if (ends_with(p.name, "running_mean")) {
      jitter_bn ? uniform(-0.1f, 0.1f) : p.value.fill(0.0f);
    } else if (ends_with(p.name, "weight")) {  // batch-norm scale
      jitter_bn ? uniform(0.8f, 1.2f) : p.value.fill(1.0f);
    } else {
      jitter_bn ? uniform(-0.1f, 0.1f) : p.value.fill(0.0f);
    }
  }
}

void glorot_uniform(Tensor& w, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(w.dim(0) + w.dim(1)));
  std::uniform_real_distribution<float> dist(-limit, limit);
  for (float& v : w.values()) v = dist(rng);
}

}  // namespace

EmbeddingNetwork build_network(const BackboneSpec& spec, std::uint64_t seed, const fs::path& cache_dir) {
  spec.validate();
  nn::ParameterStore store;
  nn::Sequential backbone = build_backbone_graph(spec.name, store, !spec.frozen);
  const std::vector<int> feature_shape = backbone.output_shape({kImageChannels, kImageSize, kImageSize});
  const int feature_dim = static_cast<int>(shape_numel(feature_shape));

  auto& w1 = store.add("head.dense1.weight", Tensor({kHiddenUnits, feature_dim}), true);
  auto& b1 = store.add("head.dense1.bias", Tensor({kHiddenUnits}), true);
  auto& w2 = store.add("head.dense2.weight", Tensor({kEmbeddingDim, kHiddenUnits}), true);
  auto& b2 = store.add("head.dense2.bias", Tensor({kEmbeddingDim}), true);
  nn::Sequential head;
  head.add(std::make_unique<nn::Flatten>());
  head.add(std::make_unique<nn::Dense>(&w1, &b1));
  head.add(std::make_unique<nn::Activation>(nn::ActivationKind::kRelu));
  head.add(std::make_unique<nn::Dense>(&w2, &b2));

  if (spec.pretrained) {
    const fs::path weights = backbone_weights_path(cache_dir, spec.name);
    if (!fs::is_regular_file(weights)) {
      throw Error(ErrorCode::kWeightsUnavailable, "pretrained weights not found at " + weights.string());
    }
    TensorArchive archive;
    try {
      archive = load_archive(weights);
    } catch (const Error& e) {
      throw Error(ErrorCode::kWeightsUnavailable, e.what());
    }
    store.load(archive, "backbone.", true);
  } else {
    init_backbone(store, sub_seed(seed, {seed_offset::kInit, 0}), false);
  }

  Rng head_rng(sub_seed(seed, {seed_offset::kInit, 1}));
  glorot_uniform(w1.value, head_rng);
  glorot_uniform(w2.value, head_rng);

  return EmbeddingNetwork(spec, seed, std::move(store), std::move(backbone), std::move(head), feature_shape);
}

TensorArchive random_backbone_archive(BackboneName name, std::uint64_t seed) {
  nn::ParameterStore store;
  build_backbone_graph(name, store, false);
  init_backbone(store, seed, true);
  return store.export_values("backbone.");
}

// ---- checkpoints ----

nlohmann::json to_json(const CheckpointMetadata& m) {
  return {{"backbone", to_string(m.backbone.name)},
          {"pretrained", m.backbone.pretrained},
          {"frozen", m.backbone.frozen},
          {"seed", m.seed},
          {"embedding_dim", m.embedding_dim},
          {"config_hash", m.config_hash},
          {"backbone_checksum", m.backbone_checksum}};
}

CheckpointMetadata checkpoint_metadata_from_json(const nlohmann::json& j) {
  try {
    CheckpointMetadata m;
    m.backbone.name = parse_backbone(j.at("backbone").get<std::string>());
    m.backbone.pretrained = j.at("pretrained").get<bool>();
    m.backbone.frozen = j.at("frozen").get<bool>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.embedding_dim = j.at("embedding_dim").get<int>();
    m.config_hash = j.value("config_hash", "");
    m.backbone_checksum = j.at("backbone_checksum").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed checkpoint metadata: ") + e.what());
  }
}

CheckpointMetadata read_checkpoint_metadata(const fs::path& dir) {
  std::ifstream in(dir / "metadata.json");
  if (!in) throw Error(ErrorCode::kIo, "no checkpoint metadata in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  return checkpoint_metadata_from_json(j);
}

void save_checkpoint(const EmbeddingNetwork& network, const fs::path& dir, const std::string& config_hash) {
  fs::create_directories(dir);
  CheckpointMetadata meta{network.spec(), network.seed(), kEmbeddingDim, config_hash, network.backbone_checksum()};
  std::ofstream out(dir / "metadata.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint metadata in " + dir.string());
  out << to_json(meta).dump(2) << '\n';
  out.close();
  save_archive(network.parameters().export_values(network.spec().pretrained ? "head." : ""), dir / "weights.srta");
}

EmbeddingNetwork load_checkpoint(const fs::path& dir, const fs::path& cache_dir) {
  const CheckpointMetadata meta = read_checkpoint_metadata(dir);
  if (meta.embedding_dim != kEmbeddingDim) {
    throw Error(ErrorCode::kDimensionMismatch, "checkpoint embedding_dim is " + std::to_string(meta.embedding_dim));
  }
  EmbeddingNetwork network = build_network(meta.backbone, meta.seed, cache_dir);
  const TensorArchive archive = load_archive(dir / "weights.srta");
  network.parameters().load(archive, "head.", true);
  if (!meta.backbone.pretrained) network.parameters().load(archive, "backbone.", true);
  if (network.backbone_checksum() != meta.backbone_checksum) {
    throw Error(ErrorCode::kWeightsUnavailable,
                "backbone weights differ from the ones this checkpoint was trained with (" + dir.string() + ")");
  }
  return network;
}

}  // namespace siamreid
