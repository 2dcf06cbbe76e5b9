#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siamreid/dataset.hpp"
#include "siamreid/embedding.hpp"
#include "siamreid/image.hpp"
#include "siamreid/losses.hpp"
#include "siamreid/metrics.hpp"

namespace siamreid {

struct ExperimentConfig {
  PhotoType photo_type = PhotoType::kTop;
  BackboneSpec backbone = BackboneSpec::defaults_for(BackboneName::kTinyConv);
  LossConfig loss = LossConfig::defaults_for(LossKind::kContrastive);
  int epochs = 100;
  double learning_rate = 1e-4;
  AugmentationKind augmentation = AugmentationKind::kNone;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double threshold = 0.4;
  int samples_per_record = 1;  // pairs or triplets drawn per training record

  /// Throws kInvalidConfig.
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
/// 16 hex digits, FNV-1a over the canonical JSON form.
std::string config_hash(const ExperimentConfig& c);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
};

enum class RunStatus { kOk, kFailed };

struct ExperimentResult {
  ExperimentConfig config;
  TrainingHistory history;
  MetricsReport metrics;
  std::filesystem::path checkpoint_path;
  RunStatus status = RunStatus::kOk;
  std::string error;
};

nlohmann::json to_json(const ExperimentResult& r);
ExperimentResult experiment_result_from_json(const nlohmann::json& j);

struct TrainOptions {
  std::filesystem::path run_dir;    // receives config.json, history.csv, checkpoint/, ...
  std::filesystem::path cache_dir;  // pretrained backbone archives
  bool deterministic = true;
  std::ostream* log = nullptr;
  /// Called after each epoch; the frozen-backbone check runs regardless.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains one configuration end-to-end and evaluates it on the test split.
/// Throws kInvalidConfig, kNonFiniteLoss, or whatever the data/model layers raise.
ExperimentResult train(const ExperimentConfig& config, const SplitManifest& manifest, const TrainOptions& options);

void write_history_csv(const TrainingHistory& history, const std::filesystem::path& file);

using ManifestProvider = std::function<SplitManifest(const ExperimentConfig&)>;

struct SweepOptions {
  std::filesystem::path out_dir;
  std::filesystem::path cache_dir;
  bool deterministic = true;
  std::ostream* log = nullptr;
};

inline constexpr const char* kResultsHeader =
    "photo_type,backbone,loss,learning_rate,augmentation,epochs,seed,accuracy,f1_macro,status,checkpoint_path";

/// Runs configs one after another in the given order. A failing config becomes
/// a `failed` row; the rest still run. Each finished config is appended to
/// <out_dir>/results.csv immediately; configs with an `ok` row there already
/// are skipped (their stored result is returned instead). Throws kEmptyGrid.
std::vector<ExperimentResult> run_sweep(const std::vector<ExperimentConfig>& grid,
                                        const ManifestProvider& manifest_provider, const SweepOptions& options);

/// Run directory for a config inside a sweep output directory.
std::filesystem::path run_directory(const std::filesystem::path& out_dir, const ExperimentConfig& c);

/// Value lists per hyperparameter; the cross product is the grid.
/// Throws kInvalidConfig with the offending field (or line for malformed JSON).
std::vector<ExperimentConfig> parse_sweep_definition(const std::string& text, const ExperimentConfig& base);

}  // namespace siamreid
