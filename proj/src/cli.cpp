#include "siamreid/cli.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "siamreid/dataset.hpp"
#include "siamreid/error.hpp"
#include "siamreid/gallery.hpp"
#include "siamreid/metrics.hpp"
#include "siamreid/report.hpp"
#include "siamreid/rng.hpp"
#include "siamreid/synth.hpp"
#include "siamreid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace siamreid {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitTraining = 3;

/// Fully resolved command-line configuration.
struct CliConfig {
  std::string root;
  std::string out;
  std::string cache_dir = "weights";
  std::string config_file;
  std::uint64_t seed = 0;
  bool deterministic = true;

  std::string photo_type = "top";
  int min_count = 40;
  std::string manifest;

  std::string backbone = "tinyconv";
  std::string pretrained;  // "", "true", "false"; empty means the backbone's default
  std::string frozen;
  std::string loss = "contrastive";
  double margin = 0.0;  // 0 means the loss's default
  int epochs = 100;
  double learning_rate = 1e-4;
  std::string augmentation = "none";
  int batch_size = 32;
  double threshold = kDefaultThreshold;
  int samples_per_record = 1;

  std::string sweep_file;
  std::string checkpoint;
  std::string gallery;
  std::string image;

  int identities = 8;
  int images = 40;
  int image_size = 160;
};

/// Stage-tagged input error, reported with exit code 2.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

class Bindings {
 public:
  template <class T>
  CLI::Option* add(CLI::App& app, const std::string& flag, T& target, const std::string& help) {
    CLI::Option* opt = app.add_option("--" + flag, target, help)->capture_default_str();
    entries_.push_back({flag, opt, [&target](const json& j) { target = j.get<T>(); }});
    return opt;
  }

  CLI::Option* flag(CLI::App& app, const std::string& flag, bool& target, const std::string& help) {
    CLI::Option* opt = app.add_flag("--" + flag + ",!--no-" + flag, target, help)->capture_default_str();
    entries_.push_back({flag, opt, [&target](const json& j) { target = j.get<bool>(); }});
    return opt;
  }

  /// Fills every option the user did not pass on the command line from `file`.
  void apply_file(const json& file) {
    for (const auto& [raw_key, value] : file.items()) {
      std::string key = raw_key;
      std::replace(key.begin(), key.end(), '_', '-');
      bool known = false;
      for (auto& e : entries_) {
        if (e.key != key) continue;
        known = true;
        if (e.option->count() == 0) {
          try {
            e.set(value);
          } catch (const json::exception& ex) {
            throw Error(ErrorCode::kInvalidConfig, "config key '" + raw_key + "': " + ex.what());
          }
        }
      }
      if (!known) throw Error(ErrorCode::kInvalidConfig, "config key '" + raw_key + "' matches no option");
    }
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> set;
  };
  std::vector<Entry> entries_;
};

json resolved(const CliConfig& c, const std::string& command) {
  return {{"command", command},
          {"root", c.root},
          {"out", c.out},
          {"cache-dir", c.cache_dir},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"photo-type", c.photo_type},
          {"min-count", c.min_count},
          {"manifest", c.manifest},
          {"backbone", c.backbone},
          {"pretrained", c.pretrained},
          {"frozen", c.frozen},
          {"loss", c.loss},
          {"margin", c.margin},
          {"epochs", c.epochs},
          {"learning-rate", c.learning_rate},
          {"augmentation", c.augmentation},
          {"batch-size", c.batch_size},
          {"threshold", c.threshold},
          {"samples-per-record", c.samples_per_record},
          {"sweep-file", c.sweep_file},
          {"checkpoint", c.checkpoint},
          {"gallery", c.gallery},
          {"image", c.image},
          {"identities", c.identities},
          {"images", c.images},
          {"image-size", c.image_size}};
}

bool parse_bool(const std::string& s, const char* what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error(ErrorCode::kInvalidConfig, std::string(what) + " must be true or false");
}

ExperimentConfig experiment_from(const CliConfig& c) {
  ExperimentConfig e;
  e.photo_type = parse_photo_type(c.photo_type);
  e.backbone = BackboneSpec::defaults_for(parse_backbone(c.backbone));
  if (!c.pretrained.empty()) e.backbone.pretrained = parse_bool(c.pretrained, "pretrained");
  if (!c.frozen.empty()) e.backbone.frozen = parse_bool(c.frozen, "frozen");
  e.loss = LossConfig::defaults_for(parse_loss(c.loss));
  if (c.margin != 0.0) e.loss.margin = c.margin;
  e.epochs = c.epochs;
  e.learning_rate = c.learning_rate;
  e.augmentation = parse_augmentation(c.augmentation);
  e.batch_size = c.batch_size;
  e.seed = c.seed;
  e.threshold = c.threshold;
  e.samples_per_record = c.samples_per_record;
  e.validate();
  return e;
}

template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

SplitManifest build_manifest(const CliConfig& c, PhotoType photo_type) {
  if (c.root.empty()) throw StageError("scan", "--root is required");
  const auto catalog = stage("scan", [&] { return scan_dataset(c.root); });
  const auto viewed = stage("select_view", [&] { return select_view(catalog, photo_type); });
  const auto filtered = stage("filter", [&] { return filter_min_images(viewed, c.min_count); });
  return stage("split", [&] { return stratified_split(filtered, sub_seed(c.seed, {seed_offset::kSplit})); });
}

SplitManifest manifest_for(const CliConfig& c, PhotoType photo_type) {
  if (!c.manifest.empty()) {
    if (c.root.empty()) throw StageError("manifest", "--root is required to resolve manifest paths");
    return stage("manifest", [&] { return load_manifest(c.manifest, c.root); });
  }
  return build_manifest(c, photo_type);
}

int cmd_split(const CliConfig& c, std::ostream& out) {
  if (c.out.empty()) throw StageError("write", "--out (manifest file) is required");
  const PhotoType photo_type = parse_photo_type(c.photo_type);
  const SplitManifest manifest = build_manifest(c, photo_type);
  stage("write", [&] {
    save_manifest(manifest, c.root, c.out);
    return 0;
  });
  std::set<std::string> ids;
  for (const auto& r : manifest.train) ids.insert(r.identity_id);
  out << json{{"manifest", c.out},
              {"identities", ids.size()},
              {"train", manifest.train.size()},
              {"val", manifest.val.size()},
              {"test", manifest.test.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_train(const CliConfig& c, std::ostream& out, std::ostream& err) {
  if (c.out.empty()) throw Error(ErrorCode::kInvalidConfig, "--out (run directory) is required");
  const ExperimentConfig config = experiment_from(c);
  const SplitManifest manifest = manifest_for(c, config.photo_type);
  TrainOptions options;
  options.run_dir = c.out;
  options.cache_dir = c.cache_dir;
  options.deterministic = c.deterministic;
  options.log = &err;
  const ExperimentResult result = train(config, manifest, options);
  out << json{{"config_hash", config_hash(config)},
              {"accuracy", result.metrics.accuracy},
              {"f1_macro", result.metrics.f1_macro},
              {"f1_micro", result.metrics.f1_micro},
              {"n_test", result.metrics.n_test},
              {"checkpoint", result.checkpoint_path.generic_string()}}
             .dump()
      << '\n';
  return kExitOk;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_sweep(const CliConfig& c, std::ostream& out, std::ostream& err) {
  if (c.sweep_file.empty()) throw Error(ErrorCode::kInvalidConfig, "--sweep-file is required");
  if (c.out.empty()) throw Error(ErrorCode::kInvalidConfig, "--out is required");
  const ExperimentConfig base = experiment_from(c);
  const auto grid = parse_sweep_definition(read_text(c.sweep_file), base);

  std::map<PhotoType, SplitManifest> cache;
  std::optional<SplitManifest> fixed;
  if (!c.manifest.empty()) fixed = manifest_for(c, base.photo_type);
  const ManifestProvider provider = [&](const ExperimentConfig& cfg) -> SplitManifest {
    if (fixed) return restrict_manifest(*fixed, cfg.photo_type);
    auto it = cache.find(cfg.photo_type);
    if (it == cache.end()) {
      it = cache.emplace(cfg.photo_type, build_manifest(c, cfg.photo_type)).first;
      save_manifest(it->second, c.root,
                    fs::path(c.out) / "manifests" / (std::string(to_string(cfg.photo_type)) + ".json"));
    }
    return it->second;
  };

  SweepOptions options;
  options.out_dir = c.out;
  options.cache_dir = c.cache_dir;
  options.deterministic = c.deterministic;
  options.log = &err;
  const auto results = run_sweep(grid, provider, options);
  const auto artifacts = write_report(results, fs::path(c.out) / "report");
  int failed = 0;
  for (const auto& r : results) failed += r.status == RunStatus::kFailed;
  out << json{{"configs", results.size()},
              {"failed", failed},
              {"results", (fs::path(c.out) / "results.csv").generic_string()},
              {"top5", artifacts.top5_csv.generic_string()}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_evaluate(const CliConfig& c, std::ostream& out) {
  if (c.checkpoint.empty()) throw Error(ErrorCode::kInvalidConfig, "--checkpoint is required");
  const EmbeddingNetwork network = load_checkpoint(c.checkpoint, c.cache_dir);
  const SplitManifest manifest = restrict_manifest(manifest_for(c, parse_photo_type(c.photo_type)),
                                                   parse_photo_type(c.photo_type));
  const Gallery gallery =
      c.gallery.empty() ? build_gallery(network, select_anchors(manifest.train)) : load_gallery(c.gallery);
  out << to_json(evaluate(network, gallery, manifest.test, c.threshold)).dump() << '\n';
  return kExitOk;
}

int cmd_identify(const CliConfig& c, std::ostream& out) {
  if (c.checkpoint.empty() || c.gallery.empty() || c.image.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "--checkpoint, --gallery and --image are required");
  }
  const EmbeddingNetwork network = load_checkpoint(c.checkpoint, c.cache_dir);
  const Gallery gallery = load_gallery(c.gallery);
  out << to_json(identify(network, gallery, load_image(fs::path(c.image)), c.threshold)).dump() << '\n';
  return kExitOk;
}

int cmd_synth(const CliConfig& c, std::ostream& out) {
  if (c.out.empty()) throw Error(ErrorCode::kInvalidConfig, "--out is required");
  generate_synthetic_dataset(c.out, {c.identities, c.images, c.seed, c.image_size});
  out << json{{"root", c.out}, {"identities", c.identities}, {"images_per_view", c.images}}.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CliConfig c;
  Bindings b;
  CLI::App app{"Siamese re-identification toolkit: dataset splits, training, sweeps, gallery matching"};
  app.require_subcommand(1);
  app.fallthrough();
  b.add(app, "root", c.root, "dataset root (<root>/<identity>/{front,top}/*.jpg)");
  b.add(app, "out", c.out, "output file or directory");
  b.add(app, "seed", c.seed, "master seed; per-stage seeds derive from it");
  b.flag(app, "deterministic", c.deterministic, "deterministic execution");
  b.add(app, "cache-dir", c.cache_dir, "directory holding pretrained backbone archives");
  app.add_option("--config", c.config_file, "JSON file with flat keys named like the flags");

  auto experiment_options = [&](CLI::App* sub) {
    b.add(*sub, "photo-type", c.photo_type, "front, top or all");
    b.add(*sub, "min-count", c.min_count, "minimum images per identity");
    b.add(*sub, "manifest", c.manifest, "split manifest JSON (otherwise split from --root)");
    b.add(*sub, "backbone", c.backbone, "vgg16, mobilenet_v3_large, efficientnet_b0, tinyconv");
    b.add(*sub, "pretrained", c.pretrained, "override backbone default (true/false)");
    b.add(*sub, "frozen", c.frozen, "override backbone default (true/false)");
    b.add(*sub, "loss", c.loss, "contrastive or triplet");
    b.add(*sub, "margin", c.margin, "loss margin (0 = loss default)");
    b.add(*sub, "epochs", c.epochs, "training epochs");
    b.add(*sub, "learning-rate", c.learning_rate, "Adam learning rate");
    b.add(*sub, "augmentation", c.augmentation, "none, flip, rotate, noise");
    b.add(*sub, "batch-size", c.batch_size, "samples per optimizer step");
    b.add(*sub, "threshold", c.threshold, "gallery match threshold");
    b.add(*sub, "samples-per-record", c.samples_per_record, "pairs/triplets drawn per training image");
  };

  auto* split = app.add_subcommand("split", "scan, filter, select view and write a stratified split manifest");
  b.add(*split, "photo-type", c.photo_type, "front, top or all");
  b.add(*split, "min-count", c.min_count, "minimum images per identity");

  auto* train_cmd = app.add_subcommand("train", "train and evaluate one configuration");
  experiment_options(train_cmd);

  auto* sweep = app.add_subcommand("sweep", "run every configuration of a sweep file sequentially");
  experiment_options(sweep);
  b.add(*sweep, "sweep-file", c.sweep_file, "JSON object of value lists per hyperparameter");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a manifest's test split");
  b.add(*evaluate_cmd, "checkpoint", c.checkpoint, "checkpoint directory");
  b.add(*evaluate_cmd, "manifest", c.manifest, "split manifest JSON (otherwise split from --root)");
  b.add(*evaluate_cmd, "gallery", c.gallery, "gallery JSON (otherwise anchors from the train split)");
  b.add(*evaluate_cmd, "photo-type", c.photo_type, "front, top or all");
  b.add(*evaluate_cmd, "min-count", c.min_count, "minimum images per identity");
  b.add(*evaluate_cmd, "threshold", c.threshold, "gallery match threshold");

  auto* identify_cmd = app.add_subcommand("identify", "match one image against a gallery");
  b.add(*identify_cmd, "checkpoint", c.checkpoint, "checkpoint directory");
  b.add(*identify_cmd, "gallery", c.gallery, "gallery JSON");
  b.add(*identify_cmd, "image", c.image, "query image");
  b.add(*identify_cmd, "threshold", c.threshold, "gallery match threshold");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  b.add(*synth, "identities", c.identities, "number of identities");
  b.add(*synth, "images", c.images, "images per identity and view");
  b.add(*synth, "image-size", c.image_size, "image side in pixels");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (!c.config_file.empty()) {
      json file;
      try {
        file = json::parse(read_text(c.config_file));
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kInvalidConfig, "config file " + c.config_file + ": " + e.what());
      }
      b.apply_file(file);
    }
    const json echo = resolved(c, command);
    err << "resolved config: " << echo.dump() << '\n';
    if (command == "train" && !c.out.empty()) {
      fs::create_directories(c.out);
      std::ofstream(fs::path(c.out) / "cli_config.json") << echo.dump(2) << '\n';
    }

    if (command == "split") return cmd_split(c, out);
    if (command == "train") return cmd_train(c, out, err);
    if (command == "sweep") return cmd_sweep(c, out, err);
    if (command == "evaluate") return cmd_evaluate(c, out);
    if (command == "identify") return cmd_identify(c, out);
    if (command == "synth") return cmd_synth(c, out);
  } catch (const StageError& e) {
    err << "error: " << command << " failed at " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kNonFiniteLoss ? kExitTraining : kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitTraining;
  }
  return kExitInput;
}

}  // namespace siamreid
