#include "siamreid/trainer.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "siamreid/error.hpp"
#include "siamreid/gallery.hpp"
#include "siamreid/log.hpp"
#include "siamreid/optimizer.hpp"
#include "siamreid/report.hpp"
#include "siamreid/rng.hpp"
#include "siamreid/sampling.hpp"

namespace fs = std::filesystem;

namespace siamreid {

// ---- config ----

void ExperimentConfig::validate() const {
  backbone.validate();
  if (epochs < 1) throw Error(ErrorCode::kInvalidConfig, "epochs must be >= 1, got " + std::to_string(epochs));
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidConfig, "learning_rate must be positive");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  if (samples_per_record < 1) throw Error(ErrorCode::kInvalidConfig, "samples_per_record must be >= 1");
  if (!(loss.margin > 0.0)) throw Error(ErrorCode::kInvalidMargin, "margin must be positive");
  if (!std::isfinite(threshold) || threshold < 0.0) throw Error(ErrorCode::kInvalidConfig, "threshold must be >= 0");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"photo_type", to_string(c.photo_type)},
          {"backbone", to_string(c.backbone.name)},
          {"pretrained", c.backbone.pretrained},
          {"frozen", c.backbone.frozen},
          {"loss", to_string(c.loss.kind)},
          {"margin", c.loss.margin},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"augmentation", to_string(c.augmentation)},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"threshold", c.threshold},
          {"samples_per_record", c.samples_per_record}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    c.photo_type = parse_photo_type(j.at("photo_type").get<std::string>());
    c.backbone = BackboneSpec::defaults_for(parse_backbone(j.at("backbone").get<std::string>()));
    c.backbone.pretrained = j.value("pretrained", c.backbone.pretrained);
    c.backbone.frozen = j.value("frozen", c.backbone.frozen);
    c.loss = LossConfig::defaults_for(parse_loss(j.at("loss").get<std::string>()));
    c.loss.margin = j.value("margin", c.loss.margin);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.augmentation = parse_augmentation(j.value("augmentation", std::string("none")));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.threshold = j.value("threshold", c.threshold);
    c.samples_per_record = j.value("samples_per_record", c.samples_per_record);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed experiment config: ") + e.what());
  }
}

std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(to_json(c).dump())));
  return buf;
}

nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : r.history.epochs) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"seconds", e.seconds}});
  }
  return {{"config", to_json(r.config)},
          {"config_hash", config_hash(r.config)},
          {"history", history},
          {"metrics", to_json(r.metrics)},
          {"checkpoint_path", r.checkpoint_path.generic_string()},
          {"status", r.status == RunStatus::kOk ? "ok" : "failed"},
          {"error", r.error}};
}

ExperimentResult experiment_result_from_json(const nlohmann::json& j) {
  try {
    ExperimentResult r;
    r.config = experiment_config_from_json(j.at("config"));
    for (const auto& e : j.at("history")) {
      r.history.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                  e.at("val_loss").get<double>(), e.at("seconds").get<double>()});
    }
    r.metrics = metrics_from_json(j.at("metrics"));
    r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    r.status = j.at("status").get<std::string>() == "ok" ? RunStatus::kOk : RunStatus::kFailed;
    r.error = j.value("error", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed experiment result: ") + e.what());
  }
}

void write_history_csv(const TrainingHistory& history, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out << "epoch,train_loss,val_loss,seconds\n";
  out.precision(10);
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.seconds << '\n';
  }
}

// ---- training ----

namespace {

void write_json(const nlohmann::json& j, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

/// Decoded images and, for frozen backbones, backbone features of every
/// (image, augmentation) variant the sample list references. Each variant is
/// computed once; with offline augmentation the set of variants is fixed.
class ImageSource {
 public:
  ImageSource(const EmbeddingNetwork& network) : network_(network) {}

  const PixelTensor& image(const ImageRecord& r) {
    auto it = images_.find(r.path.string());
    if (it == images_.end()) it = images_.emplace(r.path.string(), load_image(r)).first;
    return it->second;
  }

  PixelTensor variant(const ImageRecord& r, AugmentationKind kind, std::uint64_t seed) {
    return kind == AugmentationKind::kNone ? image(r) : augment(image(r), kind, seed);
  }

  const Tensor& features(const ImageRecord& r, AugmentationKind kind, std::uint64_t seed) {
    std::string key = r.path.string() + '|' + std::string(to_string(kind)) + '|' +
                      (kind == AugmentationKind::kNone ? "0" : std::to_string(seed));
    auto it = features_.find(key);
    if (it == features_.end()) it = features_.emplace(std::move(key), network_.features(variant(r, kind, seed))).first;
    return it->second;
  }

 private:
  const EmbeddingNetwork& network_;
  std::unordered_map<std::string, PixelTensor> images_;
  std::unordered_map<std::string, Tensor> features_;
};

class Step {
 public:
  Step(const EmbeddingNetwork& network, ImageSource& source) : network_(network), source_(source) {}

  EmbeddingVector forward(const ImageRecord& r, AugmentationKind kind, std::uint64_t seed,
                          EmbeddingNetwork::Trace& trace) {
    if (network_.spec().frozen) return network_.forward_features(source_.features(r, kind, seed), trace);
    return network_.forward_image(source_.variant(r, kind, seed), trace);
  }

  EmbeddingVector infer(const ImageRecord& r) {
    if (network_.spec().frozen) return network_.embed_features(source_.features(r, AugmentationKind::kNone, 0));
    return network_.embed(source_.image(r));
  }

 private:
  const EmbeddingNetwork& network_;
  ImageSource& source_;
};

// (a - b) / |a - b| scaled by `g`; zero when the embeddings coincide
std::vector<float> direction(const EmbeddingVector& a, const EmbeddingVector& b, double distance, double g) {
  std::vector<float> out(a.size(), 0.0f);
  if (distance < 1e-12 || g == 0.0) return out;
  const double s = g / distance;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(s * (a.values[i] - b.values[i]));
  return out;
}

std::vector<float> negated(std::vector<float> v) {
  for (float& x : v) x = -x;
  return v;
}

std::vector<float> added(std::vector<float> a, const std::vector<float>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

// Loss of one sample; accumulates gradients when `train` is set.
double sample_loss(const Augmented<PairSample>& s, const LossConfig& loss, const EmbeddingNetwork& network, Step& step,
                   bool train) {
  EmbeddingNetwork::Trace ta, tb;
  if (!train) {
    return contrastive_loss(pairwise_distance(step.infer(s.sample.left), step.infer(s.sample.right)), s.sample.same,
                            loss.margin);
  }
  const auto ea = step.forward(s.sample.left, s.kind, s.slot_seed(0), ta);
  const auto eb = step.forward(s.sample.right, s.kind, s.slot_seed(1), tb);
  const double d = pairwise_distance(ea, eb);
  const double value = contrastive_loss(d, s.sample.same, loss.margin);
  const auto ga = direction(ea, eb, d, contrastive_loss_grad(d, s.sample.same, loss.margin));
  network.backward(ta, ga);
  network.backward(tb, negated(ga));
  return value;
}

double sample_loss(const Augmented<TripletSample>& s, const LossConfig& loss, const EmbeddingNetwork& network,
                   Step& step, bool train) {
  if (!train) {
    const auto a = step.infer(s.sample.anchor);
    return triplet_loss(pairwise_distance(a, step.infer(s.sample.positive)),
                        pairwise_distance(a, step.infer(s.sample.negative)), loss.margin);
  }
  EmbeddingNetwork::Trace ta, tp, tn;
  const auto a = step.forward(s.sample.anchor, s.kind, s.slot_seed(0), ta);
  const auto p = step.forward(s.sample.positive, s.kind, s.slot_seed(1), tp);
  const auto n = step.forward(s.sample.negative, s.kind, s.slot_seed(2), tn);
  const double d_ap = pairwise_distance(a, p);
  const double d_an = pairwise_distance(a, n);
  const double value = triplet_loss(d_ap, d_an, loss.margin);
  const auto [g_ap, g_an] = triplet_loss_grad(d_ap, d_an, loss.margin);
  if (g_ap == 0.0 && g_an == 0.0) return value;
  const auto to_p = direction(a, p, d_ap, g_ap);
  const auto to_n = direction(a, n, d_an, g_an);
  network.backward(ta, added(to_p, to_n));
  network.backward(tp, negated(to_p));
  network.backward(tn, negated(to_n));
  return value;
}

template <class Sample>
TrainingHistory fit(EmbeddingNetwork& network, const ExperimentConfig& config,
                    const std::vector<Augmented<Sample>>& train_samples,
                    const std::vector<Augmented<Sample>>& val_samples, ImageSource& source,
                    const TrainOptions& options) {
  Step step(network, source);
  Adam adam({config.learning_rate, 0.9, 0.999, 1e-7});
  TrainingHistory history;
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(sub_seed(config.seed, {seed_offset::kShuffle, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      network.parameters().zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        train_sum += sample_loss(train_samples[order[k]], config.loss, network, step, true);
      }
      network.parameters().scale_grad(1.0f / static_cast<float>(end - begin));
      adam.step(network.parameters());
    }

    double val_sum = 0.0;
    for (const auto& s : val_samples) val_sum += sample_loss(s, config.loss, network, step, false);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(train_samples.size());
    rec.val_loss = val_samples.empty() ? 0.0 : val_sum / static_cast<double>(val_samples.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (options.log) {
      *options.log << "epoch " << epoch << "/" << config.epochs << " train_loss=" << rec.train_loss
                   << " val_loss=" << rec.val_loss << " (" << rec.seconds << "s)" << std::endl;
    }
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      if (!options.run_dir.empty()) write_history_csv(history, options.run_dir / "history.csv");
      throw Error(ErrorCode::kNonFiniteLoss, "loss became non-finite at epoch " + std::to_string(epoch));
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  return history;
}

std::vector<ImageRecord> concat(const std::vector<ImageRecord>& a, const std::vector<ImageRecord>& b) {
  std::vector<ImageRecord> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

ExperimentResult train(const ExperimentConfig& config, const SplitManifest& full_manifest,
                       const TrainOptions& options) {
  config.validate();
  const SplitManifest manifest = restrict_manifest(full_manifest, config.photo_type);
  const std::string hash = config_hash(config);
  if (!options.run_dir.empty()) {
    fs::create_directories(options.run_dir);
    write_json(to_json(config), options.run_dir / "config.json");
  }

  EmbeddingNetwork network = build_network(config.backbone, config.seed, options.cache_dir);
  const std::uint64_t backbone_before = network.backbone_checksum();
  ImageSource source(network);

  const std::uint64_t sampling_seed = sub_seed(config.seed, {seed_offset::kSampling});
  const std::uint64_t augment_seed = sub_seed(config.seed, {seed_offset::kAugment});
  const std::uint64_t val_seed = sub_seed(config.seed, {seed_offset::kValidation});
  const auto known = concat(manifest.train, manifest.val);

  TrainingHistory history;
  if (config.loss.kind == LossKind::kContrastive) {
    const auto train_samples = expand_with_augmentation(
        make_pairs(manifest.train, config.samples_per_record, sampling_seed), config.augmentation, augment_seed);
    std::vector<Augmented<PairSample>> val_samples;
    if (!manifest.val.empty()) {
      val_samples = expand_with_augmentation(make_pairs(manifest.val, known, config.samples_per_record, val_seed),
                                             AugmentationKind::kNone, 0);
    }
    history = fit(network, config, train_samples, val_samples, source, options);
  } else {
    const auto train_samples = expand_with_augmentation(
        make_triplets(manifest.train, config.samples_per_record, sampling_seed), config.augmentation, augment_seed);
    std::vector<Augmented<TripletSample>> val_samples;
    if (!manifest.val.empty()) {
      val_samples = expand_with_augmentation(make_triplets(manifest.val, known, config.samples_per_record, val_seed),
                                             AugmentationKind::kNone, 0);
    }
    history = fit(network, config, train_samples, val_samples, source, options);
  }

  if (network.spec().frozen && network.backbone_checksum() != backbone_before) {
    throw std::logic_error("frozen backbone parameters changed during training");
  }

  ExperimentResult result;
  result.config = config;
  result.history = history;
  const Gallery gallery = build_gallery(network, select_anchors(manifest.train));
  result.metrics = evaluate(network, gallery, manifest.test, config.threshold);
  if (!options.run_dir.empty()) {
    result.checkpoint_path = options.run_dir / "checkpoint";
    save_checkpoint(network, result.checkpoint_path, hash);
    save_gallery(gallery, options.run_dir / "gallery.json");
    write_history_csv(history, options.run_dir / "history.csv");
    write_json(to_json(result.metrics), options.run_dir / "metrics.json");
    write_json(to_json(result), options.run_dir / "result.json");
  }
  return result;
}

// ---- sweep ----

fs::path run_directory(const fs::path& out_dir, const ExperimentConfig& c) { return out_dir / "runs" / config_hash(c); }

namespace {

class SweepLock {
 public:
  explicit SweepLock(const fs::path& file) {
    fd_ = ::open(file.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open lock " + file.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::kIo, "another sweep is running in " + file.parent_path().string());
    }
  }
  ~SweepLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  SweepLock(const SweepLock&) = delete;
  SweepLock& operator=(const SweepLock&) = delete;

 private:
  int fd_ = -1;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::set<std::string> completed_hashes(const fs::path& results_csv) {
  std::set<std::string> done;
  std::ifstream in(results_csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto fields = split_csv_line(line);
    if (fields.size() != 11 || fields[9] != "ok") continue;
    done.insert(fs::path(fields[10]).parent_path().filename().string());
  }
  return done;
}

void append_line(const fs::path& file, const std::string& line) {
  std::ofstream out(file, std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + file.string());
  out << line << '\n';
  out.flush();
}

std::string timestamp() {
  using namespace std::chrono;
  return std::to_string(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

}  // namespace

std::vector<ExperimentResult> run_sweep(const std::vector<ExperimentConfig>& grid,
                                        const ManifestProvider& manifest_provider, const SweepOptions& options) {
  if (grid.empty()) throw Error(ErrorCode::kEmptyGrid, "sweep grid is empty");
  fs::create_directories(options.out_dir);
  SweepLock lock(options.out_dir / ".sweep.lock");

  const fs::path results_csv = options.out_dir / "results.csv";
  const fs::path exec_log = options.out_dir / "sweep.log";
  if (!fs::exists(results_csv) || fs::file_size(results_csv) == 0) append_line(results_csv, kResultsHeader);
  const std::set<std::string> done = completed_hashes(results_csv);

  std::vector<ExperimentResult> results;
  for (const auto& config : grid) {
    const std::string hash = config_hash(config);
    const fs::path run_dir = run_directory(options.out_dir, config);
    if (done.contains(hash)) {
      log_info("skipping completed config " + hash);
      if (options.log) *options.log << "skip " << hash << " (already completed)" << std::endl;
      append_line(exec_log, "skip " + hash + " " + timestamp());
      ExperimentResult r;
      r.config = config;
      r.checkpoint_path = run_dir / "checkpoint";
      if (fs::exists(run_dir / "result.json")) {
        std::ifstream in(run_dir / "result.json");
        r = experiment_result_from_json(nlohmann::json::parse(in));
      }
      results.push_back(std::move(r));
      continue;
    }

    append_line(exec_log, "start " + hash + " " + timestamp());
    if (options.log) *options.log << "config " << hash << ": " << to_json(config).dump() << std::endl;
    ExperimentResult result;
    result.config = config;
    result.checkpoint_path = run_dir / "checkpoint";
    try {
      TrainOptions train_options;
      train_options.run_dir = run_dir;
      train_options.cache_dir = options.cache_dir;
      train_options.deterministic = options.deterministic;
      train_options.log = options.log;
      result = train(config, manifest_provider(config), train_options);
    } catch (const std::exception& e) {
      result.status = RunStatus::kFailed;
      result.error = e.what();
      log_warning("config " + hash + " failed: " + result.error);
      fs::create_directories(run_dir);
      std::ofstream(run_dir / "result.json") << to_json(result).dump(2) << '\n';
    }
    append_line(results_csv, results_csv_row(result));
    append_line(exec_log, "end " + hash + " " + (result.status == RunStatus::kOk ? "ok" : "failed") + " " + timestamp());
    results.push_back(std::move(result));
  }
  return results;
}

// ---- sweep definition ----

namespace {

constexpr const char* kSweepKeys[] = {"photo_type", "backbone", "loss",   "learning_rate", "augmentation",      "epochs",
                                      "batch_size", "seed",     "margin", "threshold",     "samples_per_record"};

int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

void apply(ExperimentConfig& c, const std::string& key, const nlohmann::json& v) {
  if (key == "photo_type") c.photo_type = parse_photo_type(v.get<std::string>());
  else if (key == "backbone") c.backbone = BackboneSpec::defaults_for(parse_backbone(v.get<std::string>()));
  else if (key == "loss") c.loss = LossConfig::defaults_for(parse_loss(v.get<std::string>()));
  else if (key == "learning_rate") c.learning_rate = v.get<double>();
  else if (key == "augmentation") c.augmentation = parse_augmentation(v.get<std::string>());
  else if (key == "epochs") c.epochs = v.get<int>();
  else if (key == "batch_size") c.batch_size = v.get<int>();
  else if (key == "seed") c.seed = v.get<std::uint64_t>();
  else if (key == "margin") c.loss.margin = v.get<double>();
  else if (key == "threshold") c.threshold = v.get<double>();
  else if (key == "samples_per_record") c.samples_per_record = v.get<int>();
}

}  // namespace

std::vector<ExperimentConfig> parse_sweep_definition(const std::string& text, const ExperimentConfig& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig,
                "sweep file is not valid JSON (line " + std::to_string(line_of(text, e.byte)) + "): " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "sweep file must be a JSON object of value lists");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kSweepKeys), std::end(kSweepKeys), key) == std::end(kSweepKeys)) {
      throw Error(ErrorCode::kInvalidConfig, "sweep field '" + key + "' is not a hyperparameter");
    }
    if (!value.is_array()) throw Error(ErrorCode::kInvalidConfig, "sweep field '" + key + "' must be a list");
    if (value.empty()) throw Error(ErrorCode::kInvalidConfig, "sweep field '" + key + "' has an empty value list");
  }

  std::vector<ExperimentConfig> grid{base};
  for (const char* key : kSweepKeys) {
    if (!j.contains(key)) continue;
    std::vector<ExperimentConfig> next;
    for (const auto& c : grid) {
      for (std::size_t i = 0; i < j[key].size(); ++i) {
        ExperimentConfig variant = c;
        try {
          apply(variant, key, j[key][i]);
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::kInvalidConfig,
                      "sweep field '" + std::string(key) + "' entry " + std::to_string(i) + ": " + e.what());
        }
        next.push_back(variant);
      }
    }
    grid = std::move(next);
  }
  for (auto& c : grid) c.validate();
  return grid;
}

}  // namespace siamreid
