#include "siamreid/metrics.hpp"

#include <set>

#include "siamreid/error.hpp"

namespace siamreid {

void ConfusionTable::add(const std::string& truth, const std::optional<std::string>& predicted, int count) {
  counts_[{truth, predicted}] += count;
  total_ += count;
}

int ConfusionTable::at(const std::string& truth, const std::optional<std::string>& predicted) const {
  auto it = counts_.find({truth, predicted});
  return it == counts_.end() ? 0 : it->second;
}

F1Scores compute_f1(const ConfusionTable& confusion) {
  std::set<std::string> classes;
  for (const auto& [key, n] : confusion.counts()) classes.insert(key.first);

  F1Scores out;
  for (const auto& c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (const auto& [key, n] : confusion.counts()) {
      const bool truth_is_c = key.first == c;
      const bool pred_is_c = key.second && *key.second == c;
      if (truth_is_c && pred_is_c) tp += n;
      else if (truth_is_c) fn += n;
      else if (pred_is_c) fp += n;
    }
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    out.per_class[c] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  if (!out.per_class.empty()) {
    double sum = 0.0;
    for (const auto& [c, f1] : out.per_class) sum += f1;
    out.macro = sum / static_cast<double>(out.per_class.size());
  }
  return out;
}

double compute_micro_f1(const ConfusionTable& confusion) {
  int tp = 0, predicted = 0;
  for (const auto& [key, n] : confusion.counts()) {
    if (key.second) predicted += n;
    if (key.second && *key.second == key.first) tp += n;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / predicted;
  const double recall = static_cast<double>(tp) / confusion.total();
  return 2.0 * precision * recall / (precision + recall);
}

MetricsReport metrics_from_confusion(const ConfusionTable& confusion) {
  MetricsReport m;
  m.confusion = confusion;
  m.n_test = confusion.total();
  int correct = 0;
  for (const auto& [key, n] : confusion.counts()) {
    if (key.second && *key.second == key.first) correct += n;
  }
  m.accuracy = m.n_test > 0 ? static_cast<double>(correct) / m.n_test : 0.0;
  const F1Scores f1 = compute_f1(confusion);
  m.f1_per_class = f1.per_class;
  m.f1_macro = f1.macro;
  m.f1_micro = compute_micro_f1(confusion);
  return m;
}

MetricsReport evaluate(const EmbeddingNetwork& network, const Gallery& gallery,
                       std::span<const ImageRecord> test_records, double threshold) {
  if (test_records.empty()) throw Error(ErrorCode::kEmptyTestSet, "no test records to evaluate");
  for (const auto& r : test_records) {
    if (!gallery.contains(r.identity_id)) {
      throw Error(ErrorCode::kMissingGalleryIdentity, "test identity '" + r.identity_id + "' has no gallery anchor");
    }
  }
  ConfusionTable confusion;
  for (const auto& r : test_records) {
    const MatchResult match = identify(network, gallery, load_image(r), threshold);
    confusion.add(r.identity_id, match.verdict);
  }
  return metrics_from_confusion(confusion);
}

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& [key, n] : m.confusion.counts()) {
    confusion.push_back({{"truth", key.first}, {"predicted", key.second.value_or(kUnknownLabel)}, {"count", n}});
  }
  return {{"accuracy", m.accuracy},     {"f1_macro", m.f1_macro},         {"f1_micro", m.f1_micro},
          {"n_test", m.n_test},         {"f1_per_class", m.f1_per_class}, {"confusion", confusion}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  try {
    MetricsReport m;
    m.accuracy = j.at("accuracy").get<double>();
    m.f1_macro = j.at("f1_macro").get<double>();
    m.f1_micro = j.value("f1_micro", 0.0);
    m.n_test = j.at("n_test").get<int>();
    m.f1_per_class = j.at("f1_per_class").get<std::map<std::string, double>>();
    for (const auto& c : j.at("confusion")) {
      const auto predicted = c.at("predicted").get<std::string>();
      m.confusion.add(c.at("truth").get<std::string>(),
                      predicted == kUnknownLabel ? std::nullopt : std::optional<std::string>(predicted),
                      c.at("count").get<int>());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed metrics: ") + e.what());
  }
}

}  // namespace siamreid
