#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "siamreid/dataset.hpp"
#include "siamreid/embedding.hpp"
#include "siamreid/gallery.hpp"

namespace siamreid {

/// Counts keyed by (true identity, predicted identity or nullopt for UNKNOWN).
class ConfusionTable {
 public:
  using Key = std::pair<std::string, std::optional<std::string>>;

  void add(const std::string& truth, const std::optional<std::string>& predicted, int count = 1);
  int at(const std::string& truth, const std::optional<std::string>& predicted) const;
  int total() const noexcept { return total_; }
  const std::map<Key, int>& counts() const noexcept { return counts_; }

 private:
  std::map<Key, int> counts_;
  int total_ = 0;
};

struct F1Scores {
  std::map<std::string, double> per_class;
  double macro = 0.0;
};

/// Per true class: P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R), 0 when P+R = 0.
/// Macro is the unweighted mean over classes that occur as true labels.
F1Scores compute_f1(const ConfusionTable& confusion);
/// Pooled over all predictions; UNKNOWN predictions count against recall only.
double compute_micro_f1(const ConfusionTable& confusion);

struct MetricsReport {
  double accuracy = 0.0;
  std::map<std::string, double> f1_per_class;
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  ConfusionTable confusion;
  int n_test = 0;
};

MetricsReport metrics_from_confusion(const ConfusionTable& confusion);

/// Runs identify on every test record. Throws kEmptyTestSet, kMissingGalleryIdentity.
MetricsReport evaluate(const EmbeddingNetwork& network, const Gallery& gallery,
                       std::span<const ImageRecord> test_records, double threshold);

nlohmann::json to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace siamreid
