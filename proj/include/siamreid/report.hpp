#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "siamreid/trainer.hpp"

namespace siamreid {

std::string results_csv_row(const ExperimentResult& r);

/// Sorted by f1_macro, descending; failed runs excluded.
std::vector<ExperimentResult> top_results(std::span<const ExperimentResult> results, std::size_t k);

/// Loss curve (train and validation) for one run.
void plot_loss_curve(const TrainingHistory& history, const std::string& title, const std::filesystem::path& png);

struct ReportArtifacts {
  std::filesystem::path results_csv;
  std::filesystem::path top5_csv;
  std::vector<std::filesystem::path> plots;
};

/// Emits results.csv, top5.csv, and <config_hash>_loss.png per run with history.
ReportArtifacts write_report(std::span<const ExperimentResult> results, const std::filesystem::path& out_dir);

}  // namespace siamreid
