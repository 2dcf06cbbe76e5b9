#include "siamreid/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "siamreid/error.hpp"

namespace fs = std::filesystem;

namespace siamreid {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string number(double v, const char* fmt = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_rows(std::span<const ExperimentResult> results, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out << kResultsHeader << '\n';
  for (const auto& r : results) out << results_csv_row(r) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + file.string());
}

}  // namespace

std::string results_csv_row(const ExperimentResult& r) {
  const auto& c = r.config;
  const bool ok = r.status == RunStatus::kOk;
  std::string row;
  row += std::string(to_string(c.photo_type)) + ',';
  row += std::string(to_string(c.backbone.name)) + ',';
  row += std::string(to_string(c.loss.kind)) + ',';
  row += number(c.learning_rate, "%g") + ',';
  row += std::string(to_string(c.augmentation)) + ',';
  row += std::to_string(c.epochs) + ',';
  row += std::to_string(c.seed) + ',';
  row += (ok ? number(r.metrics.accuracy) : std::string()) + ',';
  row += (ok ? number(r.metrics.f1_macro) : std::string()) + ',';
  row += std::string(ok ? "ok" : "failed") + ',';
  row += csv_field(r.checkpoint_path.generic_string());
  return row;
}

std::vector<ExperimentResult> top_results(std::span<const ExperimentResult> results, std::size_t k) {
  std::vector<ExperimentResult> ok;
  std::copy_if(results.begin(), results.end(), std::back_inserter(ok),
               [](const ExperimentResult& r) { return r.status == RunStatus::kOk; });
  std::stable_sort(ok.begin(), ok.end(), [](const ExperimentResult& a, const ExperimentResult& b) {
    return a.metrics.f1_macro > b.metrics.f1_macro;
  });
  if (ok.size() > k) ok.resize(k);
  return ok;
}

void plot_loss_curve(const TrainingHistory& history, const std::string& title, const fs::path& png) {
  constexpr int kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  cv::Mat canvas(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar axis(0, 0, 0), train_color(200, 90, 30), val_color(40, 120, 230);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& e : history.epochs) {
    lo = std::min({lo, e.train_loss, e.val_loss});
    hi = std::max({hi, e.train_loss, e.val_loss});
  }
  if (history.epochs.empty()) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const int n = static_cast<int>(history.epochs.size());
  auto to_px = [&](int i, double v) {
    const double fx = n > 1 ? static_cast<double>(i) / (n - 1) : 0.5;
    const double fy = (v - lo) / (hi - lo);
    return cv::Point(kLeft + static_cast<int>(fx * (kWidth - kLeft - kRight)),
                     kHeight - kBottom - static_cast<int>(fy * (kHeight - kTop - kBottom)));
  };

  cv::line(canvas, {kLeft, kTop}, {kLeft, kHeight - kBottom}, axis, 1);
  cv::line(canvas, {kLeft, kHeight - kBottom}, {kWidth - kRight, kHeight - kBottom}, axis, 1);
  cv::putText(canvas, title, {kLeft, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
  cv::putText(canvas, "epoch", {kWidth / 2, kHeight - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
  cv::putText(canvas, number(hi, "%.3g"), {5, kTop + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  cv::putText(canvas, number(lo, "%.3g"), {5, kHeight - kBottom}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  cv::putText(canvas, "1", {kLeft, kHeight - kBottom + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  cv::putText(canvas, std::to_string(n), {kWidth - kRight - 20, kHeight - kBottom + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              axis, 1, cv::LINE_AA);

  std::vector<cv::Point> train_pts, val_pts;
  for (int i = 0; i < n; ++i) {
    train_pts.push_back(to_px(i, history.epochs[i].train_loss));
    val_pts.push_back(to_px(i, history.epochs[i].val_loss));
  }
  if (n > 0) {
    cv::polylines(canvas, train_pts, false, train_color, 2, cv::LINE_AA);
    cv::polylines(canvas, val_pts, false, val_color, 2, cv::LINE_AA);
  }
  cv::line(canvas, {kWidth - 170, kTop + 5}, {kWidth - 140, kTop + 5}, train_color, 2);
  cv::putText(canvas, "train", {kWidth - 130, kTop + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
  cv::line(canvas, {kWidth - 170, kTop + 25}, {kWidth - 140, kTop + 25}, val_color, 2);
  cv::putText(canvas, "validation", {kWidth - 130, kTop + 30}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);

  if (png.has_parent_path()) fs::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), canvas)) throw Error(ErrorCode::kIo, "cannot write plot " + png.string());
}

ReportArtifacts write_report(std::span<const ExperimentResult> results, const fs::path& out_dir) {
  if (results.empty()) throw Error(ErrorCode::kInvalidConfig, "no results to report");
  fs::create_directories(out_dir);
  ReportArtifacts artifacts;
  artifacts.results_csv = out_dir / "results.csv";
  artifacts.top5_csv = out_dir / "top5.csv";
  write_rows(results, artifacts.results_csv);
  const auto top = top_results(results, 5);
  write_rows(top, artifacts.top5_csv);
  for (const auto& r : results) {
    if (r.history.epochs.empty()) continue;
    const std::string hash = config_hash(r.config);
    const fs::path png = out_dir / (hash + "_loss.png");
    plot_loss_curve(r.history,
                    std::string(to_string(r.config.backbone.name)) + " / " + std::string(to_string(r.config.loss.kind)) +
                        " / " + std::string(to_string(r.config.photo_type)) + " / lr " + number(r.config.learning_rate, "%g"),
                    png);
    artifacts.plots.push_back(png);
  }
  return artifacts;
}

}  // namespace siamreid
