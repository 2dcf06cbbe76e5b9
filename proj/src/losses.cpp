#include "siamreid/losses.hpp"

#include <algorithm>
#include <string>

#include "siamreid/error.hpp"

namespace siamreid {

std::string_view to_string(LossKind k) noexcept { return k == LossKind::kContrastive ? "contrastive" : "triplet"; }

LossKind parse_loss(std::string_view s) {
  if (s == "contrastive") return LossKind::kContrastive;
  if (s == "triplet") return LossKind::kTriplet;
  throw Error(ErrorCode::kInvalidConfig, "unknown loss '" + std::string(s) + "' (contrastive, triplet)");
}

LossConfig LossConfig::defaults_for(LossKind kind) noexcept {
  return {kind, kind == LossKind::kContrastive ? kDefaultContrastiveMargin : kDefaultTripletMargin};
}

namespace {

void check_margin(double margin) {
  if (!(margin > 0.0)) throw Error(ErrorCode::kInvalidMargin, "margin must be positive, got " + std::to_string(margin));
}

}  // namespace

double contrastive_loss(double distance, bool same, double margin) {
  check_margin(margin);
  if (same) return distance * distance;
  const double gap = std::max(margin - distance, 0.0);
  return gap * gap;
}

double contrastive_loss_grad(double distance, bool same, double margin) {
  check_margin(margin);
  if (same) return 2.0 * distance;
  return -2.0 * std::max(margin - distance, 0.0);
}

double contrastive_loss_mean(std::span<const double> distances, std::span<const bool> same, double margin) {
  if (distances.size() != same.size()) throw Error(ErrorCode::kDimensionMismatch, "distances and labels differ in length");
  if (distances.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) sum += contrastive_loss(distances[i], same[i], margin);
  return sum / static_cast<double>(distances.size());
}

double triplet_loss(double d_ap, double d_an, double margin) {
  check_margin(margin);
  return std::max(d_ap - d_an + margin, 0.0);
}

std::pair<double, double> triplet_loss_grad(double d_ap, double d_an, double margin) {
  check_margin(margin);
  if (d_ap - d_an + margin > 0.0) return {1.0, -1.0};
  return {0.0, 0.0};
}

double triplet_loss_mean(std::span<const double> d_ap, std::span<const double> d_an, double margin) {
  if (d_ap.size() != d_an.size()) throw Error(ErrorCode::kDimensionMismatch, "distance lists differ in length");
  if (d_ap.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < d_ap.size(); ++i) sum += triplet_loss(d_ap[i], d_an[i], margin);
  return sum / static_cast<double>(d_ap.size());
}

}  // namespace siamreid
