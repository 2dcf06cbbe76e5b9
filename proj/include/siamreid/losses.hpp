#pragma once

#include <span>
#include <string_view>
#include <utility>

namespace siamreid {

enum class LossKind { kContrastive, kTriplet };

std::string_view to_string(LossKind k) noexcept;
LossKind parse_loss(std::string_view s);

inline constexpr double kDefaultContrastiveMargin = 1.0;
inline constexpr double kDefaultTripletMargin = 0.5;

struct LossConfig {
  LossKind kind = LossKind::kContrastive;
  double margin = kDefaultContrastiveMargin;

  static LossConfig defaults_for(LossKind kind) noexcept;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// same: d^2; different: max(margin - d, 0)^2. Throws kInvalidMargin for margin <= 0.
double contrastive_loss(double distance, bool same, double margin);
/// d(loss)/d(distance)
double contrastive_loss_grad(double distance, bool same, double margin);
double contrastive_loss_mean(std::span<const double> distances, std::span<const bool> same, double margin);

/// max(d_ap - d_an + margin, 0)
double triplet_loss(double d_ap, double d_an, double margin);
/// (d/d d_ap, d/d d_an); zero in the satisfied region.
std::pair<double, double> triplet_loss_grad(double d_ap, double d_an, double margin);
double triplet_loss_mean(std::span<const double> d_ap, std::span<const double> d_an, double margin);

}  // namespace siamreid
