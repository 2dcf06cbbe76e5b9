#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "siamreid/dataset.hpp"
#include "siamreid/image.hpp"
#include "siamreid/rng.hpp"

namespace siamreid {

struct PairSample {
  ImageRecord left;
  ImageRecord right;
  bool same = false;

  static constexpr int kSlots = 2;
  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct TripletSample {
  ImageRecord anchor;
  ImageRecord positive;
  ImageRecord negative;

  static constexpr int kSlots = 3;
  friend bool operator==(const TripletSample&, const TripletSample&) = default;
};

/// `pairs_per_record` pairs with each record on the left, alternating same and
/// different across the list so the output is exactly balanced. No (left,
/// right) pair is emitted twice.
std::vector<PairSample> make_pairs(std::span<const ImageRecord> split, int pairs_per_record,
                                   std::uint64_t seed);

/// For each record as anchor, `triplets_per_record` triplets.
std::vector<TripletSample> make_triplets(std::span<const ImageRecord> split, int triplets_per_record,
                                         std::uint64_t seed);

/// Variants where the first slot comes from `queries` and partners from `pool`
/// (a record never pairs with itself). Used for validation, where a held-out
/// image is compared against known images.
std::vector<PairSample> make_pairs(std::span<const ImageRecord> queries, std::span<const ImageRecord> pool,
                                   int pairs_per_record, std::uint64_t seed);
std::vector<TripletSample> make_triplets(std::span<const ImageRecord> queries, std::span<const ImageRecord> pool,
                                         int triplets_per_record, std::uint64_t seed);

/// A training sample plus the augmentation to apply to each of its image slots.
/// Images are materialized lazily: slot k of sample copy uses
/// augment(load_image(slot), kind, sub_seed(seed, {k})).
template <class Sample>
struct Augmented {
  Sample sample;
  AugmentationKind kind = AugmentationKind::kNone;
  std::uint64_t seed = 0;

  std::uint64_t slot_seed(int slot) const noexcept {
    return sub_seed(seed, {static_cast<std::uint64_t>(slot)});
  }
  friend bool operator==(const Augmented&, const Augmented&) = default;
};

/// Originals followed by one augmented copy of each (dataset doubling).
/// kind == kNone returns the originals only.
template <class Sample>
std::vector<Augmented<Sample>> expand_with_augmentation(std::span<const Sample> samples,
                                                        AugmentationKind kind, std::uint64_t seed) {
  std::vector<Augmented<Sample>> out;
  out.reserve(kind == AugmentationKind::kNone ? samples.size() : 2 * samples.size());
  for (const auto& s : samples) out.push_back({s, AugmentationKind::kNone, 0});
  if (kind == AugmentationKind::kNone) return out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back({samples[i], kind, sub_seed(seed, {i})});
  }
  return out;
}

template <class Sample>
std::vector<Augmented<Sample>> expand_with_augmentation(const std::vector<Sample>& samples,
                                                        AugmentationKind kind, std::uint64_t seed) {
  return expand_with_augmentation(std::span<const Sample>(samples), kind, seed);
}

}  // namespace siamreid
