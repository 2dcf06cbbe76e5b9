#include "siamreid/sampling.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "siamreid/error.hpp"

namespace siamreid {
namespace {

struct Pool {
  std::map<std::string, std::vector<const ImageRecord*>> by_identity;
};

Pool index_pool(std::span<const ImageRecord> pool) {
  Pool p;
  for (const auto& r : pool) p.by_identity[r.identity_id].push_back(&r);
  return p;
}

void check_inputs(std::span<const ImageRecord> queries, std::span<const ImageRecord> pool, int per_record) {
  if (per_record < 1) throw Error(ErrorCode::kInvalidConfig, "samples per record must be >= 1");
  std::set<std::string> ids;
  for (const auto& r : queries) ids.insert(r.identity_id);
  for (const auto& r : pool) ids.insert(r.identity_id);
  if (ids.size() < 2) {
    throw Error(ErrorCode::kSingleIdentity, "at least two identities are needed to form negatives");
  }
}

std::vector<const ImageRecord*> positives_for(const Pool& pool, const ImageRecord& r) {
  std::vector<const ImageRecord*> out;
  auto it = pool.by_identity.find(r.identity_id);
  if (it == pool.by_identity.end()) return out;
  for (const auto* c : it->second) {
    if (c->path != r.path) out.push_back(c);
  }
  return out;
}

std::vector<const ImageRecord*> negatives_for(const Pool& pool, const ImageRecord& r) {
  std::vector<const ImageRecord*> out;
  for (const auto& [id, members] : pool.by_identity) {
    if (id != r.identity_id) out.insert(out.end(), members.begin(), members.end());
  }
  return out;
}

// k distinct picks (all of them when fewer are available)
std::vector<const ImageRecord*> draw_distinct(std::vector<const ImageRecord*> candidates, int k, Rng& rng) {
  const int take = std::min<int>(k, static_cast<int>(candidates.size()));
  for (int i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(take);
  return candidates;
}

}  // namespace

std::vector<PairSample> make_pairs(std::span<const ImageRecord> queries, std::span<const ImageRecord> pool,
                                   int pairs_per_record, std::uint64_t seed) {
  check_inputs(queries, pool, pairs_per_record);
  const Pool indexed = index_pool(pool);
  Rng rng(seed);
  std::vector<PairSample> out;
  std::size_t slot = 0;
  for (const auto& r : queries) {
    // slots alternate same/different across the whole list
    const int want_same = static_cast<int>((slot + pairs_per_record + 1) / 2 - (slot + 1) / 2);
    slot += pairs_per_record;
    const auto pos = draw_distinct(positives_for(indexed, r), want_same, rng);
    const auto neg = draw_distinct(negatives_for(indexed, r), pairs_per_record - want_same, rng);
    for (const auto* p : pos) out.push_back({r, *p, true});
    for (const auto* n : neg) out.push_back({r, *n, false});
  }
  // records short of positives leave a surplus of negatives; drop the latest ones
  std::ptrdiff_t surplus = 0;
  for (const auto& p : out) surplus += p.same ? -1 : 1;
  for (auto it = out.end(); surplus != 0 && it != out.begin();) {
    --it;
    if (it->same == (surplus < 0)) {
      surplus += it->same ? 1 : -1;
      it = out.erase(it);
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::kTooFewImages, "no identity has two images to form a positive pair");
  }
  return out;
}

std::vector<PairSample> make_pairs(std::span<const ImageRecord> split, int pairs_per_record, std::uint64_t seed) {
  return make_pairs(split, split, pairs_per_record, seed);
}

std::vector<TripletSample> make_triplets(std::span<const ImageRecord> queries, std::span<const ImageRecord> pool,
                                         int triplets_per_record, std::uint64_t seed) {
  check_inputs(queries, pool, triplets_per_record);
  const Pool indexed = index_pool(pool);
  Rng rng(seed);
  std::vector<TripletSample> out;
  for (const auto& r : queries) {
    const auto pos = draw_distinct(positives_for(indexed, r), triplets_per_record, rng);
    const auto negatives = negatives_for(indexed, r);
    if (negatives.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
    for (const auto* p : pos) out.push_back({r, *p, *negatives[pick(rng)]});
  }
  if (out.empty()) {
    throw Error(ErrorCode::kTooFewImages, "no identity has two images to form an anchor/positive pair");
  }
  return out;
}

std::vector<TripletSample> make_triplets(std::span<const ImageRecord> split, int triplets_per_record,
                                         std::uint64_t seed) {
  return make_triplets(split, split, triplets_per_record, seed);
}

}  // namespace siamreid
