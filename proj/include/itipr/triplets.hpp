#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itipr/dataset.hpp"

namespace itipr {

// One BPR training datum: user u interacted with pos, not with neg.
struct Triplet {
  std::int32_t user = 0;
  std::int32_t pos = 0;
  std::int32_t neg = 0;

  bool operator==(const Triplet&) const = default;
};

enum class TripletOrigin : std::uint8_t { initial, resampled };

struct TripletSet {
  std::vector<Triplet> triplets;
  std::vector<TripletOrigin> origins;  // parallel to triplets

  std::size_t size() const { return triplets.size(); }
  bool contains(const Triplet& t) const;
};

using Permutation = std::vector<std::int32_t>;

bool in_space(int u, int i, int j, const InteractionSet& train);

// For each (u,i) in train, draws m distinct negatives uniformly from the
// user's non-interacted items by rejection sampling.
TripletSet sample_triplets(const InteractionSet& train, int negatives_per_positive,
                           std::uint64_t seed);

// Uniform permutation of 0..n-1, keyed by (seed, draw_index): draw k is
// reproducible without generating draws 0..k-1.
Permutation sample_permutation(int n, std::uint64_t seed, std::uint64_t draw_index);

// The n cyclic rotations of the identity ordering, produced by repeatedly
// moving the last element to the front. Across the family every index
// occupies every position exactly once.
std::vector<Permutation> rotation_permutations(int n);

// CSV rows: user,pos_item,neg_item,origin (external ids via `index_space`).
void write_triplets_csv(const TripletSet& ts, const InteractionSet& index_space,
                        const std::string& path);
TripletSet read_triplets_csv(const InteractionSet& index_space, const std::string& path);

}  // namespace itipr
