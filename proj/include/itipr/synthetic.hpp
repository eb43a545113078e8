#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itipr/dataset.hpp"

namespace itipr {

// Planted-preference generator: users and items carry hidden group labels
// and a user's interactions land in their own group except for a noise
// fraction drawn uniformly. The structure is learnable, and the noise
// interactions make genuinely low-value training triplets exist.
struct SyntheticConfig {
  int n_users = 500;
  int n_items = 200;
  int n_groups = 5;
  int interactions_per_user = 15;
  double noise_rate = 0.2;
  std::uint64_t seed = 0;
};

InteractionSet planted_preference(const SyntheticConfig& cfg);

// Rows of user,item pairs loadable by load_records(path, /*has_ratings=*/false).
void write_interactions_csv(const InteractionSet& s, const std::string& path);

}  // namespace itipr
