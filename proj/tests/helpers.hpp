// Shared fixtures and independent oracles for the test suites. The oracles
// re-derive expected values through a different computational route than the
// code under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <vector>

#include "itipr/backbone.hpp"
#include "itipr/dataset.hpp"
#include "itipr/metrics.hpp"
#include "itipr/shapley.hpp"
#include "itipr/triplets.hpp"

namespace testutil {

inline itipr::InteractionSet make_interactions(
    int n_users, int n_items, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<std::string> uids(n_users), iids(n_items);
  char buf[16];
  for (int u = 0; u < n_users; ++u) {
    std::snprintf(buf, sizeof(buf), "u%03d", u);
    uids[u] = buf;
  }
  for (int i = 0; i < n_items; ++i) {
    std::snprintf(buf, sizeof(buf), "i%03d", i);
    iids[i] = buf;
  }
  std::vector<std::pair<std::int32_t, std::int32_t>> p;
  for (auto [u, i] : pairs) p.emplace_back(u, i);
  return itipr::InteractionSet::from_pairs(uids, iids, p);
}

// tag: 't' train, 'v' validation, 's' test.
inline itipr::SplitInteractions make_split(
    int n_users, int n_items, const std::vector<std::tuple<int, int, char>>& tagged) {
  std::vector<std::pair<int, int>> train, val, test;
  for (auto [u, i, tag] : tagged) {
    if (tag == 't') train.emplace_back(u, i);
    else if (tag == 'v') val.emplace_back(u, i);
    else test.emplace_back(u, i);
  }
  itipr::SplitInteractions s;
  s.train = make_interactions(n_users, n_items, train);
  s.validation = make_interactions(n_users, n_items, val);
  s.test = make_interactions(n_users, n_items, test);
  return s;
}

// A small world with `n` train pairs (one per user-item pair), one validation
// item per user, and enough spare items for negative sampling. sample_triplets
// with m=1 yields exactly n triplets.
struct TinyWorld {
  itipr::SplitInteractions split;
  itipr::TripletSet dt;
};

inline TinyWorld tiny_world(int n_triplets, std::uint64_t seed) {
  const int users = (n_triplets + 1) / 2;
  const int items = n_triplets + users + 2;
  std::vector<std::tuple<int, int, char>> tagged;
  int item = 0;
  for (int k = 0; k < n_triplets; ++k) tagged.emplace_back(k % users, item++, 't');
  for (int u = 0; u < users; ++u) tagged.emplace_back(u, item++, 'v');
  itipr::SplitInteractions split = make_split(users, items, tagged);
  itipr::TripletSet dt = itipr::sample_triplets(split.train, 1, seed);
  TinyWorld w;
  w.split = std::move(split);
  w.dt = std::move(dt);
  return w;
}

// Fixture for the control-variate behavior: 6 users, one train item each,
// four validation items each and one inert held-out item. Three triplets take
// the user's own validation item as the negative (training pushes a relevant
// item down: harmful), three take the inert item (helpful). Values therefore
// spread over both signs.
inline TinyWorld cv_probe_world() {
  std::vector<std::tuple<int, int, char>> tagged;
  for (int u = 0; u < 6; ++u) {
    tagged.emplace_back(u, u, 't');
    for (int j = 0; j < 4; ++j) tagged.emplace_back(u, 6 + 4 * u + j, 'v');
    tagged.emplace_back(u, 30 + u, 's');
  }
  TinyWorld w;
  w.split = make_split(6, 36, tagged);
  w.dt.triplets = {{0, 0, 6}, {1, 1, 10}, {2, 2, 14}, {3, 3, 33}, {4, 4, 34}, {5, 5, 35}};
  w.dt.origins.assign(6, itipr::TripletOrigin::initial);
  return w;
}

inline itipr::McConfig cv_probe_config() {
  itipr::McConfig cfg;
  cfg.tolerance_abs = 0.0;
  cfg.learning_rate = 1.0;
  cfg.l2_reg = 1e-4;
  cfg.eval.k = 5;
  cfg.convergence_delta = 0.0;
  cfg.fresh_init_per_permutation = false;
  cfg.init_stream_seed = 424242;
  return cfg;
}

inline itipr::McConfig tiny_mc_config(std::uint64_t seed) {
  itipr::McConfig cfg;
  cfg.tolerance_abs = 0.0;
  cfg.learning_rate = 0.8;
  cfg.l2_reg = 1e-4;
  cfg.eval.k = 3;
  cfg.eval.metric = itipr::Metric::ndcg;
  cfg.seed = seed;
  cfg.convergence_delta = 0.0;  // run to the permutation budget
  return cfg;
}

inline itipr::ModelSpec tiny_model_spec() {
  itipr::ModelSpec spec;
  spec.backbone = itipr::Backbone::mf;
  spec.dim = 2;
  return spec;
}

// Trains theta0 through the index sequence one triplet at a time and returns
// the resulting validation accuracy.
inline double accuracy_after_sequence(const itipr::TripletSet& dt,
                                      const itipr::SplitInteractions& split,
                                      const itipr::ModelState& theta0,
                                      const std::vector<int>& sequence,
                                      const itipr::McConfig& cfg,
                                      const itipr::Evaluator& eval) {
  itipr::ModelState m = theta0;
  const itipr::LossConfig step{cfg.learning_rate, cfg.l2_reg};
  for (int idx : sequence) {
    const itipr::WeightedTriplet wt{dt.triplets[idx], 1.0};
    itipr::apply_sgd_step(m, std::span<const itipr::WeightedTriplet>(&wt, 1), step);
  }
  (void)split;
  return eval.accuracy(m);
}

// Subset-sum realization of the definition with C = 1/|D^T|: the value of a
// set is the accuracy averaged over every training order of that set, and the
// with-t term always joins t last. This reproduces the grouping used by the
// joining-process identity, computed through subsets rather than permutation
// scans.
inline std::vector<double> subset_sum_shapley(const itipr::TripletSet& dt,
                                              const itipr::SplitInteractions& split,
                                              const itipr::ModelSpec& spec,
                                              const itipr::McConfig& cfg,
                                              std::uint64_t init_seed) {
  const int n = static_cast<int>(dt.size());
  const itipr::ModelState theta0 = itipr::init_model(spec, split.train, init_seed);
  const itipr::Evaluator eval(split, itipr::Role::validation, cfg.eval);

  auto binom = [](int a, int b) {
    double r = 1.0;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };

  std::vector<double> values(n, 0.0);
  for (int t = 0; t < n; ++t) {
    std::vector<int> others;
    for (int o = 0; o < n; ++o)
      if (o != t) others.push_back(o);
    double total = 0.0;
    for (int mask = 0; mask < (1 << (n - 1)); ++mask) {
      std::vector<int> subset;
      for (int b = 0; b < n - 1; ++b)
        if (mask & (1 << b)) subset.push_back(others[b]);
      std::sort(subset.begin(), subset.end());
      double sum_without = 0.0, sum_with = 0.0;
      int orders = 0;
      std::vector<int> seq = subset;
      do {
        sum_without += accuracy_after_sequence(dt, split, theta0, seq, cfg, eval);
        std::vector<int> with_t = seq;
        with_t.push_back(t);
        sum_with += accuracy_after_sequence(dt, split, theta0, with_t, cfg, eval);
        orders++;
      } while (std::next_permutation(seq.begin(), seq.end()));
      const double marginal = (sum_with - sum_without) / orders;
      total += marginal / binom(n - 1, static_cast<int>(subset.size()));
    }
    values[t] = total / n;
  }
  return values;
}

// Plain reference metrics, set-based and loop-based.
inline double ref_recall(const std::vector<std::int32_t>& recommended,
                         const std::set<std::int32_t>& test, int k) {
  int hits = 0;
  for (int r = 0; r < std::min<int>(k, recommended.size()); ++r)
    if (test.count(recommended[r])) hits++;
  return static_cast<double>(hits) / std::min<int>(k, static_cast<int>(test.size()));
}

inline double ref_ndcg(const std::vector<std::int32_t>& recommended,
                       const std::set<std::int32_t>& test, int k) {
  double dcg = 0.0;
  for (int r = 0; r < std::min<int>(k, recommended.size()); ++r)
    if (test.count(recommended[r])) dcg += std::log(2.0) / std::log(r + 2.0);
  double idcg = 0.0;
  for (int r = 0; r < std::min<int>(k, static_cast<int>(test.size())); ++r)
    idcg += std::log(2.0) / std::log(r + 2.0);
  return dcg / idcg;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

inline double sample_variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? s / (v.size() - 1) : 0.0;
}

}  // namespace testutil
