#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "itipr/backbone.hpp"
#include "itipr/dataset.hpp"
#include "itipr/metrics.hpp"
#include "itipr/triplets.hpp"

namespace itipr {

struct McConfig {
  // Truncation threshold. The relative form scales with the full-set
  // accuracy; an absolute value, when set, wins.
  double tolerance_rel = 0.01;
  std::optional<double> tolerance_abs;

  // Single-triplet step size for the one-pass scans. Deliberately larger
  // than a multi-epoch training rate.
  double learning_rate = 0.25;
  double l2_reg = 1e-4;

  int max_permutations = 200;
  int convergence_window = 20;
  double convergence_delta = 1e-4;

  EvalConfig eval;  // A(.) = validation metric@k over (optionally sampled) users

  std::uint64_t seed = 0;
  // Algorithm-faithful mode draws a fresh model initialization per
  // permutation; disabling it shares one initialization across permutations,
  // which makes the MC mean converge to the enumeration oracle exactly.
  bool fresh_init_per_permutation = true;
  // Model initializations derive from this stream when set, decoupling them
  // from the permutation stream; repeated runs can then estimate the same
  // target while drawing fresh permutations.
  std::optional<std::uint64_t> init_stream_seed;

  int workers = 1;
  int checkpoint_every = 0;  // permutations between checkpoints; 0 = off
  std::string checkpoint_path;

  double effective_tolerance(double full_acc) const {
    if (tolerance_abs.has_value()) return *tolerance_abs;
    return tolerance_rel * std::abs(full_acc);
  }
};

struct ScanResult {
  std::vector<double> marginals;        // indexed by triplet position in dt
  std::vector<std::uint8_t> truncated;  // 1 where the marginal was assigned by truncation
  int steps_taken = 0;
  double initial_acc = 0.0;
  double final_acc = 0.0;
};

// One inner loop of the truncated MC approximation: walk `perm`, one
// single-triplet gradient step per non-truncated position, and record the
// accuracy deltas.
ScanResult scan_permutation(const TripletSet& dt, const SplitInteractions& split,
                            const ModelSpec& spec, const Permutation& perm,
                            const McConfig& cfg, double full_acc, std::uint64_t init_seed);

struct ShapleyEstimate {
  double value = 0.0;  // running mean of observed marginals
  int n_samples = 0;
  int truncated_count = 0;
  std::vector<double> observations;  // per-permutation marginals, when retained
};

struct ShapleyRun {
  std::vector<ShapleyEstimate> estimates;  // by triplet index in dt
  int permutations_used = 0;
  bool converged = false;
};

// Outer MC loop: samples permutations keyed by (cfg.seed, k), scans each,
// folds marginals into per-triplet running means in draw order. Stops on
// max_permutations or when the value vector settles.
ShapleyRun estimate_tmc(const TripletSet& dt, const SplitInteractions& split,
                        const ModelSpec& spec, const McConfig& cfg, double full_acc,
                        bool keep_observations = false,
                        const std::string& resume_from = "");

// Enumeration oracle: average of scan marginals over every permutation of dt,
// with one shared initialization and no truncation. Refuses |dt| > 8.
std::vector<double> exact_shapley(const TripletSet& dt, const SplitInteractions& split,
                                  const ModelSpec& spec, const McConfig& cfg);

// The shared initialization seed used by exact_shapley (and by estimators
// running with fresh_init_per_permutation off).
std::uint64_t shared_init_seed(const McConfig& cfg);

// Model initialization for MC draw k under cfg's initialization policy.
std::uint64_t scan_init_seed(const McConfig& cfg, int draw_index);

// Multi-epoch weighted training with early stopping on validation accuracy;
// used for the full-set accuracy Acc(D^T) and for the final pipeline models.
struct TrainConfig {
  double learning_rate = 0.05;
  double l2_reg = 1e-4;
  int max_epochs = 1000;
  int patience = 10;
  int batch_size = 1;
  std::uint64_t seed = 0;
};

struct TrainedModel {
  ModelState model;
  double validation_accuracy = 0.0;
  int epochs_run = 0;
};

TrainedModel train_to_convergence(const TripletSet& dt, const std::vector<double>& weights,
                                  const SplitInteractions& split, const ModelSpec& spec,
                                  const TrainConfig& cfg, const EvalConfig& eval_cfg);

// Output CSV: user,pos_item,neg_item,shapley,n_samples,truncated_count.
void write_shapley_csv(const TripletSet& dt, const InteractionSet& index_space,
                       const ShapleyRun& run, const std::string& path);

}  // namespace itipr
