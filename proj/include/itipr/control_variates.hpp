#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "itipr/shapley.hpp"

namespace itipr {

struct CvOptions {
  // Permutations used to estimate the per-triplet coefficient c, which is
  // then frozen for the rest of the run.
  int warmup = 50;
  // 0 computes V* exactly from the rotation family (every triplet at every
  // position). A positive value instead averages that many uniformly drawn
  // positions per triplet; an approximation used at scale.
  int vstar_position_sample = 0;
};

// Paired per-triplet observation logs from the main and covariate scans.
struct CvStats {
  std::vector<std::vector<double>> main_obs;
  std::vector<std::vector<double>> cov_obs;
};

// The modified gradient-descent procedure: from one fixed initialization,
// a single complement-batch step scaled by |P|/(|D^T|-1), then a single
// step on the studied triplet. Its marginal depends only on the triplet
// and its position, never on the neighbors, so its permutation average is
// computable from |D^T| rotations.
class OmegaContext {
 public:
  OmegaContext(const TripletSet& dt, const SplitInteractions& split, const ModelSpec& spec,
               const McConfig& cfg, std::uint64_t init_seed);
  ~OmegaContext();
  OmegaContext(const OmegaContext&) = delete;
  OmegaContext& operator=(const OmegaContext&) = delete;

  // Per-thread working buffers; marginal() itself is const and reentrant.
  struct Scratch {
    ModelState work;
  };
  Scratch make_scratch() const;

  // position is 1-based within a permutation of all |D^T| triplets.
  double marginal(int triplet_index, int position, Scratch& scratch) const;

  int n_triplets() const;
  const ModelState& theta_empty() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<double> omega_star_scan(const TripletSet& dt, const SplitInteractions& split,
                                    const ModelSpec& spec, const Permutation& perm,
                                    const McConfig& cfg, std::uint64_t init_seed);

// V*: average covariate marginal over the rotation family (exact), or over
// sampled positions when opts.vstar_position_sample > 0.
std::vector<double> exact_vstar(const TripletSet& dt, const SplitInteractions& split,
                                const ModelSpec& spec, const McConfig& cfg,
                                std::uint64_t init_seed, const CvOptions& opts = {});

// c = sample Cov(main, cov) / sample Var(cov); 0 when the covariate is
// degenerate. Requires at least two paired observations.
double estimate_c(std::span<const double> main_obs, std::span<const double> cov_obs);
std::vector<double> estimate_c(const CvStats& stats);

double sample_correlation(std::span<const double> a, std::span<const double> b);

inline double cv_estimate(double hat, double hat_star, double vstar, double c) {
  return hat - c * (hat_star - vstar);
}

struct CvTripletResult {
  double value_plain = 0.0;
  double value_cv = 0.0;
  double hat_star = 0.0;
  double vstar = 0.0;
  double c = 0.0;
  double rho = 0.0;
};

struct CvRun {
  ShapleyRun plain;  // observations retained
  std::vector<CvTripletResult> cv;
  std::uint64_t omega_init_seed = 0;
};

// CV-stabilized estimation: each sampled permutation is scanned twice (main
// and covariate) so the observation pairs share their permutation noise.
CvRun estimate_tmc_cv(const TripletSet& dt, const SplitInteractions& split,
                      const ModelSpec& spec, const McConfig& cfg, const CvOptions& opts,
                      double full_acc, const std::string& resume_from = "");

// Shapley CSV plus columns shapley_cv,c,vstar,rho_hat.
void write_shapley_cv_csv(const TripletSet& dt, const InteractionSet& index_space,
                          const CvRun& run, const std::string& path);

}  // namespace itipr
