#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itipr/control_variates.hpp"
#include "itipr/dataset.hpp"
#include "itipr/metrics.hpp"
#include "itipr/shapley.hpp"
#include "itipr/synthetic.hpp"
#include "itipr/tip_resample.hpp"

namespace itipr {

struct PipelineConfig {
  // Dataset. When data_path is empty the planted synthetic set is used.
  std::string data_path;
  bool has_ratings = false;
  double binarize_threshold = 3.0;
  int min_user_degree = 0;
  int min_item_degree = 0;
  SplitRatios ratios;
  SyntheticConfig synth;

  ModelSpec model;
  int negatives_per_positive = 1;

  McConfig mc;  // seed/workers/eval fields are overwritten from the run fields below
  bool use_cv = true;
  CvOptions cv;

  ResampleConfig resample;

  double weight_floor = 0.05;  // epsilon of the min-max weight rescaling
  bool unit_weights = false;   // ablation: train the final arm with weight 1 everywhere
  TrainConfig final_train;

  int top_k = 20;
  Metric acc_metric = Metric::ndcg;
  int eval_user_sample = 0;  // users scored inside A(.); 0 = all

  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir;  // empty = keep everything in memory
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct ShapleySummary {
  int n = 0;
  double mean = 0.0, min = 0.0, max = 0.0, stddev = 0.0;
  double truncated_fraction = 0.0;
  int permutations = 0;
};

struct RunReport {
  std::string config_echo;  // canonical json of the config
  std::uint64_t seed = 0;
  int workers = 0;

  int n_triplets_initial = 0;
  int n_triplets_resampled = 0;
  int n_triplets_aug = 0;
  int pairs_skipped = 0;

  double full_acc_initial = 0.0;
  double full_acc_aug = 0.0;
  ShapleySummary shapley_initial;
  ShapleySummary shapley_reestimated;
  double tip_final_mse = 0.0;

  std::uint64_t weights_hash_produced = 0;
  std::uint64_t weights_hash_consumed = 0;

  EvalReport baseline_validation;
  EvalReport baseline_test;
  EvalReport itipr_validation;
  EvalReport itipr_test;

  std::vector<StageTiming> timings;

  std::string to_json() const;
  static RunReport from_json_file(const std::string& path);
};

// Everything but timings must match.
bool report_equal_ignoring_timings(const RunReport& a, const RunReport& b);

// Min-max rescaling of raw values into [eps, 1]; all-equal input maps to 1.
std::vector<double> normalize_weights(const std::vector<double>& values, double eps);

// FNV-1a over the byte representation of the weight vector, in order.
std::uint64_t weights_hash(const std::vector<double>& weights);

// The full procedure: sample, value, fit TIP, resample, revalue, weight,
// retrain from scratch, and evaluate against the same-seed plain-BPR arm.
RunReport run_itipr(const PipelineConfig& cfg);

// Repeats the valuation stage `runs` times with derived seeds and reports
// cross-run variance and rank stability of the triplet values.
struct StabilityReport {
  int runs = 0;
  bool with_cv = false;
  std::vector<double> per_triplet_variance;
  double mean_spearman = 0.0;
  std::vector<std::vector<double>> run_values;  // [run][triplet]
};

StabilityReport stability_analysis(const TripletSet& dt, const SplitInteractions& split,
                                   const ModelSpec& spec, const McConfig& base_cfg,
                                   const CvOptions& cv_opts, bool with_cv, int runs,
                                   double full_acc);

double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace itipr
