#include "itipr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "itipr/config.hpp"
#include "itipr/rng.hpp"

namespace itipr {

using nlohmann::json;

namespace {

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ShapleySummary summarize(const std::vector<double>& values, const ShapleyRun& run) {
  ShapleySummary s;
  s.n = static_cast<int>(values.size());
  if (s.n == 0) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(var / (s.n - 1)) : 0.0;
  std::int64_t truncated = 0, total = 0;
  for (const auto& e : run.estimates) {
    truncated += e.truncated_count;
    total += e.n_samples;
  }
  s.truncated_fraction = total > 0 ? static_cast<double>(truncated) / total : 0.0;
  s.permutations = run.permutations_used;
  return s;
}

json summary_to_json(const ShapleySummary& s) {
  return json{{"n", s.n},           {"mean", s.mean},
              {"min", s.min},       {"max", s.max},
              {"stddev", s.stddev}, {"truncated_fraction", s.truncated_fraction},
              {"permutations", s.permutations}};
}

ShapleySummary summary_from_json(const json& j) {
  ShapleySummary s;
  s.n = j.at("n");
  s.mean = j.at("mean");
  s.min = j.at("min");
  s.max = j.at("max");
  s.stddev = j.at("stddev");
  s.truncated_fraction = j.at("truncated_fraction");
  s.permutations = j.at("permutations");
  return s;
}

json eval_to_json(const EvalReport& e) {
  return json{{"recall_at_k", e.recall},
              {"ndcg_at_k", e.ndcg},
              {"k", e.k},
              {"n_users_evaluated", e.n_users_evaluated}};
}

EvalReport eval_from_json(const json& j) {
  EvalReport e;
  e.recall = j.at("recall_at_k");
  e.ndcg = j.at("ndcg_at_k");
  e.k = j.at("k");
  e.n_users_evaluated = j.at("n_users_evaluated");
  return e;
}

json report_to_json_obj(const RunReport& r) {
  json j;
  j["config"] = json::parse(r.config_echo.empty() ? "{}" : r.config_echo);
  j["seed"] = r.seed;
  j["workers"] = r.workers;
  j["n_triplets_initial"] = r.n_triplets_initial;
  j["n_triplets_resampled"] = r.n_triplets_resampled;
  j["n_triplets_aug"] = r.n_triplets_aug;
  j["pairs_skipped"] = r.pairs_skipped;
  j["full_acc_initial"] = r.full_acc_initial;
  j["full_acc_aug"] = r.full_acc_aug;
  j["shapley_initial"] = summary_to_json(r.shapley_initial);
  j["shapley_reestimated"] = summary_to_json(r.shapley_reestimated);
  j["tip_final_mse"] = r.tip_final_mse;
  j["weights_hash_produced"] = r.weights_hash_produced;
  j["weights_hash_consumed"] = r.weights_hash_consumed;
  j["baseline_validation"] = eval_to_json(r.baseline_validation);
  j["baseline_test"] = eval_to_json(r.baseline_test);
  j["itipr_validation"] = eval_to_json(r.itipr_validation);
  j["itipr_test"] = eval_to_json(r.itipr_test);
  json timings = json::array();
  for (const auto& t : r.timings) timings.push_back({{"stage", t.name}, {"seconds", t.seconds}});
  j["timings"] = timings;
  return j;
}

}  // namespace

std::string RunReport::to_json() const { return report_to_json_obj(*this).dump(2); }

RunReport RunReport::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  json j;
  in >> j;
  RunReport r;
  r.config_echo = j.at("config").dump();
  r.seed = j.at("seed");
  r.workers = j.at("workers");
  r.n_triplets_initial = j.at("n_triplets_initial");
  r.n_triplets_resampled = j.at("n_triplets_resampled");
  r.n_triplets_aug = j.at("n_triplets_aug");
  r.pairs_skipped = j.at("pairs_skipped");
  r.full_acc_initial = j.at("full_acc_initial");
  r.full_acc_aug = j.at("full_acc_aug");
  r.shapley_initial = summary_from_json(j.at("shapley_initial"));
  r.shapley_reestimated = summary_from_json(j.at("shapley_reestimated"));
  r.tip_final_mse = j.at("tip_final_mse");
  r.weights_hash_produced = j.at("weights_hash_produced");
  r.weights_hash_consumed = j.at("weights_hash_consumed");
  r.baseline_validation = eval_from_json(j.at("baseline_validation"));
  r.baseline_test = eval_from_json(j.at("baseline_test"));
  r.itipr_validation = eval_from_json(j.at("itipr_validation"));
  r.itipr_test = eval_from_json(j.at("itipr_test"));
  for (const auto& t : j.at("timings"))
    r.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
  return r;
}

bool report_equal_ignoring_timings(const RunReport& a, const RunReport& b) {
  json ja = report_to_json_obj(a);
  json jb = report_to_json_obj(b);
  ja.erase("timings");
  jb.erase("timings");
  // Worker count is a scheduling knob, not a result.
  ja.at("config").erase("workers");
  jb.at("config").erase("workers");
  ja.erase("workers");
  jb.erase("workers");
  return ja == jb;
}

std::vector<double> normalize_weights(const std::vector<double>& values, double eps) {
  if (values.empty()) throw std::invalid_argument("normalize_weights on empty input");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("weight floor must be in (0,1)");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite shapley value in weights");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> w(values.size(), 1.0);
  if (hi == lo) return w;
  const double span = hi - lo;
  for (std::size_t t = 0; t < values.size(); ++t)
    w[t] = eps + (1.0 - eps) * (values[t] - lo) / span;
  return w;
}

std::uint64_t weights_hash(const std::vector<double>& weights) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double w : weights) {
    std::uint64_t bits;
    std::memcpy(&bits, &w, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

RunReport run_itipr(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  RunReport report;
  report.seed = cfg.seed;
  report.workers = cfg.workers;
  report.config_echo = pipeline_config_to_json(cfg);

  const bool save = !cfg.out_dir.empty();
  if (save) fs::create_directories(cfg.out_dir);
  auto artifact = [&](const std::string& name) { return cfg.out_dir + "/" + name; };

  auto stage_start = std::chrono::steady_clock::now();
  auto finish_stage = [&](const std::string& name) {
    report.timings.push_back({name, elapsed_since(stage_start)});
    stage_start = std::chrono::steady_clock::now();
  };

  // Data.
  InteractionSet interactions;
  if (cfg.data_path.empty()) {
    SyntheticConfig synth = cfg.synth;
    synth.seed = mix_seed(cfg.seed, 0x0da1u);
    interactions = planted_preference(synth);
  } else {
    LoadResult loaded = load_records(cfg.data_path, cfg.has_ratings);
    interactions = binarize(loaded.records, cfg.binarize_threshold);
  }
  if (cfg.min_user_degree > 0 || cfg.min_item_degree > 0)
    interactions = filter_by_activity(interactions, cfg.min_user_degree, cfg.min_item_degree);
  const SplitInteractions splits = split(interactions, cfg.ratios, mix_seed(cfg.seed, 0x591du));
  if (save) write_split_csv(splits, artifact("split.csv"));
  finish_stage("prepare");

  // Stage 1: initial triplet set.
  const TripletSet dt =
      sample_triplets(splits.train, cfg.negatives_per_positive, mix_seed(cfg.seed, 0x7319u));
  report.n_triplets_initial = static_cast<int>(dt.size());
  if (save) write_triplets_csv(dt, splits.train, artifact("triplets_initial.csv"));
  finish_stage("sample_triplets");

  EvalConfig eval_cfg;
  eval_cfg.k = cfg.top_k;
  eval_cfg.metric = cfg.acc_metric;
  eval_cfg.user_sample = cfg.eval_user_sample;
  eval_cfg.sample_seed = mix_seed(cfg.seed, 0xe5a9u);

  // Baseline arm: plain BPR on D^T. Doubles as the Acc(D^T) provider and as
  // the embedding source for TIP. Shares its seed with the final arm so the
  // two arms are a paired comparison.
  const std::uint64_t arm_seed = mix_seed(cfg.seed, 0x7a13u);
  TrainConfig base_cfg = cfg.final_train;
  base_cfg.seed = arm_seed;
  const TrainedModel baseline = train_to_convergence(dt, {}, splits, cfg.model, base_cfg, eval_cfg);
  report.full_acc_initial = baseline.validation_accuracy;
  if (save) write_model(baseline.model, artifact("baseline_model.txt"));
  finish_stage("baseline_training");

  // Stage 2: triplet Shapley on D^T.
  McConfig mc = cfg.mc;
  mc.eval = eval_cfg;
  mc.workers = cfg.workers;
  mc.seed = mix_seed(cfg.seed, 0x3c01u);
  std::vector<double> values(dt.size());
  if (cfg.use_cv) {
    CvRun run = estimate_tmc_cv(dt, splits, cfg.model, mc, cfg.cv, report.full_acc_initial);
    for (std::size_t t = 0; t < dt.size(); ++t) values[t] = run.cv[t].value_cv;
    report.shapley_initial = summarize(values, run.plain);
    if (save) write_shapley_cv_csv(dt, splits.train, run, artifact("shapley_initial.csv"));
  } else {
    ShapleyRun run = estimate_tmc(dt, splits, cfg.model, mc, report.full_acc_initial);
    for (std::size_t t = 0; t < dt.size(); ++t) values[t] = run.estimates[t].value;
    report.shapley_initial = summarize(values, run);
    if (save) write_shapley_csv(dt, splits.train, run, artifact("shapley_initial.csv"));
  }
  finish_stage("shapley_initial");

  // Stage 3: TIP on the stage-2 values.
  ResampleConfig rs = cfg.resample;
  rs.seed = mix_seed(cfg.seed, 0x71e0u);
  const TipTrainResult tip = tip_train(values, dt, baseline.model, rs);
  report.tip_final_mse = tip.final_mse;
  if (save) write_tip(tip.model, tip.scaler, artifact("tip_model.txt"));
  finish_stage("tip_training");

  // Stage 4: importance-aware resampling.
  const ResampleResult resampled = resample(dt, tip.model, baseline.model, splits.train, rs);
  const TripletSet& aug = resampled.augmented;
  report.n_triplets_aug = static_cast<int>(aug.size());
  report.n_triplets_resampled = report.n_triplets_aug - report.n_triplets_initial;
  report.pairs_skipped = resampled.pairs_skipped;
  if (save) write_triplets_csv(aug, splits.train, artifact("triplets_aug.csv"));
  finish_stage("resample");

  // Stage 5: reestimate over the augmented set (not the original one).
  TrainConfig aug_cfg = cfg.final_train;
  aug_cfg.seed = mix_seed(cfg.seed, 0xba5fu);
  const TrainedModel aug_plain = train_to_convergence(aug, {}, splits, cfg.model, aug_cfg, eval_cfg);
  report.full_acc_aug = aug_plain.validation_accuracy;
  McConfig mc2 = mc;
  mc2.seed = mix_seed(cfg.seed, 0x3c02u);
  std::vector<double> values_aug(aug.size());
  if (cfg.use_cv) {
    CvRun run = estimate_tmc_cv(aug, splits, cfg.model, mc2, cfg.cv, report.full_acc_aug);
    for (std::size_t t = 0; t < aug.size(); ++t) values_aug[t] = run.cv[t].value_cv;
    report.shapley_reestimated = summarize(values_aug, run.plain);
    if (save) write_shapley_cv_csv(aug, splits.train, run, artifact("shapley_reestimated.csv"));
  } else {
    ShapleyRun run = estimate_tmc(aug, splits, cfg.model, mc2, report.full_acc_aug);
    for (std::size_t t = 0; t < aug.size(); ++t) values_aug[t] = run.estimates[t].value;
    report.shapley_reestimated = summarize(values_aug, run);
    if (save) write_shapley_csv(aug, splits.train, run, artifact("shapley_reestimated.csv"));
  }
  finish_stage("shapley_reestimated");

  // Stage 6: weights.
  std::vector<double> weights = normalize_weights(values_aug, cfg.weight_floor);
  if (cfg.unit_weights) weights.assign(aug.size(), 1.0);
  report.weights_hash_produced = weights_hash(weights);
  if (save) {
    std::ofstream out(artifact("weights.csv"));
    out.precision(17);
    out << "user,pos_item,neg_item,weight\n";
    for (std::size_t t = 0; t < aug.size(); ++t)
      out << splits.train.user_id(aug.triplets[t].user) << ','
          << splits.train.item_id(aug.triplets[t].pos) << ','
          << splits.train.item_id(aug.triplets[t].neg) << ',' << weights[t] << '\n';
  }
  finish_stage("normalize_weights");

  // Stage 7: weighted training from scratch on D^T_aug.
  TrainConfig final_cfg = cfg.final_train;
  final_cfg.seed = arm_seed;
  report.weights_hash_consumed = weights_hash(weights);
  const TrainedModel final_model =
      train_to_convergence(aug, weights, splits, cfg.model, final_cfg, eval_cfg);
  if (save) write_model(final_model.model, artifact("itipr_model.txt"));
  finish_stage("final_training");

  // Stage 8: paired evaluation on the held-out test items.
  report.baseline_validation = evaluate(baseline.model, splits, Role::validation, cfg.top_k);
  report.baseline_test = evaluate(baseline.model, splits, Role::test, cfg.top_k);
  report.itipr_validation = evaluate(final_model.model, splits, Role::validation, cfg.top_k);
  report.itipr_test = evaluate(final_model.model, splits, Role::test, cfg.top_k);
  finish_stage("evaluate");

  if (save) {
    std::ofstream out(artifact("report.json"));
    out << report.to_json() << '\n';
  }
  return report;
}

double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    std::size_t k = 0;
    while (k < n) {
      std::size_t j = k;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[k]]) ++j;
      const double avg = 0.5 * (k + j) + 1.0;  // average rank for ties
      for (std::size_t q = k; q <= j; ++q) r[idx[q]] = avg;
      k = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  return sample_correlation(ra, rb);
}

StabilityReport stability_analysis(const TripletSet& dt, const SplitInteractions& split,
                                   const ModelSpec& spec, const McConfig& base_cfg,
                                   const CvOptions& cv_opts, bool with_cv, int runs,
                                   double full_acc) {
  if (runs < 2) throw std::invalid_argument("stability analysis needs at least 2 runs");
  StabilityReport rep;
  rep.runs = runs;
  rep.with_cv = with_cv;
  const int n = static_cast<int>(dt.size());

  for (int r = 0; r < runs; ++r) {
    McConfig cfg = base_cfg;
    cfg.seed = mix_seed(base_cfg.seed, 0x57abu, static_cast<std::uint64_t>(r));
    // Every run estimates the same target: only the permutation stream varies.
    cfg.init_stream_seed = base_cfg.init_stream_seed.value_or(base_cfg.seed);
    std::vector<double> values(n);
    if (with_cv) {
      CvRun run = estimate_tmc_cv(dt, split, spec, cfg, cv_opts, full_acc);
      for (int t = 0; t < n; ++t) values[t] = run.cv[t].value_cv;
    } else {
      ShapleyRun run = estimate_tmc(dt, split, spec, cfg, full_acc);
      for (int t = 0; t < n; ++t) values[t] = run.estimates[t].value;
    }
    rep.run_values.push_back(std::move(values));
  }

  rep.per_triplet_variance.assign(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double mean = 0.0;
    for (int r = 0; r < runs; ++r) mean += rep.run_values[r][t];
    mean /= runs;
    double var = 0.0;
    for (int r = 0; r < runs; ++r) {
      const double d = rep.run_values[r][t] - mean;
      var += d * d;
    }
    rep.per_triplet_variance[t] = var / (runs - 1);
  }

  double total = 0.0;
  int pairs = 0;
  for (int r1 = 0; r1 < runs; ++r1)
    for (int r2 = r1 + 1; r2 < runs; ++r2) {
      total += spearman_rank_correlation(rep.run_values[r1], rep.run_values[r2]);
      pairs++;
    }
  rep.mean_spearman = pairs > 0 ? total / pairs : 0.0;
  return rep;
}

}  // namespace itipr
