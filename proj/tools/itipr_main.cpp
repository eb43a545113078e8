// Command-line front end: prepare data, value triplets, fit the importance
// predictor, resample, retrain, and evaluate — stage by stage or end to end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "itipr/config.hpp"
#include "itipr/control_variates.hpp"
#include "itipr/pipeline.hpp"
#include "itipr/rng.hpp"
#include "itipr/synthetic.hpp"

namespace fs = std::filesystem;
using namespace itipr;

namespace {

constexpr const char* kSplitFile = "split.csv";
constexpr const char* kTripletsFile = "triplets_initial.csv";
constexpr const char* kTripletsAugFile = "triplets_aug.csv";
constexpr const char* kShapleyFile = "shapley_initial.csv";
constexpr const char* kShapleyAugFile = "shapley_reestimated.csv";
constexpr const char* kBaselineModelFile = "baseline_model.txt";
constexpr const char* kItiprModelFile = "itipr_model.txt";
constexpr const char* kTipModelFile = "tip_model.txt";

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;  // -1 = keep config value
  int workers = 0;         // 0 = keep config value

  PipelineConfig load() const {
    PipelineConfig cfg = load_pipeline_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (workers > 0) cfg.workers = workers;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (cfg.out_dir.empty()) cfg.out_dir = "itipr_run";
    return cfg;
  }
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "config file (key = value with [tables])");
  sub->add_option("--seed", args.seed, "master seed override");
  sub->add_option("--out", args.out_dir, "run directory for artifacts");
  sub->add_option("--workers", args.workers, "worker threads for permutation scans");
}

std::string in_dir(const PipelineConfig& cfg, const std::string& name) {
  return cfg.out_dir + "/" + name;
}

void require_artifact(const PipelineConfig& cfg, const std::string& name, const char* producer) {
  if (!fs::exists(in_dir(cfg, name)))
    throw std::runtime_error("missing " + in_dir(cfg, name) + "; run `itipr " + producer +
                             "` first");
}

InteractionSet load_interactions(const PipelineConfig& cfg) {
  if (cfg.data_path.empty()) {
    SyntheticConfig synth = cfg.synth;
    synth.seed = mix_seed(cfg.seed, 0x0da1u);
    return planted_preference(synth);
  }
  LoadResult loaded = load_records(cfg.data_path, cfg.has_ratings);
  return binarize(loaded.records, cfg.binarize_threshold);
}

EvalConfig make_eval_cfg(const PipelineConfig& cfg) {
  EvalConfig e;
  e.k = cfg.top_k;
  e.metric = cfg.acc_metric;
  e.user_sample = cfg.eval_user_sample;
  e.sample_seed = mix_seed(cfg.seed, 0xe5a9u);
  return e;
}

// Matches the seeding used by run_itipr so staged runs reproduce it.
McConfig make_mc_cfg(const PipelineConfig& cfg, bool reestimate) {
  McConfig mc = cfg.mc;
  mc.eval = make_eval_cfg(cfg);
  mc.workers = cfg.workers;
  mc.seed = mix_seed(cfg.seed, reestimate ? 0x3c02u : 0x3c01u);
  return mc;
}

TrainedModel train_full(const PipelineConfig& cfg, const TripletSet& dt,
                        const SplitInteractions& splits, bool reestimate) {
  TrainConfig tc = cfg.final_train;
  tc.seed = mix_seed(cfg.seed, reestimate ? 0xba5fu : 0x7a13u);
  return train_to_convergence(dt, {}, splits, cfg.model, tc, make_eval_cfg(cfg));
}

std::vector<double> read_shapley_column(const std::string& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open shapley csv: " + path);
  std::string header;
  std::getline(in, header);
  const bool has_cv = header.find("shapley_cv") != std::string::npos;
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t p = 0; p <= line.size(); ++p) {
      if (p == line.size() || line[p] == ',') {
        fields.push_back(line.substr(start, p - start));
        start = p + 1;
      }
    }
    // columns: user,pos,neg,shapley,n_samples,truncated[,shapley_cv,...]
    const std::size_t col = has_cv ? 6 : 3;
    if (fields.size() <= col) throw std::runtime_error("bad shapley row: " + line);
    values.push_back(std::stod(fields[col]));
  }
  if (values.size() != expected)
    throw std::runtime_error("shapley csv rows (" + std::to_string(values.size()) +
                             ") do not match triplet count (" + std::to_string(expected) + ")");
  return values;
}

int cmd_prepare(const CommonArgs& common) {
  PipelineConfig cfg = common.load();
  fs::create_directories(cfg.out_dir);
  InteractionSet interactions = load_interactions(cfg);
  if (cfg.min_user_degree > 0 || cfg.min_item_degree > 0)
    interactions = filter_by_activity(interactions, cfg.min_user_degree, cfg.min_item_degree);
  SplitInteractions splits = split(interactions, cfg.ratios, mix_seed(cfg.seed, 0x591du));
  write_split_csv(splits, in_dir(cfg, kSplitFile));
  std::printf("prepared %d users x %d items, %lld interactions -> %s\n", interactions.n_users(),
              interactions.n_items(), static_cast<long long>(interactions.n_interactions()),
              in_dir(cfg, kSplitFile).c_str());
  std::printf("train/validation/test interactions: %lld/%lld/%lld\n",
              static_cast<long long>(splits.train.n_interactions()),
              static_cast<long long>(splits.validation.n_interactions()),
              static_cast<long long>(splits.test.n_interactions()));
  return 0;
}

int cmd_value(const CommonArgs& common, bool use_cv_flag, bool no_cv_flag, bool exact,
              int checkpoint_every, const std::string& resume, const std::string& triplets_file,
              const std::string& out_csv) {
  PipelineConfig cfg = common.load();
  if (use_cv_flag) cfg.use_cv = true;
  if (no_cv_flag) cfg.use_cv = false;
  require_artifact(cfg, kSplitFile, "prepare");
  SplitInteractions splits = read_split_csv(in_dir(cfg, kSplitFile));

  const bool reestimate = !triplets_file.empty() && triplets_file != kTripletsFile;
  const std::string tfile = triplets_file.empty() ? kTripletsFile : triplets_file;
  TripletSet dt;
  if (fs::exists(in_dir(cfg, tfile))) {
    dt = read_triplets_csv(splits.train, in_dir(cfg, tfile));
  } else if (!reestimate) {
    dt = sample_triplets(splits.train, cfg.negatives_per_positive, mix_seed(cfg.seed, 0x7319u));
    write_triplets_csv(dt, splits.train, in_dir(cfg, tfile));
  } else {
    throw std::runtime_error("missing " + in_dir(cfg, tfile));
  }
  std::printf("valuing %zu triplets (%s)\n", dt.size(), exact ? "exact enumeration"
                                                       : cfg.use_cv ? "tmc + control variates"
                                                                    : "tmc");

  McConfig mc = make_mc_cfg(cfg, reestimate);
  mc.checkpoint_every = checkpoint_every;
  if (checkpoint_every > 0) mc.checkpoint_path = in_dir(cfg, "shapley_checkpoint.json");

  const std::string csv = in_dir(cfg, out_csv.empty() ? (reestimate ? kShapleyAugFile : kShapleyFile)
                                                      : out_csv);
  if (exact) {
    ShapleyRun run;
    run.estimates.resize(dt.size());
    const std::vector<double> values = exact_shapley(dt, splits, cfg.model, mc);
    int fact = 1;
    for (int i = 2; i <= static_cast<int>(dt.size()); ++i) fact *= i;
    for (std::size_t t = 0; t < dt.size(); ++t) {
      run.estimates[t].value = values[t];
      run.estimates[t].n_samples = fact;
    }
    run.permutations_used = fact;
    write_shapley_csv(dt, splits.train, run, csv);
    std::printf("exact shapley over %d permutations -> %s\n", fact, csv.c_str());
    return 0;
  }

  const TrainedModel full = train_full(cfg, dt, splits, reestimate);
  std::printf("full-set validation accuracy: %.6f (%d epochs)\n", full.validation_accuracy,
              full.epochs_run);
  if (!reestimate) write_model(full.model, in_dir(cfg, kBaselineModelFile));

  if (cfg.use_cv) {
    CvRun run = estimate_tmc_cv(dt, splits, cfg.model, mc, cfg.cv, full.validation_accuracy, resume);
    write_shapley_cv_csv(dt, splits.train, run, csv);
    std::printf("%d permutations (%s) -> %s\n", run.plain.permutations_used,
                run.plain.converged ? "converged" : "budget reached", csv.c_str());
  } else {
    ShapleyRun run = estimate_tmc(dt, splits, cfg.model, mc, full.validation_accuracy,
                                  /*keep_observations=*/checkpoint_every > 0, resume);
    write_shapley_csv(dt, splits.train, run, csv);
    std::printf("%d permutations (%s) -> %s\n", run.permutations_used,
                run.converged ? "converged" : "budget reached", csv.c_str());
  }
  return 0;
}

int cmd_tip(const CommonArgs& common) {
  PipelineConfig cfg = common.load();
  require_artifact(cfg, kSplitFile, "prepare");
  require_artifact(cfg, kTripletsFile, "value");
  require_artifact(cfg, kShapleyFile, "value");
  require_artifact(cfg, kBaselineModelFile, "value");
  SplitInteractions splits = read_split_csv(in_dir(cfg, kSplitFile));
  TripletSet dt = read_triplets_csv(splits.train, in_dir(cfg, kTripletsFile));
  std::vector<double> values = read_shapley_column(in_dir(cfg, kShapleyFile), dt.size());
  ModelState model = read_model(in_dir(cfg, kBaselineModelFile), &splits.train);
  ResampleConfig rs = cfg.resample;
  rs.seed = mix_seed(cfg.seed, 0x71e0u);
  TipTrainResult tip = tip_train(values, dt, model, rs);
  write_tip(tip.model, tip.scaler, in_dir(cfg, kTipModelFile));
  std::printf("tip trained, final mse %.6g -> %s\n", tip.final_mse,
              in_dir(cfg, kTipModelFile).c_str());
  return 0;
}

int cmd_resample(const CommonArgs& common) {
  PipelineConfig cfg = common.load();
  require_artifact(cfg, kSplitFile, "prepare");
  require_artifact(cfg, kTripletsFile, "value");
  require_artifact(cfg, kTipModelFile, "tip");
  require_artifact(cfg, kBaselineModelFile, "value");
  SplitInteractions splits = read_split_csv(in_dir(cfg, kSplitFile));
  TripletSet dt = read_triplets_csv(splits.train, in_dir(cfg, kTripletsFile));
  TipModel tip;
  TipScaler scaler;
  read_tip(in_dir(cfg, kTipModelFile), tip, scaler);
  ModelState model = read_model(in_dir(cfg, kBaselineModelFile), &splits.train);
  ResampleConfig rs = cfg.resample;
  rs.seed = mix_seed(cfg.seed, 0x71e0u);
  ResampleResult result = resample(dt, tip, model, splits.train, rs);
  write_triplets_csv(result.augmented, splits.train, in_dir(cfg, kTripletsAugFile));
  std::printf("augmented %zu -> %zu triplets (%d pairs skipped) -> %s\n", dt.size(),
              result.augmented.size(), result.pairs_skipped,
              in_dir(cfg, kTripletsAugFile).c_str());
  return 0;
}

int cmd_train(const CommonArgs& common) {
  PipelineConfig cfg = common.load();
  require_artifact(cfg, kSplitFile, "prepare");
  require_artifact(cfg, kTripletsAugFile, "resample");
  require_artifact(cfg, kShapleyAugFile, "value --triplets triplets_aug.csv");
  SplitInteractions splits = read_split_csv(in_dir(cfg, kSplitFile));
  TripletSet aug = read_triplets_csv(splits.train, in_dir(cfg, kTripletsAugFile));
  std::vector<double> values = read_shapley_column(in_dir(cfg, kShapleyAugFile), aug.size());
  std::vector<double> weights = normalize_weights(values, cfg.weight_floor);
  if (cfg.unit_weights) weights.assign(aug.size(), 1.0);
  TrainConfig tc = cfg.final_train;
  tc.seed = mix_seed(cfg.seed, 0x7a13u);
  TrainedModel model = train_to_convergence(aug, weights, splits, cfg.model, tc, make_eval_cfg(cfg));
  write_model(model.model, in_dir(cfg, kItiprModelFile));
  std::printf("weighted training done: validation accuracy %.6f (%d epochs) -> %s\n",
              model.validation_accuracy, model.epochs_run, in_dir(cfg, kItiprModelFile).c_str());
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& model_file) {
  PipelineConfig cfg = common.load();
  require_artifact(cfg, kSplitFile, "prepare");
  SplitInteractions splits = read_split_csv(in_dir(cfg, kSplitFile));
  const std::string mf = model_file.empty() ? kItiprModelFile : model_file;
  require_artifact(cfg, mf, "train");
  ModelState model = read_model(in_dir(cfg, mf), &splits.train);
  EvalReport val = evaluate(model, splits, Role::validation, cfg.top_k);
  EvalReport test = evaluate(model, splits, Role::test, cfg.top_k);
  std::printf("{\"validation\":%s,\"test\":%s}\n", val.to_json().c_str(), test.to_json().c_str());
  return 0;
}

int cmd_pipeline(const CommonArgs& common) {
  PipelineConfig cfg = common.load();
  RunReport report = run_itipr(cfg);
  std::printf("baseline test:  recall@%d %.6f  ndcg@%d %.6f\n", report.baseline_test.k,
              report.baseline_test.recall, report.baseline_test.k, report.baseline_test.ndcg);
  std::printf("itipr test:     recall@%d %.6f  ndcg@%d %.6f\n", report.itipr_test.k,
              report.itipr_test.recall, report.itipr_test.k, report.itipr_test.ndcg);
  std::printf("report: %s/report.json\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_stability(const CommonArgs& common, int runs, bool use_cv_flag, bool no_cv_flag) {
  PipelineConfig cfg = common.load();
  if (use_cv_flag) cfg.use_cv = true;
  if (no_cv_flag) cfg.use_cv = false;
  require_artifact(cfg, kSplitFile, "prepare");
  SplitInteractions splits = read_split_csv(in_dir(cfg, kSplitFile));
  TripletSet dt;
  if (fs::exists(in_dir(cfg, kTripletsFile))) {
    dt = read_triplets_csv(splits.train, in_dir(cfg, kTripletsFile));
  } else {
    dt = sample_triplets(splits.train, cfg.negatives_per_positive, mix_seed(cfg.seed, 0x7319u));
    write_triplets_csv(dt, splits.train, in_dir(cfg, kTripletsFile));
  }
  const TrainedModel full = train_full(cfg, dt, splits, false);
  StabilityReport rep = stability_analysis(dt, splits, cfg.model, make_mc_cfg(cfg, false), cfg.cv,
                                           cfg.use_cv, runs, full.validation_accuracy);
  double mean_var = 0.0;
  for (double v : rep.per_triplet_variance) mean_var += v;
  mean_var /= rep.per_triplet_variance.size();
  std::printf("{\"runs\":%d,\"cv\":%s,\"mean_per_triplet_variance\":%.10g,"
              "\"mean_spearman\":%.10g}\n",
              rep.runs, rep.with_cv ? "true" : "false", mean_var, rep.mean_spearman);
  return 0;
}

int cmd_synth(const CommonArgs& common, const std::string& out_file) {
  PipelineConfig cfg = common.load();
  SyntheticConfig synth = cfg.synth;
  synth.seed = mix_seed(cfg.seed, 0x0da1u);
  InteractionSet s = planted_preference(synth);
  write_interactions_csv(s, out_file);
  std::printf("wrote %lld interactions (%d users x %d items) -> %s\n",
              static_cast<long long>(s.n_interactions()), s.n_users(), s.n_items(),
              out_file.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplet Shapley valuation and importance-aware retraining for BPR"};
  app.require_subcommand(1);

  CommonArgs prepare_args, value_args, tip_args, resample_args, train_args, evaluate_args,
      pipeline_args, stability_args, synth_args;

  CLI::App* prepare = app.add_subcommand("prepare", "ingest, binarize, filter and split");
  add_common(prepare, prepare_args);

  CLI::App* value = app.add_subcommand("value", "estimate triplet Shapley values");
  add_common(value, value_args);
  bool v_cv = false, v_nocv = false, v_exact = false;
  int v_checkpoint = 0;
  std::string v_resume, v_triplets, v_out_csv;
  value->add_flag("--cv", v_cv, "enable control variates");
  value->add_flag("--no-cv", v_nocv, "disable control variates");
  value->add_flag("--exact", v_exact, "exact enumeration oracle (small sets only)");
  value->add_option("--checkpoint-every", v_checkpoint, "permutations between checkpoints");
  value->add_option("--resume", v_resume, "checkpoint file to resume from");
  value->add_option("--triplets", v_triplets, "triplet csv to value (default initial set)");
  value->add_option("--out-csv", v_out_csv, "output csv name inside the run directory");

  CLI::App* tip = app.add_subcommand("tip", "train the importance predictor");
  add_common(tip, tip_args);

  CLI::App* resample_cmd = app.add_subcommand("resample", "importance-aware negative resampling");
  add_common(resample_cmd, resample_args);

  CLI::App* train = app.add_subcommand("train", "weighted final training on the augmented set");
  add_common(train, train_args);

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "top-k evaluation of a saved model");
  add_common(evaluate_cmd, evaluate_args);
  std::string e_model;
  evaluate_cmd->add_option("--model", e_model, "model file inside the run directory");

  CLI::App* pipeline = app.add_subcommand("pipeline", "full procedure end to end");
  add_common(pipeline, pipeline_args);

  CLI::App* stability = app.add_subcommand("stability", "cross-run variance and rank stability");
  add_common(stability, stability_args);
  int s_runs = 5;
  bool s_cv = false, s_nocv = false;
  stability->add_option("--runs", s_runs, "number of independent estimation runs");
  stability->add_flag("--cv", s_cv, "enable control variates");
  stability->add_flag("--no-cv", s_nocv, "disable control variates");

  CLI::App* synth = app.add_subcommand("synth", "write the planted synthetic dataset as csv");
  add_common(synth, synth_args);
  std::string sy_out = "synthetic.csv";
  synth->add_option("--out-file", sy_out, "output csv path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) return cmd_prepare(prepare_args);
    if (*value)
      return cmd_value(value_args, v_cv, v_nocv, v_exact, v_checkpoint, v_resume, v_triplets,
                       v_out_csv);
    if (*tip) return cmd_tip(tip_args);
    if (*resample_cmd) return cmd_resample(resample_args);
    if (*train) return cmd_train(train_args);
    if (*evaluate_cmd) return cmd_evaluate(evaluate_args, e_model);
    if (*pipeline) return cmd_pipeline(pipeline_args);
    if (*stability) return cmd_stability(stability_args, s_runs, s_cv, s_nocv);
    if (*synth) return cmd_synth(synth_args, sy_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
