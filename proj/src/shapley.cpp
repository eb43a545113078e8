#include "itipr/shapley.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "itipr/parallel.hpp"
#include "itipr/rng.hpp"

namespace itipr {

namespace {

using nlohmann::json;

ScanResult run_scan(const TripletSet& dt, const SplitInteractions& split,
                    const ModelSpec& spec, const Evaluator& eval, const Permutation& perm,
                    double tolerance, double learning_rate, double l2_reg, double full_acc,
                    std::uint64_t init_seed) {
  const int n = static_cast<int>(dt.size());
  if (static_cast<int>(perm.size()) != n)
    throw std::invalid_argument("permutation size does not match triplet set");

  ScanResult r;
  r.marginals.assign(n, 0.0);
  r.truncated.assign(n, 0);

  ModelState m = init_model(spec, split.train, init_seed);
  double a_prev = eval.accuracy(m);
  r.initial_acc = a_prev;
  const LossConfig step_cfg{learning_rate, l2_reg};

  for (int s = 1; s <= n; ++s) {
    const int t_idx = perm[s - 1];
    if (std::abs(full_acc - a_prev) < tolerance) {
      // Saturated: this position and every later one keep a_s = a_{s-1},
      // i.e. marginal 0.
      for (int rest = s; rest <= n; ++rest) r.truncated[perm[rest - 1]] = 1;
      break;
    }
    const WeightedTriplet wt{dt.triplets[t_idx], 1.0};
    apply_sgd_step(m, std::span<const WeightedTriplet>(&wt, 1), step_cfg);
    const double a_s = eval.accuracy(m);
    if (!std::isfinite(a_s)) throw std::runtime_error("non-finite accuracy during scan");
    r.marginals[t_idx] = a_s - a_prev;
    a_prev = a_s;
    r.steps_taken++;
  }
  r.final_acc = a_prev;
  return r;
}

void write_checkpoint(const std::string& path, int k,
                      const std::vector<ShapleyEstimate>& est, bool with_observations) {
  json j;
  j["permutations"] = k;
  j["n_triplets"] = est.size();
  json values = json::array(), truncated = json::array();
  for (const auto& e : est) {
    values.push_back(e.value);
    truncated.push_back(e.truncated_count);
  }
  j["values"] = values;
  j["truncated_counts"] = truncated;
  if (with_observations) {
    json obs = json::array();
    for (const auto& e : est) obs.push_back(e.observations);
    j["observations"] = obs;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

int load_checkpoint(const std::string& path, std::vector<ShapleyEstimate>& est,
                    bool need_observations) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  in >> j;
  const int k = j.at("permutations").get<int>();
  const std::size_t n = j.at("n_triplets").get<std::size_t>();
  if (n != est.size()) throw std::runtime_error("checkpoint triplet count mismatch");
  for (std::size_t t = 0; t < n; ++t) {
    est[t].value = j.at("values")[t].get<double>();
    est[t].truncated_count = j.at("truncated_counts")[t].get<int>();
    est[t].n_samples = k;
  }
  if (need_observations) {
    if (!j.contains("observations"))
      throw std::runtime_error("checkpoint has no observation log; cannot resume");
    for (std::size_t t = 0; t < n; ++t)
      est[t].observations = j.at("observations")[t].get<std::vector<double>>();
  }
  return k;
}

}  // namespace

std::uint64_t shared_init_seed(const McConfig& cfg) {
  return mix_seed(cfg.init_stream_seed.value_or(cfg.seed), 0xe8ac7u);
}

std::uint64_t scan_init_seed(const McConfig& cfg, int draw_index) {
  return cfg.fresh_init_per_permutation
             ? mix_seed(cfg.init_stream_seed.value_or(cfg.seed), 0xf9e5u,
                        static_cast<std::uint64_t>(draw_index))
             : shared_init_seed(cfg);
}

ScanResult scan_permutation(const TripletSet& dt, const SplitInteractions& split,
                            const ModelSpec& spec, const Permutation& perm,
                            const McConfig& cfg, double full_acc, std::uint64_t init_seed) {
  Evaluator eval(split, Role::validation, cfg.eval);
  return run_scan(dt, split, spec, eval, perm, cfg.effective_tolerance(full_acc),
                  cfg.learning_rate, cfg.l2_reg, full_acc, init_seed);
}

ShapleyRun estimate_tmc(const TripletSet& dt, const SplitInteractions& split,
                        const ModelSpec& spec, const McConfig& cfg, double full_acc,
                        bool keep_observations, const std::string& resume_from) {
  const int n = static_cast<int>(dt.size());
  if (n == 0) throw std::invalid_argument("estimate_tmc on empty triplet set");

  Evaluator eval(split, Role::validation, cfg.eval);
  const double tol = cfg.effective_tolerance(full_acc);

  ShapleyRun run;
  run.estimates.assign(n, {});
  int k = 0;
  if (!resume_from.empty()) k = load_checkpoint(resume_from, run.estimates, keep_observations);

  // Value-vector history for the convergence criterion.
  std::deque<std::vector<double>> history;
  auto snapshot = [&]() {
    std::vector<double> v(n);
    for (int t = 0; t < n; ++t) v[t] = run.estimates[t].value;
    return v;
  };
  history.push_back(snapshot());

  const int chunk_size = std::max(1, cfg.workers) * 2;
  while (k < cfg.max_permutations && !run.converged) {
    const int chunk = std::min(chunk_size, cfg.max_permutations - k);
    std::vector<ScanResult> results =
        parallel_map<ScanResult>(chunk, cfg.workers, [&](int j) {
          const int draw = k + 1 + j;
          const Permutation perm = sample_permutation(n, cfg.seed, draw);
          return run_scan(dt, split, spec, eval, perm, tol, cfg.learning_rate, cfg.l2_reg,
                          full_acc, scan_init_seed(cfg, draw));
        });
    // Fold strictly in draw order so the running means, and therefore the
    // stopping decision, never depend on the worker count.
    for (const ScanResult& r : results) {
      ++k;
      for (int t = 0; t < n; ++t) {
        ShapleyEstimate& e = run.estimates[t];
        e.value += (r.marginals[t] - e.value) / k;
        e.n_samples = k;
        if (r.truncated[t]) e.truncated_count++;
        if (keep_observations) e.observations.push_back(r.marginals[t]);
      }
      history.push_back(snapshot());
      if (static_cast<int>(history.size()) > cfg.convergence_window + 1) history.pop_front();
      if (static_cast<int>(history.size()) == cfg.convergence_window + 1) {
        double change = 0.0;
        for (int t = 0; t < n; ++t) change += std::abs(history.back()[t] - history.front()[t]);
        if (change / n < cfg.convergence_delta) {
          run.converged = true;
          break;
        }
      }
      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
          k % cfg.checkpoint_every == 0)
        write_checkpoint(cfg.checkpoint_path, k, run.estimates, keep_observations);
    }
  }
  run.permutations_used = k;
  if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty())
    write_checkpoint(cfg.checkpoint_path, k, run.estimates, keep_observations);
  return run;
}

std::vector<double> exact_shapley(const TripletSet& dt, const SplitInteractions& split,
                                  const ModelSpec& spec, const McConfig& cfg) {
  const int n = static_cast<int>(dt.size());
  if (n < 1) throw std::invalid_argument("exact_shapley on empty triplet set");
  if (n > 8)
    throw std::invalid_argument("exact_shapley refused: " + std::to_string(n) +
                                "! permutations is beyond the factorial guard (max 8)");

  std::vector<Permutation> perms;
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  do {
    perms.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));

  Evaluator eval(split, Role::validation, cfg.eval);
  const std::uint64_t init_seed = shared_init_seed(cfg);
  std::vector<ScanResult> results = parallel_map<ScanResult>(
      static_cast<int>(perms.size()), cfg.workers, [&](int idx) {
        return run_scan(dt, split, spec, eval, perms[idx], 0.0, cfg.learning_rate,
                        cfg.l2_reg, 0.0, init_seed);
      });

  std::vector<double> values(n, 0.0);
  for (const ScanResult& r : results)
    for (int t = 0; t < n; ++t) values[t] += r.marginals[t];
  for (double& v : values) v /= static_cast<double>(perms.size());
  return values;
}

TrainedModel train_to_convergence(const TripletSet& dt, const std::vector<double>& weights,
                                  const SplitInteractions& split, const ModelSpec& spec,
                                  const TrainConfig& cfg, const EvalConfig& eval_cfg) {
  const int n = static_cast<int>(dt.size());
  if (n == 0) throw std::invalid_argument("cannot train on empty triplet set");
  if (!weights.empty() && static_cast<int>(weights.size()) != n)
    throw std::invalid_argument("weight vector size does not match triplet set");

  Evaluator eval(split, Role::validation, eval_cfg);
  ModelState m = init_model(spec, split.train, cfg.seed);
  TrainedModel best{m, eval.accuracy(m), 0};

  const LossConfig step_cfg{cfg.learning_rate, cfg.l2_reg};
  const int batch = std::max(1, cfg.batch_size);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<WeightedTriplet> wts;
  wts.reserve(batch);

  int since_improved = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 0xe90cu, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch) {
      wts.clear();
      for (int b = start; b < std::min(n, start + batch); ++b)
        wts.push_back({dt.triplets[order[b]], weights.empty() ? 1.0 : weights[order[b]]});
      apply_sgd_step(m, wts, step_cfg);
    }
    const double acc = eval.accuracy(m);
    if (acc > best.validation_accuracy) {
      best.model = m;
      best.validation_accuracy = acc;
      since_improved = 0;
    } else {
      since_improved++;
    }
    best.epochs_run = epoch;
    if (since_improved >= cfg.patience) break;
  }
  return best;
}

void write_shapley_csv(const TripletSet& dt, const InteractionSet& index_space,
                       const ShapleyRun& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write shapley csv: " + path);
  out.precision(17);
  out << "user,pos_item,neg_item,shapley,n_samples,truncated_count\n";
  for (std::size_t t = 0; t < dt.size(); ++t) {
    const Triplet& tr = dt.triplets[t];
    const ShapleyEstimate& e = run.estimates[t];
    out << index_space.user_id(tr.user) << ',' << index_space.item_id(tr.pos) << ','
        << index_space.item_id(tr.neg) << ',' << e.value << ',' << e.n_samples << ','
        << e.truncated_count << '\n';
  }
}

}  // namespace itipr
