#include "itipr/control_variates.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "itipr/parallel.hpp"
#include "itipr/rng.hpp"

namespace itipr {

using nlohmann::json;

struct OmegaContext::Impl {
  const TripletSet* dt;
  const SplitInteractions* split;
  ModelSpec spec;
  McConfig cfg;
  Evaluator eval;
  ModelState theta0;
  // MF fast path: total batch gradient at theta0 (bpr + per-triplet L2) and
  // the per-triplet bpr parts, so the complement gradient is a subtraction.
  GradTables total_grad;
  std::vector<FinalGrad> triplet_grads;

  Impl(const TripletSet& dt_, const SplitInteractions& split_, const ModelSpec& spec_,
       const McConfig& cfg_, std::uint64_t init_seed)
      : dt(&dt_),
        split(&split_),
        spec(spec_),
        cfg(cfg_),
        eval(split_, Role::validation, cfg_.eval),
        theta0(init_model(spec_, split_.train, init_seed)) {
    std::vector<WeightedTriplet> all;
    all.reserve(dt->size());
    for (const Triplet& t : dt->triplets) all.push_back({t, 1.0});
    total_grad = loss_gradient(theta0, all, LossConfig{cfg.learning_rate, cfg.l2_reg});
    if (spec.backbone == Backbone::mf) {
      const ScoringTable tab = scoring_table(theta0);
      triplet_grads.reserve(dt->size());
      for (const Triplet& t : dt->triplets)
        triplet_grads.push_back(final_layer_gradient(theta0, tab, t, 1.0));
    }
  }
};

OmegaContext::OmegaContext(const TripletSet& dt, const SplitInteractions& split,
                           const ModelSpec& spec, const McConfig& cfg,
                           std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>(dt, split, spec, cfg, init_seed)) {
  if (dt.size() < 1) throw std::invalid_argument("omega context on empty triplet set");
}

OmegaContext::~OmegaContext() = default;

OmegaContext::Scratch OmegaContext::make_scratch() const { return Scratch{impl_->theta0}; }

int OmegaContext::n_triplets() const { return static_cast<int>(impl_->dt->size()); }

const ModelState& OmegaContext::theta_empty() const { return impl_->theta0; }

double OmegaContext::marginal(int triplet_index, int position, Scratch& scratch) const {
  const Impl& im = *impl_;
  const int n = static_cast<int>(im.dt->size());
  if (position < 1 || position > n) throw std::out_of_range("omega position out of range");
  const double scale = n >= 2 ? static_cast<double>(position - 1) / (n - 1) : 0.0;
  const double alpha = im.cfg.learning_rate;
  const Triplet& t = im.dt->triplets[triplet_index];

  ModelState& work = scratch.work;
  work.user_emb = im.theta0.user_emb;
  work.item_emb = im.theta0.item_emb;

  if (scale != 0.0) {
    if (im.spec.backbone == Backbone::mf) {
      const double a = alpha * scale;
      for (std::size_t k = 0; k < work.user_emb.size(); ++k)
        work.user_emb[k] -= a * im.total_grad.user[k];
      for (std::size_t k = 0; k < work.item_emb.size(); ++k)
        work.item_emb[k] -= a * im.total_grad.item[k];
      // Give the studied triplet its own contribution back (bpr + L2 rows).
      const FinalGrad& g = im.triplet_grads[triplet_index];
      const int d = im.theta0.dim;
      double* pu = work.user_row(t.user);
      double* qi = work.item_row(t.pos);
      double* qj = work.item_row(t.neg);
      const double* pu0 = im.theta0.user_row(t.user);
      const double* qi0 = im.theta0.item_row(t.pos);
      const double* qj0 = im.theta0.item_row(t.neg);
      const double l2 = im.cfg.l2_reg;
      for (int k = 0; k < d; ++k) {
        pu[k] += a * (g.gu[k] + l2 * pu0[k]);
        qi[k] += a * (g.gi[k] + l2 * qi0[k]);
        qj[k] += a * (g.gj[k] + l2 * qj0[k]);
      }
    } else {
      std::vector<WeightedTriplet> complement;
      complement.reserve(im.dt->size() - 1);
      for (std::size_t idx = 0; idx < im.dt->size(); ++idx)
        if (static_cast<int>(idx) != triplet_index)
          complement.push_back({im.dt->triplets[idx], 1.0});
      const GradTables g = loss_gradient(im.theta0, complement,
                                         LossConfig{im.cfg.learning_rate, im.cfg.l2_reg});
      const double a = alpha * scale;
      for (std::size_t k = 0; k < work.user_emb.size(); ++k) work.user_emb[k] -= a * g.user[k];
      for (std::size_t k = 0; k < work.item_emb.size(); ++k) work.item_emb[k] -= a * g.item[k];
    }
  }

  const double acc_before = im.eval.accuracy(work);
  const WeightedTriplet wt{t, 1.0};
  apply_sgd_step(work, std::span<const WeightedTriplet>(&wt, 1),
                 LossConfig{im.cfg.learning_rate, im.cfg.l2_reg});
  const double acc_after = im.eval.accuracy(work);
  return acc_after - acc_before;
}

std::vector<double> omega_star_scan(const TripletSet& dt, const SplitInteractions& split,
                                    const ModelSpec& spec, const Permutation& perm,
                                    const McConfig& cfg, std::uint64_t init_seed) {
  OmegaContext ctx(dt, split, spec, cfg, init_seed);
  OmegaContext::Scratch scratch = ctx.make_scratch();
  const int n = ctx.n_triplets();
  std::vector<double> marginals(n, 0.0);
  for (int s = 1; s <= n; ++s) marginals[perm[s - 1]] = ctx.marginal(perm[s - 1], s, scratch);
  return marginals;
}

namespace {

std::vector<double> vstar_from_context(const OmegaContext& ctx, const McConfig& cfg,
                                       const CvOptions& opts) {
  const int n = ctx.n_triplets();
  std::vector<double> vstar(n, 0.0);
  if (opts.vstar_position_sample <= 0 || opts.vstar_position_sample >= n) {
    // Rotation family: scan each of the n rotations; every triplet occupies
    // every position exactly once across the family.
    const std::vector<Permutation> rotations = rotation_permutations(n);
    std::vector<std::vector<double>> per_rotation = parallel_map<std::vector<double>>(
        n, cfg.workers, [&](int k) {
          OmegaContext::Scratch scratch = ctx.make_scratch();
          std::vector<double> m(n, 0.0);
          const Permutation& perm = rotations[k];
          for (int s = 1; s <= n; ++s) m[perm[s - 1]] = ctx.marginal(perm[s - 1], s, scratch);
          return m;
        });
    for (const auto& m : per_rotation)
      for (int t = 0; t < n; ++t) vstar[t] += m[t];
    for (double& v : vstar) v /= static_cast<double>(n);
    return vstar;
  }

  // Sampled positions: an unbiased estimate of the position average.
  const int draws = opts.vstar_position_sample;
  std::vector<double> sums = parallel_map<double>(n, cfg.workers, [&](int t) {
    OmegaContext::Scratch scratch = ctx.make_scratch();
    Rng rng(mix_seed(cfg.seed, 0x57a5u, static_cast<std::uint64_t>(t)));
    double sum = 0.0;
    for (int j = 0; j < draws; ++j) {
      const int s = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
      sum += ctx.marginal(t, s, scratch);
    }
    return sum / draws;
  });
  return sums;
}

void write_cv_checkpoint(const std::string& path, int k, const CvStats& stats) {
  json j;
  j["permutations"] = k;
  j["n_triplets"] = stats.main_obs.size();
  j["main_obs"] = stats.main_obs;
  j["cov_obs"] = stats.cov_obs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

int load_cv_checkpoint(const std::string& path, CvStats& stats, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  in >> j;
  if (j.at("n_triplets").get<std::size_t>() != n)
    throw std::runtime_error("checkpoint triplet count mismatch");
  stats.main_obs = j.at("main_obs").get<std::vector<std::vector<double>>>();
  stats.cov_obs = j.at("cov_obs").get<std::vector<std::vector<double>>>();
  return j.at("permutations").get<int>();
}

}  // namespace

std::vector<double> exact_vstar(const TripletSet& dt, const SplitInteractions& split,
                                const ModelSpec& spec, const McConfig& cfg,
                                std::uint64_t init_seed, const CvOptions& opts) {
  OmegaContext ctx(dt, split, spec, cfg, init_seed);
  return vstar_from_context(ctx, cfg, opts);
}

double estimate_c(std::span<const double> main_obs, std::span<const double> cov_obs) {
  if (main_obs.size() != cov_obs.size())
    throw std::invalid_argument("paired observation lists differ in length");
  const std::size_t n = main_obs.size();
  if (n < 2) throw std::invalid_argument("estimate_c needs at least 2 paired observations");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += main_obs[i];
    my += cov_obs[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (main_obs[i] - mx) * (cov_obs[i] - my);
    var += (cov_obs[i] - my) * (cov_obs[i] - my);
  }
  cov /= (n - 1);
  var /= (n - 1);
  // Observations are accuracy deltas in [-1,1]; a variance this small means
  // the covariate is numerically constant and carries no information.
  if (var <= 1e-24) return 0.0;
  return cov / var;
}

std::vector<double> estimate_c(const CvStats& stats) {
  std::vector<double> out(stats.main_obs.size());
  for (std::size_t t = 0; t < out.size(); ++t)
    out[t] = estimate_c(stats.main_obs[t], stats.cov_obs[t]);
  return out;
}

double sample_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cab = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cab += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cab / std::sqrt(va * vb);
}

CvRun estimate_tmc_cv(const TripletSet& dt, const SplitInteractions& split,
                      const ModelSpec& spec, const McConfig& cfg, const CvOptions& opts,
                      double full_acc, const std::string& resume_from) {
  const int n = static_cast<int>(dt.size());
  if (n == 0) throw std::invalid_argument("estimate_tmc_cv on empty triplet set");

  CvRun run;
  // Omega's theta(empty) is one global point shared with V*'s computation;
  // this is what makes the exact V* the true expectation of the covariate
  // observations. When the main scans share one initialization, the
  // covariate anchors at that same point so the pair is maximally coupled.
  run.omega_init_seed = cfg.fresh_init_per_permutation
                            ? mix_seed(cfg.init_stream_seed.value_or(cfg.seed), 0xcf17u)
                            : shared_init_seed(cfg);
  OmegaContext ctx(dt, split, spec, cfg, run.omega_init_seed);
  const std::vector<double> vstar = vstar_from_context(ctx, cfg, opts);

  CvStats stats;
  stats.main_obs.assign(n, {});
  stats.cov_obs.assign(n, {});
  run.plain.estimates.assign(n, {});
  int k = 0;
  if (!resume_from.empty()) {
    k = load_cv_checkpoint(resume_from, stats, n);
    for (int t = 0; t < n; ++t) {
      ShapleyEstimate& e = run.plain.estimates[t];
      e.observations = stats.main_obs[t];
      e.n_samples = k;
      for (double obs : e.observations) e.value += obs;
      if (k > 0) e.value /= k;
    }
  }

  struct PairedScan {
    ScanResult main;
    std::vector<double> cov;
  };

  std::deque<std::vector<double>> history;
  auto snapshot = [&]() {
    std::vector<double> v(n);
    for (int t = 0; t < n; ++t) v[t] = run.plain.estimates[t].value;
    return v;
  };
  history.push_back(snapshot());

  const int chunk_size = std::max(1, cfg.workers) * 2;
  while (k < cfg.max_permutations && !run.plain.converged) {
    const int chunk = std::min(chunk_size, cfg.max_permutations - k);
    std::vector<PairedScan> results = parallel_map<PairedScan>(chunk, cfg.workers, [&](int j) {
      const int draw = k + 1 + j;
      const Permutation perm = sample_permutation(n, cfg.seed, draw);
      PairedScan out;
      out.main = scan_permutation(dt, split, spec, perm, cfg, full_acc,
                                  scan_init_seed(cfg, draw));
      OmegaContext::Scratch scratch = ctx.make_scratch();
      out.cov.assign(n, 0.0);
      for (int s = 1; s <= n; ++s)
        out.cov[perm[s - 1]] = ctx.marginal(perm[s - 1], s, scratch);
      return out;
    });
    for (const PairedScan& r : results) {
      ++k;
      for (int t = 0; t < n; ++t) {
        ShapleyEstimate& e = run.plain.estimates[t];
        e.value += (r.main.marginals[t] - e.value) / k;
        e.n_samples = k;
        if (r.main.truncated[t]) e.truncated_count++;
        e.observations.push_back(r.main.marginals[t]);
        stats.main_obs[t].push_back(r.main.marginals[t]);
        stats.cov_obs[t].push_back(r.cov[t]);
      }
      history.push_back(snapshot());
      if (static_cast<int>(history.size()) > cfg.convergence_window + 1) history.pop_front();
      if (static_cast<int>(history.size()) == cfg.convergence_window + 1) {
        double change = 0.0;
        for (int t = 0; t < n; ++t) change += std::abs(history.back()[t] - history.front()[t]);
        if (change / n < cfg.convergence_delta) {
          run.plain.converged = true;
          break;
        }
      }
      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
          k % cfg.checkpoint_every == 0)
        write_cv_checkpoint(cfg.checkpoint_path, k, stats);
    }
  }
  run.plain.permutations_used = k;
  if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty())
    write_cv_checkpoint(cfg.checkpoint_path, k, stats);

  // c comes from the warmup window only, then stays frozen; the corrected
  // value still uses every observation.
  const int warmup = std::min(opts.warmup, k);
  run.cv.assign(n, {});
  for (int t = 0; t < n; ++t) {
    CvTripletResult& r = run.cv[t];
    r.value_plain = run.plain.estimates[t].value;
    const auto& mo = stats.main_obs[t];
    const auto& co = stats.cov_obs[t];
    r.hat_star = std::accumulate(co.begin(), co.end(), 0.0) / std::max<std::size_t>(1, co.size());
    r.vstar = vstar[t];
    r.c = warmup >= 2 ? estimate_c(std::span<const double>(mo.data(), warmup),
                                   std::span<const double>(co.data(), warmup))
                      : 0.0;
    r.rho = sample_correlation(mo, co);
    r.value_cv = cv_estimate(r.value_plain, r.hat_star, r.vstar, r.c);
  }
  return run;
}

void write_shapley_cv_csv(const TripletSet& dt, const InteractionSet& index_space,
                          const CvRun& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write shapley csv: " + path);
  out.precision(17);
  out << "user,pos_item,neg_item,shapley,n_samples,truncated_count,shapley_cv,c,vstar,rho_hat\n";
  for (std::size_t t = 0; t < dt.size(); ++t) {
    const Triplet& tr = dt.triplets[t];
    const ShapleyEstimate& e = run.plain.estimates[t];
    const CvTripletResult& r = run.cv[t];
    out << index_space.user_id(tr.user) << ',' << index_space.item_id(tr.pos) << ','
        << index_space.item_id(tr.neg) << ',' << e.value << ',' << e.n_samples << ','
        << e.truncated_count << ',' << r.value_cv << ',' << r.c << ',' << r.vstar << ','
        << r.rho << '\n';
  }
}

}  // namespace itipr
