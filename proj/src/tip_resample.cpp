#include "itipr/tip_resample.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "itipr/rng.hpp"

namespace itipr {

TipModel tip_init(int hidden, int dim, std::uint64_t seed) {
  if (hidden < 1 || dim < 1) throw std::invalid_argument("tip dimensions must be >= 1");
  TipModel tm;
  tm.hidden = hidden;
  tm.dim = dim;
  tm.w1.resize(static_cast<std::size_t>(hidden) * 3 * dim);
  tm.b1.assign(hidden, 0.0);
  tm.w2.resize(hidden);
  tm.b2 = 0.0;
  Rng rng(mix_seed(seed, 0x71bu));
  const double cap1 = std::sqrt(6.0 / (3.0 * dim));
  const double cap2 = std::sqrt(6.0 / hidden);
  for (double& v : tm.w1) v = rng.uniform(-cap1, cap1);
  for (double& v : tm.w2) v = rng.uniform(-cap2, cap2);
  return tm;
}

double tip_forward_features(const TipModel& tm, const double* x) {
  const int in = 3 * tm.dim;
  double z2 = tm.b2;
  for (int h = 0; h < tm.hidden; ++h) {
    double z1 = tm.b1[h];
    const double* row = tm.w1.data() + static_cast<std::size_t>(h) * in;
    for (int k = 0; k < in; ++k) z1 += row[k] * x[k];
    if (z1 > 0.0) z2 += tm.w2[h] * z1;
  }
  return std::tanh(z2);
}

double tip_forward(const TipModel& tm, const double* pu, const double* qi, const double* qj) {
  std::vector<double> x(3 * tm.dim);
  std::memcpy(x.data(), pu, sizeof(double) * tm.dim);
  std::memcpy(x.data() + tm.dim, qi, sizeof(double) * tm.dim);
  std::memcpy(x.data() + 2 * tm.dim, qj, sizeof(double) * tm.dim);
  return tip_forward_features(tm, x.data());
}

double TipScaler::to_unit(double v) const {
  const double y = (v - center) / scale;
  return std::clamp(y, -0.999, 0.999);
}

TipScaler TipScaler::fit(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("cannot fit scaler to empty targets");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double pos = p * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - lo;
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  TipScaler s;
  s.center = quantile(0.5);
  s.scale = 3.0 * (quantile(0.75) - quantile(0.25));
  if (s.scale <= 0.0) {
    double spread = 0.0;
    for (double v : sorted) spread = std::max(spread, std::abs(v - s.center));
    s.scale = spread > 0.0 ? spread : 1.0;
  }
  return s;
}

double tip_mse_and_grad(const TipModel& tm, const std::vector<double>& features,
                        const std::vector<double>& targets, const std::vector<int>& rows,
                        TipGrad* grad) {
  const int in = 3 * tm.dim;
  const int batch = static_cast<int>(rows.size());
  if (batch == 0) throw std::invalid_argument("empty tip batch");
  if (grad) {
    grad->w1.assign(tm.w1.size(), 0.0);
    grad->b1.assign(tm.b1.size(), 0.0);
    grad->w2.assign(tm.w2.size(), 0.0);
    grad->b2 = 0.0;
  }
  std::vector<double> z1(tm.hidden);
  double mse = 0.0;
  for (int r : rows) {
    const double* x = features.data() + static_cast<std::size_t>(r) * in;
    double z2 = tm.b2;
    for (int h = 0; h < tm.hidden; ++h) {
      double z = tm.b1[h];
      const double* row = tm.w1.data() + static_cast<std::size_t>(h) * in;
      for (int k = 0; k < in; ++k) z += row[k] * x[k];
      z1[h] = z;
      if (z > 0.0) z2 += tm.w2[h] * z;
    }
    const double out = std::tanh(z2);
    const double err = out - targets[r];
    mse += err * err;
    if (!grad) continue;
    const double dz2 = 2.0 * err / batch * (1.0 - out * out);
    grad->b2 += dz2;
    for (int h = 0; h < tm.hidden; ++h) {
      if (z1[h] <= 0.0) continue;
      grad->w2[h] += dz2 * z1[h];
      const double dz1 = dz2 * tm.w2[h];
      grad->b1[h] += dz1;
      double* grow = grad->w1.data() + static_cast<std::size_t>(h) * in;
      for (int k = 0; k < in; ++k) grow[k] += dz1 * x[k];
    }
  }
  mse /= batch;
  if (!std::isfinite(mse)) throw std::runtime_error("non-finite TIP training loss");
  return mse;
}

namespace {

std::vector<double> triplet_features(const TripletSet& dt, const ScoringTable& table, int dim) {
  std::vector<double> out(dt.size() * 3 * static_cast<std::size_t>(dim));
  for (std::size_t t = 0; t < dt.size(); ++t) {
    double* x = out.data() + t * 3 * dim;
    const Triplet& tr = dt.triplets[t];
    std::memcpy(x, table.user(tr.user), sizeof(double) * dim);
    std::memcpy(x + dim, table.item(tr.pos), sizeof(double) * dim);
    std::memcpy(x + 2 * dim, table.item(tr.neg), sizeof(double) * dim);
  }
  return out;
}

}  // namespace

TipTrainResult tip_train(const std::vector<double>& targets, const TripletSet& dt,
                         const ModelState& embeddings, const ResampleConfig& cfg) {
  if (targets.empty() || targets.size() != dt.size())
    throw std::invalid_argument("tip targets must match the triplet set");

  TipTrainResult result;
  result.scaler = TipScaler::fit(targets);
  std::vector<double> y(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) y[t] = result.scaler.to_unit(targets[t]);

  const ScoringTable table = scoring_table(embeddings);
  std::vector<double> features = triplet_features(dt, table, embeddings.dim);

  // Standardize feature columns for training; the affine map is folded back
  // into W1/b1 afterwards, so the returned model scores raw embeddings.
  const int in = 3 * embeddings.dim;
  std::vector<double> mean(in, 0.0), sdev(in, 0.0);
  const std::size_t rows_total = dt.size();
  for (std::size_t r = 0; r < rows_total; ++r)
    for (int k = 0; k < in; ++k) mean[k] += features[r * in + k];
  for (int k = 0; k < in; ++k) mean[k] /= static_cast<double>(rows_total);
  for (std::size_t r = 0; r < rows_total; ++r)
    for (int k = 0; k < in; ++k) {
      const double d = features[r * in + k] - mean[k];
      sdev[k] += d * d;
    }
  for (int k = 0; k < in; ++k)
    sdev[k] = std::max(1e-8, std::sqrt(sdev[k] / static_cast<double>(rows_total)));
  std::vector<double> raw_features = features;
  for (std::size_t r = 0; r < rows_total; ++r)
    for (int k = 0; k < in; ++k) features[r * in + k] = (features[r * in + k] - mean[k]) / sdev[k];

  result.model = tip_init(cfg.tip_hidden, embeddings.dim, cfg.seed);
  const int n = static_cast<int>(dt.size());
  const int batch = std::max(1, std::min(cfg.tip_batch, n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> rows;
  TipGrad grad;
  for (int epoch = 1; epoch <= cfg.tip_epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 0x71eu, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch) {
      rows.assign(order.begin() + start, order.begin() + std::min(n, start + batch));
      tip_mse_and_grad(result.model, features, y, rows, &grad);
      TipModel& tm = result.model;
      for (std::size_t k = 0; k < tm.w1.size(); ++k) tm.w1[k] -= cfg.tip_lr * grad.w1[k];
      for (std::size_t k = 0; k < tm.b1.size(); ++k) tm.b1[k] -= cfg.tip_lr * grad.b1[k];
      for (std::size_t k = 0; k < tm.w2.size(); ++k) tm.w2[k] -= cfg.tip_lr * grad.w2[k];
      tm.b2 -= cfg.tip_lr * grad.b2;
    }
  }
  // Fold the standardization into the first layer.
  {
    TipModel& tm = result.model;
    for (int h = 0; h < tm.hidden; ++h) {
      double shift = 0.0;
      double* row = tm.w1.data() + static_cast<std::size_t>(h) * in;
      for (int k = 0; k < in; ++k) {
        shift += row[k] * mean[k] / sdev[k];
        row[k] /= sdev[k];
      }
      tm.b1[h] -= shift;
    }
  }
  rows.resize(n);
  std::iota(rows.begin(), rows.end(), 0);
  result.final_mse = tip_mse_and_grad(result.model, raw_features, y, rows, nullptr);
  return result;
}

std::vector<double> resample_probabilities(const TipModel& tm, const ModelState& m, int u,
                                           int i, const std::vector<std::int32_t>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("empty candidate pool");
  const ScoringTable table = scoring_table(m);
  std::vector<double> scores(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c)
    scores[c] = tip_forward(tm, table.user(u), table.item(i), table.item(candidates[c]));
  const double peak = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double& s : scores) {
    s = std::exp(s - peak);
    total += s;
  }
  for (double& s : scores) s /= total;
  return scores;
}

ResampleResult resample(const TripletSet& dt, const TipModel& tm, const ModelState& m,
                        const InteractionSet& train, const ResampleConfig& cfg) {
  if (cfg.candidate_pool_size < std::max(1, cfg.new_triplets_per_positive))
    throw std::invalid_argument("candidate pool smaller than the number of draws");

  ResampleResult result;
  result.augmented = dt;
  if (cfg.new_triplets_per_positive <= 0) return result;

  const ScoringTable table = scoring_table(m);

  // Distinct (u,i) pairs in first-appearance order, with the negatives each
  // pair already uses.
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  std::map<std::pair<std::int32_t, std::int32_t>, std::set<std::int32_t>> used;
  for (const Triplet& t : dt.triplets) {
    auto key = std::make_pair(t.user, t.pos);
    auto [it, inserted] = used.try_emplace(key);
    if (inserted) pairs.push_back(key);
    it->second.insert(t.neg);
  }

  std::vector<std::int32_t> eligible, pool;
  std::vector<double> probs;
  for (const auto& [u, i] : pairs) {
    eligible.clear();
    const auto& taken = used[{u, i}];
    for (std::int32_t j = 0; j < train.n_items(); ++j)
      if (!train.has(u, j) && !taken.count(j)) eligible.push_back(j);
    if (eligible.empty()) {
      result.pairs_skipped++;
      continue;
    }
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(i)));
    if (static_cast<int>(eligible.size()) > cfg.candidate_pool_size) {
      // Partial Fisher-Yates: the first pool_size slots become the pool.
      for (int k = 0; k < cfg.candidate_pool_size; ++k) {
        const std::size_t j = k + rng.next_below(eligible.size() - k);
        std::swap(eligible[k], eligible[j]);
      }
      pool.assign(eligible.begin(), eligible.begin() + cfg.candidate_pool_size);
    } else {
      pool = eligible;
    }

    probs.resize(pool.size());
    double total = 0.0;
    {
      double peak = -2.0;
      for (std::size_t c = 0; c < pool.size(); ++c) {
        probs[c] = tip_forward(tm, table.user(u), table.item(i), table.item(pool[c]));
        peak = std::max(peak, probs[c]);
      }
      for (double& s : probs) {
        s = std::exp(s - peak);
        total += s;
      }
    }

    const int draws = std::min<int>(cfg.new_triplets_per_positive, static_cast<int>(pool.size()));
    for (int d = 0; d < draws; ++d) {
      double r = rng.next_double() * total;
      std::size_t picked = pool.size();
      for (std::size_t c = 0; c < pool.size(); ++c) {
        if (probs[c] == 0.0) continue;
        picked = c;  // falls through to the last nonzero slot on round-off
        if (r < probs[c]) break;
        r -= probs[c];
      }
      result.augmented.triplets.push_back({u, i, pool[picked]});
      result.augmented.origins.push_back(TripletOrigin::resampled);
      total -= probs[picked];
      probs[picked] = 0.0;  // without replacement
    }
  }
  return result;
}

void write_tip(const TipModel& tm, const TipScaler& scaler, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tip model: " + path);
  out.precision(17);
  out << tm.hidden << ' ' << tm.dim << ' ' << scaler.center << ' ' << scaler.scale << '\n';
  for (double v : tm.w1) out << v << '\n';
  for (double v : tm.b1) out << v << '\n';
  for (double v : tm.w2) out << v << '\n';
  out << tm.b2 << '\n';
}

void read_tip(const std::string& path, TipModel& tm, TipScaler& scaler) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tip model: " + path);
  in >> tm.hidden >> tm.dim >> scaler.center >> scaler.scale;
  if (!in || tm.hidden < 1 || tm.dim < 1) throw std::runtime_error("bad tip header: " + path);
  tm.w1.resize(static_cast<std::size_t>(tm.hidden) * 3 * tm.dim);
  tm.b1.resize(tm.hidden);
  tm.w2.resize(tm.hidden);
  for (double& v : tm.w1) in >> v;
  for (double& v : tm.b1) in >> v;
  for (double& v : tm.w2) in >> v;
  in >> tm.b2;
  if (!in) throw std::runtime_error("truncated tip model: " + path);
}

}  // namespace itipr
