#include "itipr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "itipr/rng.hpp"

namespace itipr {

const char* metric_name(Metric m) { return m == Metric::ndcg ? "ndcg" : "recall"; }

Metric metric_from_name(const std::string& name) {
  if (name == "ndcg") return Metric::ndcg;
  if (name == "recall") return Metric::recall;
  throw std::invalid_argument("unknown metric: " + name);
}

TopKResult top_k(const ScoringTable& table, int n_items, int u, int k,
                 const std::vector<std::int32_t>& exclude) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<std::pair<double, std::int32_t>> scored;
  scored.reserve(n_items);
  std::size_t ex = 0;
  for (std::int32_t i = 0; i < n_items; ++i) {
    if (ex < exclude.size() && exclude[ex] == i) {
      ++ex;
      continue;
    }
    scored.emplace_back(score(table, u, i), i);
  }
  TopKResult out;
  out.truncated = static_cast<int>(scored.size()) < k;
  const int take = std::min<int>(k, static_cast<int>(scored.size()));
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  out.items.reserve(take);
  for (int r = 0; r < take; ++r) out.items.push_back(scored[r].second);
  return out;
}

TopKResult top_k(const ModelState& m, int u, int k, const std::vector<std::int32_t>& exclude) {
  return top_k(scoring_table(m), m.n_items, u, k, exclude);
}

double recall_at_k(const std::vector<std::int32_t>& recommended,
                   const std::vector<std::int32_t>& test_items_sorted, int k) {
  if (test_items_sorted.empty()) throw std::invalid_argument("recall needs test items");
  const int take = std::min<int>(k, static_cast<int>(recommended.size()));
  int hits = 0;
  for (int r = 0; r < take; ++r)
    if (std::binary_search(test_items_sorted.begin(), test_items_sorted.end(), recommended[r]))
      ++hits;
  const int denom = std::min<int>(k, static_cast<int>(test_items_sorted.size()));
  return static_cast<double>(hits) / denom;
}

double ndcg_at_k(const std::vector<std::int32_t>& recommended,
                 const std::vector<std::int32_t>& test_items_sorted, int k) {
  if (test_items_sorted.empty()) throw std::invalid_argument("ndcg needs test items");
  const int take = std::min<int>(k, static_cast<int>(recommended.size()));
  double dcg = 0.0;
  for (int r = 0; r < take; ++r)
    if (std::binary_search(test_items_sorted.begin(), test_items_sorted.end(), recommended[r]))
      dcg += 1.0 / std::log2(r + 2.0);
  const int ideal = std::min<int>(k, static_cast<int>(test_items_sorted.size()));
  double idcg = 0.0;
  for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(r + 2.0);
  return dcg / idcg;
}

Evaluator::Evaluator(const SplitInteractions& split, Role role, EvalConfig cfg)
    : split_(&split), role_(role), cfg_(cfg) {
  const InteractionSet& part = split.part(role);
  for (std::int32_t u = 0; u < part.n_users(); ++u)
    if (!part.items_of(u).empty()) eval_users_.push_back(u);
  if (eval_users_.empty())
    throw std::runtime_error("no user has items in the requested evaluation role");
  if (cfg_.user_sample > 0 && cfg_.user_sample < static_cast<int>(eval_users_.size())) {
    Rng rng(mix_seed(cfg_.sample_seed, 0xe7a1u));
    rng.shuffle(eval_users_);
    eval_users_.resize(cfg_.user_sample);
    std::sort(eval_users_.begin(), eval_users_.end());
  }
}

double Evaluator::accuracy(const ModelState& m) const {
  const ScoringTable table = scoring_table(m);
  const InteractionSet& part = split_->part(role_);
  double sum = 0.0;
  for (std::int32_t u : eval_users_) {
    TopKResult rec = top_k(table, m.n_items, u, cfg_.k, split_->train.items_of(u));
    const auto& truth = part.items_of(u);
    sum += cfg_.metric == Metric::ndcg ? ndcg_at_k(rec.items, truth, cfg_.k)
                                       : recall_at_k(rec.items, truth, cfg_.k);
  }
  const double acc = sum / static_cast<double>(eval_users_.size());
  if (!std::isfinite(acc)) throw std::runtime_error("non-finite accuracy");
  return acc;
}

EvalReport Evaluator::report(const ModelState& m) const {
  const ScoringTable table = scoring_table(m);
  const InteractionSet& part = split_->part(role_);
  EvalReport rep;
  rep.k = cfg_.k;
  rep.n_users_evaluated = static_cast<int>(eval_users_.size());
  for (std::int32_t u : eval_users_) {
    TopKResult rec = top_k(table, m.n_items, u, cfg_.k, split_->train.items_of(u));
    const auto& truth = part.items_of(u);
    rep.recall += recall_at_k(rec.items, truth, cfg_.k);
    rep.ndcg += ndcg_at_k(rec.items, truth, cfg_.k);
  }
  rep.recall /= rep.n_users_evaluated;
  rep.ndcg /= rep.n_users_evaluated;
  return rep;
}

double accuracy(const ModelState& m, const SplitInteractions& split, Role role,
                const EvalConfig& cfg) {
  return Evaluator(split, role, cfg).accuracy(m);
}

EvalReport evaluate(const ModelState& m, const SplitInteractions& split, Role role, int k) {
  EvalConfig cfg;
  cfg.k = k;
  return Evaluator(split, role, cfg).report(m);
}

std::string EvalReport::to_json() const {
  std::ostringstream out;
  out.precision(17);
  out << "{\"recall_at_k\":" << recall << ",\"ndcg_at_k\":" << ndcg << ",\"k\":" << k
      << ",\"n_users_evaluated\":" << n_users_evaluated << "}";
  return out.str();
}

std::string EvalReport::to_csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << recall << ',' << ndcg << ',' << k << ',' << n_users_evaluated;
  return out.str();
}

}  // namespace itipr
