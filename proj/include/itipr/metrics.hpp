#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itipr/backbone.hpp"
#include "itipr/dataset.hpp"

namespace itipr {

enum class Metric { ndcg, recall };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

struct EvalConfig {
  int k = 20;
  Metric metric = Metric::ndcg;
  int user_sample = 0;  // 0 = evaluate every user with role items
  std::uint64_t sample_seed = 0;
};

struct TopKResult {
  std::vector<std::int32_t> items;  // descending score, ties by ascending index
  bool truncated = false;           // fewer than k candidates existed
};

// The k best-scoring items outside `exclude` (sorted ascending).
TopKResult top_k(const ModelState& m, int u, int k, const std::vector<std::int32_t>& exclude);
TopKResult top_k(const ScoringTable& table, int n_items, int u, int k,
                 const std::vector<std::int32_t>& exclude);

double recall_at_k(const std::vector<std::int32_t>& recommended,
                   const std::vector<std::int32_t>& test_items_sorted, int k);
double ndcg_at_k(const std::vector<std::int32_t>& recommended,
                 const std::vector<std::int32_t>& test_items_sorted, int k);

struct EvalReport {
  double recall = 0.0;
  double ndcg = 0.0;
  int k = 0;
  int n_users_evaluated = 0;

  std::string to_json() const;
  std::string to_csv_row() const;  // one line: recall,ndcg,k,n_users_evaluated
};

// Reusable evaluation harness over a fixed split/role/user sample. accuracy()
// is const and allocation-local, safe to call concurrently on shared state.
class Evaluator {
 public:
  Evaluator(const SplitInteractions& split, Role role, EvalConfig cfg);

  // Mean of cfg.metric@k over the evaluated users; the A(S) functional when
  // the model was trained on triplet subset S.
  double accuracy(const ModelState& m) const;

  EvalReport report(const ModelState& m) const;
  int n_eval_users() const { return static_cast<int>(eval_users_.size()); }

 private:
  const SplitInteractions* split_;
  Role role_;
  EvalConfig cfg_;
  std::vector<std::int32_t> eval_users_;
};

// One-off helpers.
double accuracy(const ModelState& m, const SplitInteractions& split, Role role,
                const EvalConfig& cfg);
EvalReport evaluate(const ModelState& m, const SplitInteractions& split, Role role, int k);

}  // namespace itipr
