#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "itipr/metrics.hpp"
#include "itipr/rng.hpp"

using namespace itipr;

TEST_SUITE("metrics") {

TEST_CASE("top_k sorts by score with index tie-break") {
  InteractionSet train = testutil::make_interactions(1, 3, {{0, 0}});
  ModelSpec spec;
  spec.dim = 1;
  ModelState m = init_model(spec, train, 1);
  m.user_row(0)[0] = 1.0;
  m.item_row(0)[0] = 2.0;
  m.item_row(1)[0] = 1.0;
  m.item_row(2)[0] = 3.0;
  TopKResult r = top_k(m, 0, 2, {});
  CHECK(r.items == std::vector<std::int32_t>{2, 0});
  CHECK(!r.truncated);

  // tie between items 0 and 1 -> lower index first
  m.item_row(1)[0] = 2.0;
  TopKResult tie = top_k(m, 0, 3, {});
  CHECK(tie.items == std::vector<std::int32_t>{2, 0, 1});
}

TEST_CASE("top_k flags truncation when everything is excluded") {
  InteractionSet train = testutil::make_interactions(1, 3, {{0, 0}});
  ModelSpec spec;
  spec.dim = 1;
  ModelState m = init_model(spec, train, 2);
  TopKResult r = top_k(m, 0, 2, {0, 1, 2});
  CHECK(r.items.empty());
  CHECK(r.truncated);
}

TEST_CASE("recall edge values") {
  CHECK(recall_at_k({1, 2, 3}, {1, 2, 3}, 3) == doctest::Approx(1.0));
  CHECK(recall_at_k({4, 5, 6}, {1, 2}, 3) == doctest::Approx(0.0));
  // 2 test items, 1 hit, k = 20 -> denominator min(20, 2)
  CHECK(recall_at_k({1, 9, 8, 7}, {1, 2}, 20) == doctest::Approx(0.5));
}

TEST_CASE("ndcg hand cases") {
  CHECK(ndcg_at_k({5, 1, 2}, {5}, 3) == doctest::Approx(1.0));
  CHECK(ndcg_at_k({9, 5, 2}, {5}, 3) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k({9, 8, 7}, {5}, 3) == doctest::Approx(0.0));
}

TEST_CASE("ndcg is 1 exactly when all hits pack the top") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.next_below(6));
    std::vector<std::int32_t> rec;
    std::set<std::int32_t> seen;
    while (rec.size() < 8) {
      auto v = static_cast<std::int32_t>(rng.next_below(30));
      if (seen.insert(v).second) rec.push_back(v);
    }
    std::vector<std::int32_t> test_sorted;
    const int n_test = 1 + static_cast<int>(rng.next_below(5));
    for (int j = 0; j < n_test && j < static_cast<int>(rec.size()); ++j)
      test_sorted.push_back(rec[j]);
    std::sort(test_sorted.begin(), test_sorted.end());
    // hits occupy ranks 1..min(k,|test|) exactly
    const double v = ndcg_at_k(rec, test_sorted, k);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("metrics agree with the brute-force reference on random cases") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.next_below(10));
    std::vector<std::int32_t> rec;
    std::set<std::int32_t> pool;
    const int len = 1 + static_cast<int>(rng.next_below(12));
    while (static_cast<int>(rec.size()) < len) {
      auto v = static_cast<std::int32_t>(rng.next_below(40));
      if (pool.insert(v).second) rec.push_back(v);
    }
    std::set<std::int32_t> test;
    const int n_test = 1 + static_cast<int>(rng.next_below(6));
    while (static_cast<int>(test.size()) < n_test)
      test.insert(static_cast<std::int32_t>(rng.next_below(40)));
    std::vector<std::int32_t> test_sorted(test.begin(), test.end());

    CHECK(recall_at_k(rec, test_sorted, k) == doctest::Approx(testutil::ref_recall(rec, test, k)).epsilon(1e-15));
    CHECK(ndcg_at_k(rec, test_sorted, k) == doctest::Approx(testutil::ref_ndcg(rec, test, k)).epsilon(1e-12));
  }
}

TEST_CASE("metrics stay in the unit interval") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.next_below(8));
    std::vector<std::int32_t> rec;
    std::set<std::int32_t> seen;
    const int len = static_cast<int>(rng.next_below(10));
    while (static_cast<int>(rec.size()) < len) {
      auto v = static_cast<std::int32_t>(rng.next_below(25));
      if (seen.insert(v).second) rec.push_back(v);
    }
    std::vector<std::int32_t> test;
    const int n_test = 1 + static_cast<int>(rng.next_below(6));
    std::set<std::int32_t> t;
    while (static_cast<int>(t.size()) < n_test) t.insert(static_cast<std::int32_t>(rng.next_below(25)));
    test.assign(t.begin(), t.end());
    const double r = recall_at_k(rec, test, k);
    const double n = ndcg_at_k(rec, test, k);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(n >= 0.0);
    CHECK(n <= 1.0);
  }
}

TEST_CASE("accuracy strictly improves with training on a learnable set") {
  // 50 users in two taste groups over 20 items.
  std::vector<std::tuple<int, int, char>> tagged;
  Rng rng(13);
  for (int u = 0; u < 50; ++u) {
    const int base = (u % 2) * 10;
    std::set<int> items;
    while (items.size() < 6) items.insert(base + static_cast<int>(rng.next_below(10)));
    int c = 0;
    for (int i : items) tagged.emplace_back(u, i, c++ < 4 ? 't' : (c == 5 ? 'v' : 's'));
  }
  SplitInteractions split = testutil::make_split(50, 20, tagged);
  TripletSet dt = sample_triplets(split.train, 1, 3);
  ModelSpec spec;
  spec.dim = 8;

  EvalConfig eval_cfg;
  eval_cfg.k = 5;
  ModelState random_model = init_model(spec, split.train, 99);
  const double random_acc = accuracy(random_model, split, Role::validation, eval_cfg);

  TrainConfig tc;
  tc.learning_rate = 0.1;
  tc.max_epochs = 60;
  tc.patience = 60;
  tc.seed = 99;
  TrainedModel trained = train_to_convergence(dt, {}, split, spec, tc, eval_cfg);
  CHECK(trained.validation_accuracy > random_acc);

  // a model and its copy evaluate identically
  ModelState copy = trained.model;
  CHECK(accuracy(copy, split, Role::validation, eval_cfg) ==
        doctest::Approx(trained.validation_accuracy).epsilon(1e-15));
}

TEST_CASE("accuracy is invariant to consistent item relabeling") {
  std::vector<std::tuple<int, int, char>> tagged = {
      {0, 0, 't'}, {0, 1, 'v'}, {1, 2, 't'}, {1, 3, 'v'}, {2, 1, 't'}, {2, 4, 'v'}};
  SplitInteractions split = testutil::make_split(3, 5, tagged);
  ModelSpec spec;
  spec.dim = 3;
  ModelState m = init_model(spec, split.train, 17);
  EvalConfig cfg;
  cfg.k = 2;
  const double before = accuracy(m, split, Role::validation, cfg);

  // reverse item indices everywhere
  auto relabel = [&](int i) { return 4 - i; };
  std::vector<std::tuple<int, int, char>> relabeled;
  for (auto [u, i, tag] : tagged) relabeled.emplace_back(u, relabel(i), tag);
  SplitInteractions split2 = testutil::make_split(3, 5, relabeled);
  ModelState m2 = m;
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 3; ++k) m2.item_row(relabel(i))[k] = m.item_row(i)[k];
  CHECK(accuracy(m2, split2, Role::validation, cfg) == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("accuracy requires evaluable users") {
  SplitInteractions split = testutil::make_split(2, 3, {{0, 0, 't'}, {1, 1, 't'}});
  ModelSpec spec;
  spec.dim = 2;
  ModelState m = init_model(spec, split.train, 1);
  EvalConfig cfg;
  CHECK_THROWS_AS(accuracy(m, split, Role::validation, cfg), std::runtime_error);
}

TEST_CASE("eval report serializes") {
  EvalReport rep;
  rep.recall = 0.5;
  rep.ndcg = 0.25;
  rep.k = 20;
  rep.n_users_evaluated = 7;
  CHECK(rep.to_json().find("\"k\":20") != std::string::npos);
  CHECK(rep.to_csv_row() == "0.5,0.25,20,7");
}

}  // TEST_SUITE
