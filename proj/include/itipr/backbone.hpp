#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "itipr/dataset.hpp"
#include "itipr/triplets.hpp"

namespace itipr {

enum class Backbone { mf, lightgcn };

const char* backbone_name(Backbone b);
Backbone backbone_from_name(const std::string& name);

// User-item adjacency with both directions, built from train interactions only.
struct BipartiteGraph {
  std::vector<std::vector<std::int32_t>> user_items;
  std::vector<std::vector<std::int32_t>> item_users;

  static BipartiteGraph from_train(const InteractionSet& train);
  bool empty() const { return user_items.empty(); }
};

struct ModelSpec {
  Backbone backbone = Backbone::mf;
  int dim = 16;
  int lightgcn_layers = 2;  // L; ignored for MF
};

// Embedding state. A plain value: copy to fork, assign to restore.
struct ModelState {
  Backbone backbone = Backbone::mf;
  int n_users = 0;
  int n_items = 0;
  int dim = 0;
  int lightgcn_layers = 0;
  std::vector<double> user_emb;  // n_users x dim, row-major
  std::vector<double> item_emb;  // n_items x dim
  BipartiteGraph graph;          // LightGCN only

  double* user_row(int u) { return user_emb.data() + static_cast<std::size_t>(u) * dim; }
  double* item_row(int i) { return item_emb.data() + static_cast<std::size_t>(i) * dim; }
  const double* user_row(int u) const {
    return user_emb.data() + static_cast<std::size_t>(u) * dim;
  }
  const double* item_row(int i) const {
    return item_emb.data() + static_cast<std::size_t>(i) * dim;
  }
};

struct LossConfig {
  double learning_rate = 0.05;
  double l2_reg = 1e-4;
};

// Entries are drawn uniform on [-cap, cap] with cap = sqrt(3) * 0.1 / sqrt(d),
// i.e. zero mean and standard deviation 0.1/sqrt(d).
double init_cap(int dim);
ModelState init_model(const ModelSpec& spec, const InteractionSet& train, std::uint64_t seed);

// Final embeddings used for prediction. MF borrows the state's tables;
// LightGCN materializes the layer-averaged propagated tables.
class ScoringTable {
 public:
  int dim() const { return dim_; }
  const double* user(int u) const { return users_ + static_cast<std::size_t>(u) * dim_; }
  const double* item(int i) const { return items_ + static_cast<std::size_t>(i) * dim_; }

  static ScoringTable borrow(const ModelState& m);
  static ScoringTable own(std::vector<double> users, std::vector<double> items, int dim);

 private:
  std::vector<double> user_storage_, item_storage_;
  const double* users_ = nullptr;
  const double* items_ = nullptr;
  int dim_ = 0;
};

ScoringTable scoring_table(const ModelState& m);

// Single prediction. For LightGCN this propagates the whole graph; batch
// callers should build one ScoringTable instead.
double score(const ModelState& m, int u, int i);
double score(const ScoringTable& t, int u, int i);

// -ln sigmoid(y_ui - y_uj), evaluated as softplus(-(y_ui - y_uj)).
double bpr_loss(const ModelState& m, const Triplet& t);
double weighted_bpr_loss(const ModelState& m, const Triplet& t, double w);
double softplus(double x);
double sigmoid(double x);

struct WeightedTriplet {
  Triplet t;
  double weight = 1.0;
};

// Dense gradient tables over all base embeddings.
struct GradTables {
  std::vector<double> user;
  std::vector<double> item;

  static GradTables zeros(const ModelState& m);
  void axpy(double a, const GradTables& g);
};

// Loss of the batch at the current state: sum of w*bpr plus, per triplet,
// (l2/2) * (|p_u|^2 + |q_i|^2 + |q_j|^2) on its base rows.
double batch_loss(const ModelState& m, std::span<const WeightedTriplet> batch,
                  const LossConfig& cfg);

// Analytic gradient of batch_loss w.r.t. the base embeddings.
GradTables loss_gradient(const ModelState& m, std::span<const WeightedTriplet> batch,
                         const LossConfig& cfg);

// One gradient step on batch_loss, evaluated at the incoming state.
void apply_sgd_step(ModelState& m, std::span<const WeightedTriplet> batch,
                    const LossConfig& cfg);
ModelState sgd_step(const ModelState& m, std::span<const WeightedTriplet> batch,
                    const LossConfig& cfg);

// Gradient of w*bpr w.r.t. the three final-layer rows of t (no L2 term).
struct FinalGrad {
  std::vector<double> gu, gi, gj;  // each of length dim
};
FinalGrad final_layer_gradient(const ModelState& m, const ScoringTable& table,
                               const Triplet& t, double w);

// Pulls a gradient at the final (propagated) embeddings back to the base
// embeddings. Identity for MF; for LightGCN applies the layer-averaged
// propagation operator, which is its own transpose.
GradTables backprop_to_base(const ModelState& m, const GradTables& final_grad);

// Flat text format: header "n_users n_items dim backbone layers", then one
// embedding row per line, users first.
void write_model(const ModelState& m, const std::string& path);
ModelState read_model(const std::string& path, const InteractionSet* train_for_graph = nullptr);

}  // namespace itipr
