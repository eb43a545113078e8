#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itipr/backbone.hpp"
#include "itipr/triplets.hpp"

namespace itipr {

// Two-layer MLP over [p_u; q_i; q_j]: ReLU hidden layer, Tanh output, so
// predictions always land in (-1, 1).
struct TipModel {
  int hidden = 0;
  int dim = 0;                  // embedding dim; input width is 3*dim
  std::vector<double> w1;      // hidden x 3*dim, row-major
  std::vector<double> b1;      // hidden
  std::vector<double> w2;      // hidden
  double b2 = 0.0;
};

TipModel tip_init(int hidden, int dim, std::uint64_t seed);

double tip_forward(const TipModel& tm, const double* pu, const double* qi, const double* qj);
double tip_forward_features(const TipModel& tm, const double* x);  // x has 3*dim entries

// Robust affine map taking raw Shapley targets into Tanh's range:
// subtract the median, divide by 3*IQR, clamp to (-0.999, 0.999).
struct TipScaler {
  double center = 0.0;
  double scale = 1.0;

  double to_unit(double v) const;
  double from_unit(double y) const { return center + y * scale; }

  static TipScaler fit(const std::vector<double>& values);
};

struct TipGrad {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
};

// Mean squared error of the model on the given rows, and its gradient with
// respect to every parameter. Exposed for training and gradient checking.
double tip_mse_and_grad(const TipModel& tm, const std::vector<double>& features,
                        const std::vector<double>& targets, const std::vector<int>& rows,
                        TipGrad* grad);

struct ResampleConfig {
  int candidate_pool_size = 100;
  int new_triplets_per_positive = 1;
  int tip_hidden = 64;
  int tip_epochs = 500;
  double tip_lr = 0.05;
  int tip_batch = 64;
  std::uint64_t seed = 0;
};

struct TipTrainResult {
  TipModel model;
  TipScaler scaler;
  double final_mse = 0.0;
};

// Fits the predictor to standardized Shapley targets by mini-batch gradient
// descent on the MSE. Embedding inputs come from `embeddings`' scoring table.
TipTrainResult tip_train(const std::vector<double>& targets, const TripletSet& dt,
                         const ModelState& embeddings, const ResampleConfig& cfg);

// Softmax of TIP scores over the candidate pool, max-subtracted.
std::vector<double> resample_probabilities(const TipModel& tm, const ModelState& m, int u,
                                           int i, const std::vector<std::int32_t>& candidates);

struct ResampleResult {
  TripletSet augmented;  // original triplets first, resampled appended
  int pairs_skipped = 0;  // (u,i) pairs with no eligible negative left
};

// Importance-aware negative resampling: per (u,i) pair of dt, scores a
// uniformly drawn candidate pool with TIP and draws new negatives without
// replacement from the softmax distribution.
ResampleResult resample(const TripletSet& dt, const TipModel& tm, const ModelState& m,
                        const InteractionSet& train, const ResampleConfig& cfg);

void write_tip(const TipModel& tm, const TipScaler& scaler, const std::string& path);
void read_tip(const std::string& path, TipModel& tm, TipScaler& scaler);

}  // namespace itipr
