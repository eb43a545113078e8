#include "itipr/backbone.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "itipr/rng.hpp"

namespace itipr {

const char* backbone_name(Backbone b) { return b == Backbone::mf ? "mf" : "lightgcn"; }

Backbone backbone_from_name(const std::string& name) {
  if (name == "mf") return Backbone::mf;
  if (name == "lightgcn") return Backbone::lightgcn;
  throw std::invalid_argument("unknown backbone: " + name);
}

BipartiteGraph BipartiteGraph::from_train(const InteractionSet& train) {
  BipartiteGraph g;
  g.user_items.resize(train.n_users());
  g.item_users.resize(train.n_items());
  for (int u = 0; u < train.n_users(); ++u) {
    g.user_items[u] = train.items_of(u);
    for (std::int32_t i : g.user_items[u]) g.item_users[i].push_back(u);
  }
  return g;
}

double init_cap(int dim) { return std::sqrt(3.0) * 0.1 / std::sqrt(static_cast<double>(dim)); }

ModelState init_model(const ModelSpec& spec, const InteractionSet& train, std::uint64_t seed) {
  if (spec.dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  ModelState m;
  m.backbone = spec.backbone;
  m.n_users = train.n_users();
  m.n_items = train.n_items();
  m.dim = spec.dim;
  m.lightgcn_layers = spec.backbone == Backbone::lightgcn ? spec.lightgcn_layers : 0;
  m.user_emb.resize(static_cast<std::size_t>(m.n_users) * m.dim);
  m.item_emb.resize(static_cast<std::size_t>(m.n_items) * m.dim);
  const double cap = init_cap(m.dim);
  Rng rng(mix_seed(seed, 0x1417u));
  for (double& v : m.user_emb) v = rng.uniform(-cap, cap);
  for (double& v : m.item_emb) v = rng.uniform(-cap, cap);
  if (spec.backbone == Backbone::lightgcn) m.graph = BipartiteGraph::from_train(train);
  return m;
}

namespace {

double dot(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

// One symmetric normalized propagation step over the bipartite graph:
// out_u = sum_{i in N_u} in_i / sqrt(|N_u||N_i|), and mirrored for items.
void propagate_once(const BipartiteGraph& g, int dim, const std::vector<double>& in_u,
                    const std::vector<double>& in_i, std::vector<double>& out_u,
                    std::vector<double>& out_i) {
  out_u.assign(in_u.size(), 0.0);
  out_i.assign(in_i.size(), 0.0);
  const int n_users = static_cast<int>(g.user_items.size());
  for (int u = 0; u < n_users; ++u) {
    const auto& items = g.user_items[u];
    if (items.empty()) continue;
    const double du = static_cast<double>(items.size());
    double* ou = out_u.data() + static_cast<std::size_t>(u) * dim;
    for (std::int32_t i : items) {
      const double di = static_cast<double>(g.item_users[i].size());
      const double c = 1.0 / std::sqrt(du * di);
      const double* qi = in_i.data() + static_cast<std::size_t>(i) * dim;
      const double* pu = in_u.data() + static_cast<std::size_t>(u) * dim;
      double* oi = out_i.data() + static_cast<std::size_t>(i) * dim;
      for (int k = 0; k < dim; ++k) {
        ou[k] += c * qi[k];
        oi[k] += c * pu[k];
      }
    }
  }
}

// Layer-averaged propagation of arbitrary tables: (1/(L+1)) sum_l A^l X.
void propagate_average(const ModelState& m, const std::vector<double>& in_u,
                       const std::vector<double>& in_i, std::vector<double>& out_u,
                       std::vector<double>& out_i) {
  out_u = in_u;
  out_i = in_i;
  const int L = m.lightgcn_layers;
  if (L == 0) return;
  std::vector<double> cur_u = in_u, cur_i = in_i, next_u, next_i;
  for (int l = 1; l <= L; ++l) {
    propagate_once(m.graph, m.dim, cur_u, cur_i, next_u, next_i);
    for (std::size_t k = 0; k < out_u.size(); ++k) out_u[k] += next_u[k];
    for (std::size_t k = 0; k < out_i.size(); ++k) out_i[k] += next_i[k];
    cur_u.swap(next_u);
    cur_i.swap(next_i);
  }
  const double inv = 1.0 / (L + 1);
  for (double& v : out_u) v *= inv;
  for (double& v : out_i) v *= inv;
}

}  // namespace

ScoringTable ScoringTable::borrow(const ModelState& m) {
  ScoringTable t;
  t.users_ = m.user_emb.data();
  t.items_ = m.item_emb.data();
  t.dim_ = m.dim;
  return t;
}

ScoringTable ScoringTable::own(std::vector<double> users, std::vector<double> items, int dim) {
  ScoringTable t;
  t.user_storage_ = std::move(users);
  t.item_storage_ = std::move(items);
  t.users_ = t.user_storage_.data();
  t.items_ = t.item_storage_.data();
  t.dim_ = dim;
  return t;
}

ScoringTable scoring_table(const ModelState& m) {
  if (m.backbone == Backbone::mf) return ScoringTable::borrow(m);
  std::vector<double> fu, fi;
  propagate_average(m, m.user_emb, m.item_emb, fu, fi);
  return ScoringTable::own(std::move(fu), std::move(fi), m.dim);
}

double score(const ScoringTable& t, int u, int i) { return dot(t.user(u), t.item(i), t.dim()); }

double score(const ModelState& m, int u, int i) {
  if (m.backbone == Backbone::mf) return dot(m.user_row(u), m.item_row(i), m.dim);
  return score(scoring_table(m), u, i);
}

double softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double bpr_loss(const ModelState& m, const Triplet& t) {
  const ScoringTable tab = scoring_table(m);
  return softplus(-(score(tab, t.user, t.pos) - score(tab, t.user, t.neg)));
}

double weighted_bpr_loss(const ModelState& m, const Triplet& t, double w) {
  return w * bpr_loss(m, t);
}

GradTables GradTables::zeros(const ModelState& m) {
  GradTables g;
  g.user.assign(m.user_emb.size(), 0.0);
  g.item.assign(m.item_emb.size(), 0.0);
  return g;
}

void GradTables::axpy(double a, const GradTables& g) {
  for (std::size_t k = 0; k < user.size(); ++k) user[k] += a * g.user[k];
  for (std::size_t k = 0; k < item.size(); ++k) item[k] += a * g.item[k];
}

double batch_loss(const ModelState& m, std::span<const WeightedTriplet> batch,
                  const LossConfig& cfg) {
  const ScoringTable tab = scoring_table(m);
  double total = 0.0;
  for (const auto& [t, w] : batch) {
    total += w * softplus(-(score(tab, t.user, t.pos) - score(tab, t.user, t.neg)));
    if (cfg.l2_reg != 0.0) {
      const double* pu = m.user_row(t.user);
      const double* qi = m.item_row(t.pos);
      const double* qj = m.item_row(t.neg);
      total += 0.5 * cfg.l2_reg *
               (dot(pu, pu, m.dim) + dot(qi, qi, m.dim) + dot(qj, qj, m.dim));
    }
  }
  return total;
}

FinalGrad final_layer_gradient(const ModelState& m, const ScoringTable& table,
                               const Triplet& t, double w) {
  const int d = m.dim;
  const double* eu = table.user(t.user);
  const double* ei = table.item(t.pos);
  const double* ej = table.item(t.neg);
  const double x = dot(eu, ei, d) - dot(eu, ej, d);
  const double g = -w * (1.0 - sigmoid(x));
  if (!std::isfinite(g))
    throw std::runtime_error("non-finite gradient for triplet (" + std::to_string(t.user) +
                             "," + std::to_string(t.pos) + "," + std::to_string(t.neg) + ")");
  FinalGrad out;
  out.gu.resize(d);
  out.gi.resize(d);
  out.gj.resize(d);
  for (int k = 0; k < d; ++k) {
    out.gu[k] = g * (ei[k] - ej[k]);
    out.gi[k] = g * eu[k];
    out.gj[k] = -g * eu[k];
  }
  return out;
}

GradTables backprop_to_base(const ModelState& m, const GradTables& final_grad) {
  if (m.backbone == Backbone::mf) return final_grad;
  GradTables out;
  propagate_average(m, final_grad.user, final_grad.item, out.user, out.item);
  return out;
}

GradTables loss_gradient(const ModelState& m, std::span<const WeightedTriplet> batch,
                         const LossConfig& cfg) {
  const ScoringTable tab = scoring_table(m);
  GradTables final_grad = GradTables::zeros(m);
  const int d = m.dim;
  for (const auto& [t, w] : batch) {
    FinalGrad g = final_layer_gradient(m, tab, t, w);
    double* gu = final_grad.user.data() + static_cast<std::size_t>(t.user) * d;
    double* gi = final_grad.item.data() + static_cast<std::size_t>(t.pos) * d;
    double* gj = final_grad.item.data() + static_cast<std::size_t>(t.neg) * d;
    for (int k = 0; k < d; ++k) {
      gu[k] += g.gu[k];
      gi[k] += g.gi[k];
      gj[k] += g.gj[k];
    }
  }
  GradTables base = backprop_to_base(m, final_grad);
  if (cfg.l2_reg != 0.0) {
    for (const auto& [t, w] : batch) {
      (void)w;
      const double* pu = m.user_row(t.user);
      const double* qi = m.item_row(t.pos);
      const double* qj = m.item_row(t.neg);
      double* gu = base.user.data() + static_cast<std::size_t>(t.user) * d;
      double* gi = base.item.data() + static_cast<std::size_t>(t.pos) * d;
      double* gj = base.item.data() + static_cast<std::size_t>(t.neg) * d;
      for (int k = 0; k < d; ++k) {
        gu[k] += cfg.l2_reg * pu[k];
        gi[k] += cfg.l2_reg * qi[k];
        gj[k] += cfg.l2_reg * qj[k];
      }
    }
  }
  return base;
}

void apply_sgd_step(ModelState& m, std::span<const WeightedTriplet> batch,
                    const LossConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("sgd_step on empty batch");
  const double a = cfg.learning_rate;
  const int d = m.dim;

  if (m.backbone == Backbone::mf) {
    // Closed form; gradients of the whole batch are taken at the incoming
    // state, so accumulate first and apply after.
    std::unordered_map<std::int64_t, std::vector<double>> acc;  // key: row id
    auto key_user = [](int u) { return static_cast<std::int64_t>(u) << 1; };
    auto key_item = [](int i) { return (static_cast<std::int64_t>(i) << 1) | 1; };
    auto add = [&](std::int64_t key, const double* v, double c) {
      auto& slot = acc[key];
      if (slot.empty()) slot.assign(d, 0.0);
      for (int k = 0; k < d; ++k) slot[k] += c * v[k];
    };
    std::vector<double> diff(d);
    for (const auto& [t, w] : batch) {
      const double* pu = m.user_row(t.user);
      const double* qi = m.item_row(t.pos);
      const double* qj = m.item_row(t.neg);
      for (int k = 0; k < d; ++k) diff[k] = qi[k] - qj[k];
      const double x = dot(pu, diff.data(), d);
      const double g = -w * (1.0 - sigmoid(x));
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient for triplet (" +
                                 std::to_string(t.user) + "," + std::to_string(t.pos) + "," +
                                 std::to_string(t.neg) + ")");
      add(key_user(t.user), diff.data(), g);
      add(key_item(t.pos), pu, g);
      add(key_item(t.neg), pu, -g);
      if (cfg.l2_reg != 0.0) {
        add(key_user(t.user), pu, cfg.l2_reg);
        add(key_item(t.pos), qi, cfg.l2_reg);
        add(key_item(t.neg), qj, cfg.l2_reg);
      }
    }
    for (const auto& [key, grad] : acc) {
      double* row = (key & 1) ? m.item_row(static_cast<int>(key >> 1))
                              : m.user_row(static_cast<int>(key >> 1));
      for (int k = 0; k < d; ++k) row[k] -= a * grad[k];
    }
    return;
  }

  GradTables g = loss_gradient(m, batch, cfg);
  for (std::size_t k = 0; k < m.user_emb.size(); ++k) m.user_emb[k] -= a * g.user[k];
  for (std::size_t k = 0; k < m.item_emb.size(); ++k) m.item_emb[k] -= a * g.item[k];
}

ModelState sgd_step(const ModelState& m, std::span<const WeightedTriplet> batch,
                    const LossConfig& cfg) {
  ModelState out = m;
  apply_sgd_step(out, batch, cfg);
  return out;
}

void write_model(const ModelState& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << m.n_users << ' ' << m.n_items << ' ' << m.dim << ' ' << backbone_name(m.backbone)
      << ' ' << m.lightgcn_layers << '\n';
  out.precision(17);
  auto dump = [&](const std::vector<double>& tab, int rows) {
    for (int r = 0; r < rows; ++r) {
      for (int k = 0; k < m.dim; ++k) {
        if (k) out << ' ';
        out << tab[static_cast<std::size_t>(r) * m.dim + k];
      }
      out << '\n';
    }
  };
  dump(m.user_emb, m.n_users);
  dump(m.item_emb, m.n_items);
}

ModelState read_model(const std::string& path, const InteractionSet* train_for_graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  ModelState m;
  std::string backbone;
  in >> m.n_users >> m.n_items >> m.dim >> backbone >> m.lightgcn_layers;
  if (!in) throw std::runtime_error("bad model header in " + path);
  m.backbone = backbone_from_name(backbone);
  m.user_emb.resize(static_cast<std::size_t>(m.n_users) * m.dim);
  m.item_emb.resize(static_cast<std::size_t>(m.n_items) * m.dim);
  for (double& v : m.user_emb) in >> v;
  for (double& v : m.item_emb) in >> v;
  if (!in) throw std::runtime_error("truncated model file: " + path);
  if (m.backbone == Backbone::lightgcn) {
    if (!train_for_graph)
      throw std::runtime_error("lightgcn model requires train interactions for its graph");
    m.graph = BipartiteGraph::from_train(*train_for_graph);
  }
  return m;
}

}  // namespace itipr
