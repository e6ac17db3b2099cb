#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "degc/gcn.hpp"
#include "degc/stream_data.hpp"
#include "degc/surgery.hpp"

namespace degc::testing {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Eigen::VectorXd random_vector(int dim, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = u(rng);
  return v;
}

inline EmbeddingTable random_embeddings(int dim, std::size_t n_users, std::size_t n_items,
                                        Rng& rng, double scale = 0.5) {
  EmbeddingTable t(dim, n_users, n_items);
  for (NodeId u = 0; u < n_users; ++u) t.set_user(u, random_vector(dim, rng, scale));
  for (NodeId i = 0; i < n_items; ++i) t.set_item(i, random_vector(dim, rng, scale));
  return t;
}

/// Random edge set; every user and item gets at least one edge when
/// `n_edges` allows.
inline std::vector<Interaction> random_edges(std::size_t n_users, std::size_t n_items,
                                             std::size_t n_edges, Rng& rng) {
  std::set<std::pair<NodeId, NodeId>> pairs;
  std::uniform_int_distribution<NodeId> pu(0, static_cast<NodeId>(n_users - 1));
  std::uniform_int_distribution<NodeId> pi(0, static_cast<NodeId>(n_items - 1));
  for (NodeId u = 0; u < n_users && pairs.size() < n_edges; ++u) pairs.insert({u, pi(rng)});
  for (NodeId i = 0; i < n_items && pairs.size() < n_edges; ++i) pairs.insert({pu(rng), i});
  std::size_t guard = 0;
  while (pairs.size() < n_edges && pairs.size() < n_users * n_items && ++guard < 100000)
    pairs.insert({pu(rng), pi(rng)});
  std::vector<Interaction> out;
  std::int64_t ts = 0;
  for (const auto& [u, i] : pairs) out.push_back({u, i, ts++});
  return out;
}

/// Random triples over the given edges with a uniform negative.
inline std::vector<Triple> random_triples(const std::vector<Interaction>& edges,
                                          std::size_t n_items, std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pe(0, edges.size() - 1);
  std::uniform_int_distribution<NodeId> pi(0, static_cast<NodeId>(n_items - 1));
  std::vector<Triple> out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& e = edges[pe(rng)];
    NodeId neg = pi(rng);
    out.push_back({e.user, e.item, neg});
  }
  return out;
}

inline double activate(Activation a, double x) { return a == Activation::kTanh ? std::tanh(x) : x; }

/// Plain recursive propagation with explicit loops, independent of the
/// matrix implementation.
class RecursiveForward {
 public:
  RecursiveForward(const GcnModel& model, const BipartiteGraph& graph,
                   const EmbeddingTable& emb)
      : model_(model), graph_(graph), emb_(emb) {}

  std::vector<double> h(Side side, NodeId node, int k) const {
    const int d = model_.width(k);
    if (k == 0) {
      const auto& m = side == Side::kUser ? emb_.users : emb_.items;
      std::vector<double> out(static_cast<std::size_t>(d));
      for (int c = 0; c < d; ++c) out[static_cast<std::size_t>(c)] = m(node, c);
      return out;
    }
    const int in = model_.width(k - 1);
    const auto self = h(side, node, k - 1);
    std::vector<double> agg(static_cast<std::size_t>(in), 0.0);
    const auto& adj = side == Side::kUser ? graph_.user_neighbors : graph_.item_neighbors;
    const Side other = side == Side::kUser ? Side::kItem : Side::kUser;
    if (const auto it = adj.find(node); it != adj.end() && !it->second.empty()) {
      for (NodeId n : it->second) {
        const auto hn = h(other, n, k - 1);
        for (int c = 0; c < in; ++c) agg[static_cast<std::size_t>(c)] += hn[static_cast<std::size_t>(c)];
      }
      for (auto& a : agg) a /= static_cast<double>(it->second.size());
    }
    const auto& layer = model_.layer(k);
    const auto& w = layer.weights(side);
    std::vector<double> out(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) {
      double s = 0.0;
      for (int c = 0; c < in; ++c) s += w(r, c) * self[static_cast<std::size_t>(c)];
      for (int c = 0; c < in; ++c) s += w(r, in + c) * agg[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = activate(layer.activation, s);
    }
    return out;
  }

  std::vector<double> representation(Side side, NodeId node) const {
    std::vector<double> out;
    for (int k = 0; k <= model_.num_layers(); ++k) {
      const auto part = h(side, node, k);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }

 private:
  const GcnModel& model_;
  const BipartiteGraph& graph_;
  const EmbeddingTable& emb_;
};

/// Every parameter the gradient can reach, addressed for perturbation.
struct ParamRef {
  std::string name;
  std::function<double&(GcnModel&, EmbeddingTable&)> at;
  std::function<double(const Gradients&)> grad;
};

inline std::vector<ParamRef> all_params(const GcnModel& model, const EmbeddingTable& emb) {
  std::vector<ParamRef> out;
  for (int k = 1; k <= model.num_layers(); ++k) {
    for (Side side : {Side::kUser, Side::kItem}) {
      const auto& w = model.layer(k).weights(side);
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          out.push_back({"W" + std::to_string(k) + (side == Side::kUser ? "u" : "i"),
                         [=](GcnModel& m, EmbeddingTable&) -> double& {
                           return m.layer(k).weights(side)(r, c);
                         },
                         [=](const Gradients& g) {
                           const auto& lg = *g.layers[static_cast<std::size_t>(k - 1)];
                           return side == Side::kUser ? lg.user(r, c) : lg.item(r, c);
                         }});
        }
      }
    }
  }
  for (Eigen::Index u = 0; u < emb.users.rows(); ++u)
    for (Eigen::Index c = 0; c < emb.users.cols(); ++c)
      out.push_back({"eu", [=](GcnModel&, EmbeddingTable& e) -> double& { return e.users(u, c); },
                     [=](const Gradients& g) { return (*g.users)(u, c); }});
  for (Eigen::Index i = 0; i < emb.items.rows(); ++i)
    for (Eigen::Index c = 0; c < emb.items.cols(); ++c)
      out.push_back({"ei", [=](GcnModel&, EmbeddingTable& e) -> double& { return e.items(i, c); },
                     [=](const Gradients& g) { return (*g.items)(i, c); }});
  return out;
}

struct FdResult {
  double worst_rel = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
};

/// Compares every analytic entry with a central difference. An entry passes
/// when its relative error is below `rel_tol`, or when both values sit at the
/// round-off floor of the difference quotient.
inline FdResult finite_difference_check(GcnModel model, EmbeddingTable emb,
                                        const PropagationGraph& graph,
                                        const std::vector<Triple>& batch, const RegSpec& reg,
                                        double h = 1e-5, double rel_tol = 1e-4,
                                        double abs_floor = 1e-9) {
  const auto mask = ParamMask::all(model, true);
  const auto grads = gradient(model, emb, graph, batch, mask, reg);
  FdResult res;
  for (const auto& p : all_params(model, emb)) {
    double& x = p.at(model, emb);
    const double x0 = x;
    x = x0 + h;
    const double fp = objective(model, emb, graph, batch, mask, reg).total();
    x = x0 - h;
    const double fm = objective(model, emb, graph, batch, mask, reg).total();
    x = x0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = p.grad(grads);
    const double diff = std::abs(numeric - analytic);
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    ++res.checked;
    if (diff <= abs_floor) continue;
    const double rel = diff / scale;
    res.worst_rel = std::max(res.worst_rel, rel);
    if (rel >= rel_tol) ++res.failures;
  }
  return res;
}

/// Random model with roughly `sparsity` of its weights set to exactly zero.
inline GcnModel random_sparse_model(int d, const std::vector<int>& widths, double sparsity,
                                    Rng& rng) {
  auto m = GcnModel::create(Variant::kNgcf, d, widths, rng);
  std::bernoulli_distribution zero(sparsity);
  for (auto& layer : m.layers)
    for (auto* w : {&layer.user_weights, &layer.item_weights})
      for (Eigen::Index r = 0; r < w->rows(); ++r)
        for (Eigen::Index c = 0; c < w->cols(); ++c)
          if (zero(rng)) (*w)(r, c) = 0.0;
  return m;
}

/// True when some chain of above-epsilon weights leads from filter (k, j)
/// to any layer-K filter. Enumerates paths one edge at a time.
inline bool has_path_to_top(const GcnModel& m, int k, int j, double eps) {
  if (k == m.num_layers()) return true;
  const auto& next = m.layer(k + 1);
  const int half = next.input_half();
  for (int r = 0; r < next.width(); ++r) {
    bool edge = false;
    for (const auto* w : {&next.user_weights, &next.item_weights})
      for (int c : {j, half + j})
        if (std::abs((*w)(r, c)) > eps) edge = true;
    if (edge && has_path_to_top(m, k + 1, r, eps)) return true;
  }
  return false;
}

inline std::set<FilterId> path_oracle_dead(const GcnModel& m, double eps) {
  std::set<FilterId> dead;
  for (int k = 1; k < m.num_layers(); ++k)
    for (int j = 0; j < m.width(k); ++j)
      if (!has_path_to_top(m, k, j, eps)) dead.insert({k, j});
  return dead;
}

/// Concatenated representation restricted to kept coordinates of each
/// layer; `kept[k]` lists the coordinates of layer k (k = 1..K) to keep.
inline Eigen::VectorXd restrict_rep(const Eigen::VectorXd& rep, const GcnModel& model,
                                    const std::map<int, std::vector<int>>& kept) {
  std::vector<double> out;
  for (int c = 0; c < model.embedding_dim; ++c) out.push_back(rep(c));
  for (int k = 1; k <= model.num_layers(); ++k) {
    const int off = model.representation_offset(k);
    for (int j : kept.at(k)) out.push_back(rep(off + j));
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

inline std::map<int, std::vector<int>> kept_coordinates(const GcnModel& model,
                                                        const std::set<FilterId>& removed) {
  std::map<int, std::vector<int>> kept;
  for (int k = 1; k <= model.num_layers(); ++k)
    for (int j = 0; j < model.width(k); ++j)
      if (!removed.count({k, j})) kept[k].push_back(j);
  return kept;
}

/// Largest deviation between the representations of two models over every
/// node, comparing `before` restricted to the coordinates that survive.
inline double max_rep_drift(const GcnModel& before, const GcnModel& after,
                            const std::set<FilterId>& removed, const PropagationGraph& graph,
                            const EmbeddingTable& emb) {
  const auto a = model_forward(before, graph, emb);
  const auto b = model_forward(after, graph, emb);
  const auto kept = kept_coordinates(before, removed);
  double worst = 0.0;
  for (NodeId u : graph.users())
    worst = std::max(worst, (restrict_rep(a.user(u), before, kept) - b.user(u)).cwiseAbs().maxCoeff());
  for (NodeId i : graph.items())
    worst = std::max(worst, (restrict_rep(a.item(i), before, kept) - b.item(i)).cwiseAbs().maxCoeff());
  return worst;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("degc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace degc::testing
