#include "degc/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace degc {

Activation activation_for(Variant variant) {
  return variant == Variant::kNgcf ? Activation::kTanh : Activation::kIdentity;
}

EmbeddingTable::EmbeddingTable(int d, std::size_t n_users, std::size_t n_items)
    : dim(d) {
  reserve(n_users, n_items);
}

void EmbeddingTable::reserve(std::size_t n_users, std::size_t n_items) {
  auto grow = [this](RowMatrix& m, std::vector<bool>& known, std::size_t n) {
    if (n <= known.size()) return;
    const auto old = m.rows();
    m.conservativeResize(static_cast<Eigen::Index>(n), dim);
    m.bottomRows(static_cast<Eigen::Index>(n) - old).setZero();
    known.resize(n, false);
  };
  grow(users, user_known, n_users);
  grow(items, item_known, n_items);
}

void EmbeddingTable::set_user(NodeId u, const Eigen::VectorXd& e) {
  if (e.size() != dim) throw std::invalid_argument("user embedding dim mismatch");
  reserve(u + 1, item_known.size());
  users.row(u) = e.transpose();
  user_known[u] = true;
}

void EmbeddingTable::set_item(NodeId i, const Eigen::VectorXd& e) {
  if (e.size() != dim) throw std::invalid_argument("item embedding dim mismatch");
  reserve(user_known.size(), i + 1);
  items.row(i) = e.transpose();
  item_known[i] = true;
}

bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
  return a.dim == b.dim && a.user_known == b.user_known &&
         a.item_known == b.item_known && a.users.rows() == b.users.rows() &&
         a.items.rows() == b.items.rows() && a.users == b.users && a.items == b.items;
}

bool operator==(const ConvLayer& a, const ConvLayer& b) {
  return a.activation == b.activation &&
         a.user_weights.rows() == b.user_weights.rows() &&
         a.user_weights.cols() == b.user_weights.cols() &&
         a.item_weights.rows() == b.item_weights.rows() &&
         a.item_weights.cols() == b.item_weights.cols() &&
         a.user_weights == b.user_weights && a.item_weights == b.item_weights;
}

bool operator==(const GcnModel& a, const GcnModel& b) {
  return a.variant == b.variant && a.embedding_dim == b.embedding_dim &&
         a.layers == b.layers;
}

void xavier_init(Eigen::MatrixXd& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

GcnModel GcnModel::create(Variant variant, int embedding_dim,
                          const std::vector<int>& widths, Rng& rng) {
  if (embedding_dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  if (widths.empty()) throw std::invalid_argument("model needs at least one layer");
  GcnModel m;
  m.variant = variant;
  m.embedding_dim = embedding_dim;
  int prev = embedding_dim;
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("layer width must be >= 1");
    ConvLayer layer;
    layer.activation = activation_for(variant);
    layer.user_weights.resize(w, 2 * prev);
    layer.item_weights.resize(w, 2 * prev);
    xavier_init(layer.user_weights, rng);
    xavier_init(layer.item_weights, rng);
    m.layers.push_back(std::move(layer));
    prev = w;
  }
  return m;
}

std::vector<int> GcnModel::widths() const {
  std::vector<int> w;
  for (const auto& l : layers) w.push_back(l.width());
  return w;
}

int GcnModel::representation_dim() const {
  int total = embedding_dim;
  for (const auto& l : layers) total += l.width();
  return total;
}

int GcnModel::representation_offset(int k) const {
  int off = 0;
  for (int j = 0; j < k; ++j) off += width(j);
  return off;
}

std::size_t GcnModel::num_weights() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.user_weights.size() + l.item_weights.size();
  return n;
}

std::size_t GcnModel::num_zero_weights() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>((l.user_weights.array() == 0.0).count());
    n += static_cast<std::size_t>((l.item_weights.array() == 0.0).count());
  }
  return n;
}

void GcnModel::validate() const {
  if (layers.empty()) throw std::logic_error("model has no layers");
  int prev = embedding_dim;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.width() < 1 || l.item_weights.rows() != l.user_weights.rows() ||
        l.input_dim() != 2 * prev || l.item_weights.cols() != l.user_weights.cols()) {
      throw std::logic_error("inconsistent shape at layer " + std::to_string(k + 1));
    }
    prev = l.width();
  }
}

Eigen::VectorXd aggregate_neighbors(std::span<const Eigen::VectorXd> neighbors,
                                    int dim) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
  for (const auto& v : neighbors) {
    if (v.size() != dim) throw std::invalid_argument("mixed neighbour dimensions");
    out += v;
  }
  if (!neighbors.empty()) out /= static_cast<double>(neighbors.size());
  return out;
}

namespace {

void activate(Activation act, Eigen::Ref<RowMatrix> z) {
  if (act == Activation::kTanh) z = z.array().tanh();
}

}  // namespace

Eigen::VectorXd layer_forward(const ConvLayer& layer, const Eigen::VectorXd& self,
                              const Eigen::VectorXd& neighbors, Side side) {
  const int half = layer.input_half();
  if (self.size() != half || neighbors.size() != half) {
    throw std::invalid_argument("layer input dimension mismatch");
  }
  Eigen::VectorXd x(2 * half);
  x << self, neighbors;
  Eigen::VectorXd z = layer.weights(side) * x;
  if (layer.activation == Activation::kTanh) z = z.array().tanh();
  return z;
}

double score_pair(const Eigen::VectorXd& user_rep, const Eigen::VectorXd& item_rep) {
  if (user_rep.size() != item_rep.size()) {
    throw std::invalid_argument("representation dimension mismatch");
  }
  return user_rep.dot(item_rep);
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.size() != neg_scores.size()) {
    throw std::invalid_argument("score lists differ in length");
  }
  if (pos_scores.empty()) throw std::invalid_argument("empty score lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i)
    sum += softplus(neg_scores[i] - pos_scores[i]);
  return sum / static_cast<double>(pos_scores.size());
}

PropagationGraph PropagationGraph::build(const BipartiteGraph& graph,
                                         std::span<const NodeId> extra_users,
                                         std::span<const NodeId> extra_items) {
  PropagationGraph g;
  auto add = [](std::vector<NodeId>& ids, std::unordered_map<NodeId, int>& index,
                NodeId id) {
    if (index.emplace(id, static_cast<int>(ids.size())).second) ids.push_back(id);
  };
  for (const auto& [u, nbrs] : graph.user_neighbors) add(g.users_, g.user_index_, u);
  for (const auto& [i, nbrs] : graph.item_neighbors) add(g.items_, g.item_index_, i);
  for (NodeId u : extra_users) add(g.users_, g.user_index_, u);
  for (NodeId i : extra_items) add(g.items_, g.item_index_, i);

  for (NodeId u : g.users_) {
    if (auto it = graph.user_neighbors.find(u); it != graph.user_neighbors.end()) {
      for (NodeId i : it->second) g.user_adj_.push_back(g.item_index_.at(i));
    }
    g.user_off_.push_back(static_cast<int>(g.user_adj_.size()));
  }
  for (NodeId i : g.items_) {
    if (auto it = graph.item_neighbors.find(i); it != graph.item_neighbors.end()) {
      for (NodeId u : it->second) g.item_adj_.push_back(g.user_index_.at(u));
    }
    g.item_off_.push_back(static_cast<int>(g.item_adj_.size()));
  }
  return g;
}

std::optional<int> PropagationGraph::local_user(NodeId u) const {
  auto it = user_index_.find(u);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> PropagationGraph::local_item(NodeId i) const {
  auto it = item_index_.find(i);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

Eigen::VectorXd ForwardPass::user(NodeId u) const {
  const auto local = graph->local_user(u);
  if (!local) throw std::out_of_range("user not in forward pass");
  return user_rep.row(*local).transpose();
}

Eigen::VectorXd ForwardPass::item(NodeId i) const {
  const auto local = graph->local_item(i);
  if (!local) throw std::out_of_range("item not in forward pass");
  return item_rep.row(*local).transpose();
}

namespace {

// out.row(n) = mean of src rows listed by neighbours(n).
template <typename NeighborFn>
void mean_aggregate(const RowMatrix& src, std::size_t n_rows, NeighborFn neighbors,
                    RowMatrix& out) {
  out.setZero(static_cast<Eigen::Index>(n_rows), src.cols());
  for (std::size_t n = 0; n < n_rows; ++n) {
    const auto nbrs = neighbors(static_cast<int>(n));
    if (nbrs.empty()) continue;
    auto row = out.row(static_cast<Eigen::Index>(n));
    for (int m : nbrs) row += src.row(m);
    row /= static_cast<double>(nbrs.size());
  }
}

// Adjoint of mean_aggregate: dst.row(m) += grad.row(n) / deg(n) for m in N(n).
template <typename NeighborFn>
void mean_aggregate_adjoint(const RowMatrix& grad, NeighborFn neighbors,
                            RowMatrix& dst) {
  for (Eigen::Index n = 0; n < grad.rows(); ++n) {
    const auto nbrs = neighbors(static_cast<int>(n));
    if (nbrs.empty()) continue;
    const Eigen::RowVectorXd share = grad.row(n) / static_cast<double>(nbrs.size());
    for (int m : nbrs) dst.row(m) += share;
  }
}

RowMatrix concat_inputs(const RowMatrix& self, const RowMatrix& agg) {
  RowMatrix x(self.rows(), self.cols() + agg.cols());
  x.leftCols(self.cols()) = self;
  x.rightCols(agg.cols()) = agg;
  return x;
}

}  // namespace

ForwardPass model_forward(const GcnModel& model, const PropagationGraph& graph,
                          const EmbeddingTable& embeddings) {
  model.validate();
  if (embeddings.dim != model.embedding_dim) {
    throw std::invalid_argument("embedding dim does not match the model");
  }
  const auto n_u = graph.users().size();
  const auto n_i = graph.items().size();
  const int K = model.num_layers();

  ForwardPass fp;
  fp.graph = &graph;
  fp.user_h.resize(K + 1);
  fp.item_h.resize(K + 1);
  fp.user_agg.resize(K);
  fp.item_agg.resize(K);

  auto& hu0 = fp.user_h[0];
  hu0.resize(static_cast<Eigen::Index>(n_u), model.embedding_dim);
  for (std::size_t n = 0; n < n_u; ++n) {
    const NodeId u = graph.users()[n];
    if (!embeddings.has_user(u))
      throw DataError("missing embedding for user " + std::to_string(u));
    hu0.row(static_cast<Eigen::Index>(n)) = embeddings.users.row(u);
  }
  auto& hi0 = fp.item_h[0];
  hi0.resize(static_cast<Eigen::Index>(n_i), model.embedding_dim);
  for (std::size_t n = 0; n < n_i; ++n) {
    const NodeId i = graph.items()[n];
    if (!embeddings.has_item(i))
      throw DataError("missing embedding for item " + std::to_string(i));
    hi0.row(static_cast<Eigen::Index>(n)) = embeddings.items.row(i);
  }

  auto user_nbrs = [&](int n) { return graph.user_neighbors(n); };
  auto item_nbrs = [&](int n) { return graph.item_neighbors(n); };
  for (int k = 1; k <= K; ++k) {
    const auto& layer = model.layer(k);
    // Every layer-(k-1) output exists before any layer-k output is formed.
    mean_aggregate(fp.item_h[k - 1], n_u, user_nbrs, fp.user_agg[k - 1]);
    mean_aggregate(fp.user_h[k - 1], n_i, item_nbrs, fp.item_agg[k - 1]);
    fp.user_h[k] = concat_inputs(fp.user_h[k - 1], fp.user_agg[k - 1]) *
                   layer.user_weights.transpose();
    fp.item_h[k] = concat_inputs(fp.item_h[k - 1], fp.item_agg[k - 1]) *
                   layer.item_weights.transpose();
    activate(layer.activation, fp.user_h[k]);
    activate(layer.activation, fp.item_h[k]);
  }

  const int D = model.representation_dim();
  fp.user_rep.resize(static_cast<Eigen::Index>(n_u), D);
  fp.item_rep.resize(static_cast<Eigen::Index>(n_i), D);
  for (int k = 0; k <= K; ++k) {
    const int off = model.representation_offset(k);
    const int w = model.width(k);
    fp.user_rep.middleCols(off, w) = fp.user_h[k];
    fp.item_rep.middleCols(off, w) = fp.item_h[k];
  }
  return fp;
}

LayerSelection LayerSelection::full(const ConvLayer& layer) {
  return {Eigen::MatrixXd::Ones(layer.width(), layer.input_dim()),
          Eigen::MatrixXd::Ones(layer.width(), layer.input_dim())};
}

LayerSelection LayerSelection::empty_like(const ConvLayer& layer) {
  return {Eigen::MatrixXd::Zero(layer.width(), layer.input_dim()),
          Eigen::MatrixXd::Zero(layer.width(), layer.input_dim())};
}

bool LayerSelection::any() const {
  return (user.array() != 0.0).any() || (item.array() != 0.0).any();
}

ParamMask ParamMask::none(const GcnModel& model) {
  ParamMask m;
  m.layers.resize(model.layers.size());
  return m;
}

ParamMask ParamMask::all(const GcnModel& model, bool embeddings) {
  ParamMask m;
  m.user_embeddings = m.item_embeddings = embeddings;
  for (const auto& l : model.layers) m.layers.emplace_back(LayerSelection::full(l));
  return m;
}

ParamMask ParamMask::only_layer(const GcnModel& model, int k) {
  auto m = none(model);
  m.layers.at(k - 1) = LayerSelection::full(model.layer(k));
  return m;
}

bool ParamMask::empty() const {
  if (embeddings()) return false;
  for (const auto& l : layers)
    if (l && l->any()) return false;
  return true;
}

void ParamMask::validate(const GcnModel& model) const {
  if (layers.size() != model.layers.size())
    throw std::invalid_argument("mask references a different number of layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (!layers[k]) continue;
    const auto& l = model.layers[k];
    const auto& s = *layers[k];
    if (s.user.rows() != l.width() || s.user.cols() != l.input_dim() ||
        s.item.rows() != l.width() || s.item.cols() != l.input_dim()) {
      throw std::invalid_argument("mask shape mismatch at layer " + std::to_string(k + 1));
    }
  }
}

bool Gradients::empty() const {
  if (users || items) return false;
  for (const auto& l : layers)
    if (l) return false;
  return true;
}

bool Gradients::all_finite() const {
  for (const auto& l : layers)
    if (l && (!l->user.allFinite() || !l->item.allFinite())) return false;
  if (users && !users->allFinite()) return false;
  if (items && !items->allFinite()) return false;
  return true;
}

namespace {

struct ScoredBatch {
  std::vector<int> user, pos, neg;  // local rows
  std::vector<double> margin;       // s_pos - s_neg
};

ScoredBatch score_batch(const ForwardPass& fp, const PropagationGraph& graph,
                        std::span<const Triple> batch) {
  ScoredBatch sb;
  sb.user.reserve(batch.size());
  for (const auto& t : batch) {
    const auto u = graph.local_user(t.user);
    const auto p = graph.local_item(t.pos_item);
    const auto n = graph.local_item(t.neg_item);
    if (!u || !p || !n) throw std::invalid_argument("triple references a node outside the graph");
    sb.user.push_back(*u);
    sb.pos.push_back(*p);
    sb.neg.push_back(*n);
    const auto ur = fp.user_rep.row(*u);
    sb.margin.push_back(ur.dot(fp.item_rep.row(*p)) - ur.dot(fp.item_rep.row(*n)));
  }
  return sb;
}

double regularization_value(const GcnModel& model, const EmbeddingTable& emb,
                            std::span<const Triple> batch, const ParamMask& mask,
                            const RegSpec& reg) {
  double r = 0.0;
  if (reg.weight_l2 > 0.0) {
    for (std::size_t k = 0; k < mask.layers.size(); ++k) {
      if (!mask.layers[k]) continue;
      const auto& l = model.layers[k];
      r += reg.weight_l2 *
           ((l.user_weights.array().square() * mask.layers[k]->user.array()).sum() +
            (l.item_weights.array().square() * mask.layers[k]->item.array()).sum());
    }
  }
  if (reg.embedding_l2 > 0.0 && !batch.empty()) {
    double s = 0.0;
    for (const auto& t : batch) {
      if (mask.user_embeddings) s += emb.users.row(t.user).squaredNorm();
      if (mask.item_embeddings) {
        s += emb.items.row(t.pos_item).squaredNorm();
        s += emb.items.row(t.neg_item).squaredNorm();
      }
    }
    r += reg.embedding_l2 * s / static_cast<double>(batch.size());
  }
  return r;
}

}  // namespace

LossValue objective(const GcnModel& model, const EmbeddingTable& embeddings,
                    const PropagationGraph& graph, std::span<const Triple> batch,
                    const ParamMask& mask, const RegSpec& reg) {
  LossValue v;
  if (!batch.empty()) {
    const auto fp = model_forward(model, graph, embeddings);
    const auto sb = score_batch(fp, graph, batch);
    double sum = 0.0;
    for (double m : sb.margin) sum += softplus(-m);
    v.bpr = sum / static_cast<double>(batch.size());
  }
  v.regularization = regularization_value(model, embeddings, batch, mask, reg);
  return v;
}

Gradients gradient(const GcnModel& model, const EmbeddingTable& embeddings,
                   const PropagationGraph& graph, std::span<const Triple> batch,
                   const ParamMask& mask, const RegSpec& reg, LossValue* value) {
  mask.validate(model);
  const int K = model.num_layers();
  Gradients g;
  g.layers.resize(K);

  // Lowest activation level whose adjoint is required.
  int lowest = K + 1;
  if (mask.embeddings()) {
    lowest = 0;
  } else {
    for (int k = 1; k <= K; ++k) {
      if (mask.layers[k - 1]) {
        lowest = k;
        break;
      }
    }
  }
  if (lowest > K) {
    if (value) *value = objective(model, embeddings, graph, batch, mask, reg);
    return g;
  }
  if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");

  const auto fp = model_forward(model, graph, embeddings);
  const auto sb = score_batch(fp, graph, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  RowMatrix d_user_rep = RowMatrix::Zero(fp.user_rep.rows(), fp.user_rep.cols());
  RowMatrix d_item_rep = RowMatrix::Zero(fp.item_rep.rows(), fp.item_rep.cols());
  double bpr_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    bpr_sum += softplus(-sb.margin[b]);
    // d softplus(-m)/dm = -sigmoid(-m)
    const double coeff = -inv_b / (1.0 + std::exp(sb.margin[b]));
    const auto ur = fp.user_rep.row(sb.user[b]);
    d_user_rep.row(sb.user[b]) +=
        coeff * (fp.item_rep.row(sb.pos[b]) - fp.item_rep.row(sb.neg[b]));
    d_item_rep.row(sb.pos[b]) += coeff * ur;
    d_item_rep.row(sb.neg[b]) -= coeff * ur;
  }

  std::vector<RowMatrix> du(K + 1), di(K + 1);
  for (int k = 0; k <= K; ++k) {
    const int off = model.representation_offset(k);
    const int w = model.width(k);
    du[k] = d_user_rep.middleCols(off, w);
    di[k] = d_item_rep.middleCols(off, w);
  }

  auto user_nbrs = [&](int n) { return graph.user_neighbors(n); };
  auto item_nbrs = [&](int n) { return graph.item_neighbors(n); };
  for (int k = K; k >= std::max(lowest, 1); --k) {
    const auto& layer = model.layer(k);
    const int half = layer.input_half();
    RowMatrix dz_u = du[k];
    RowMatrix dz_i = di[k];
    if (layer.activation == Activation::kTanh) {
      dz_u.array() *= 1.0 - fp.user_h[k].array().square();
      dz_i.array() *= 1.0 - fp.item_h[k].array().square();
    }
    if (const auto& sel = mask.layers[k - 1]) {
      LayerGradient lg;
      lg.user = dz_u.transpose() * concat_inputs(fp.user_h[k - 1], fp.user_agg[k - 1]);
      lg.item = dz_i.transpose() * concat_inputs(fp.item_h[k - 1], fp.item_agg[k - 1]);
      if (reg.weight_l2 > 0.0) {
        lg.user += 2.0 * reg.weight_l2 * layer.user_weights;
        lg.item += 2.0 * reg.weight_l2 * layer.item_weights;
      }
      lg.user.array() *= sel->user.array();
      lg.item.array() *= sel->item.array();
      g.layers[k - 1] = std::move(lg);
    }
    if (k - 1 >= lowest) {
      const RowMatrix dx_u = dz_u * layer.user_weights;
      const RowMatrix dx_i = dz_i * layer.item_weights;
      du[k - 1] += dx_u.leftCols(half);
      di[k - 1] += dx_i.leftCols(half);
      const RowMatrix dagg_u = dx_u.rightCols(half);
      const RowMatrix dagg_i = dx_i.rightCols(half);
      // user aggregates read item rows and vice versa
      mean_aggregate_adjoint(dagg_u, user_nbrs, di[k - 1]);
      mean_aggregate_adjoint(dagg_i, item_nbrs, du[k - 1]);
    }
  }

  if (mask.user_embeddings) {
    RowMatrix gu = RowMatrix::Zero(embeddings.users.rows(), embeddings.dim);
    for (std::size_t n = 0; n < graph.users().size(); ++n)
      gu.row(graph.users()[n]) += du[0].row(static_cast<Eigen::Index>(n));
    if (reg.embedding_l2 > 0.0) {
      for (const auto& t : batch)
        gu.row(t.user) += 2.0 * reg.embedding_l2 * inv_b * embeddings.users.row(t.user);
    }
    g.users = std::move(gu);
  }
  if (mask.item_embeddings) {
    RowMatrix gi = RowMatrix::Zero(embeddings.items.rows(), embeddings.dim);
    for (std::size_t n = 0; n < graph.items().size(); ++n)
      gi.row(graph.items()[n]) += di[0].row(static_cast<Eigen::Index>(n));
    if (reg.embedding_l2 > 0.0) {
      for (const auto& t : batch) {
        gi.row(t.pos_item) += 2.0 * reg.embedding_l2 * inv_b * embeddings.items.row(t.pos_item);
        gi.row(t.neg_item) += 2.0 * reg.embedding_l2 * inv_b * embeddings.items.row(t.neg_item);
      }
    }
    g.items = std::move(gi);
  }

  if (value) {
    value->bpr = bpr_sum * inv_b;
    value->regularization = regularization_value(model, embeddings, batch, mask, reg);
  }
  return g;
}

}  // namespace degc
