#include "degc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace degc {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
  if (patience < 1 || patience > std::max(max_epochs, 1))
    throw std::invalid_argument("patience must lie in [1, max_epochs]");
  if (negatives_per_positive < 1)
    throw std::invalid_argument("negatives_per_positive must be >= 1");
}

TrainingData make_training_data(std::vector<Interaction> train,
                                const std::vector<Interaction>& validation,
                                std::vector<NodeId> item_universe) {
  TrainingData data;
  std::sort(item_universe.begin(), item_universe.end());
  item_universe.erase(std::unique(item_universe.begin(), item_universe.end()),
                      item_universe.end());
  for (const auto& r : train) data.user_items[r.user].insert(r.item);
  std::vector<NodeId> val_users;
  if (!validation.empty()) {
    data.validation = make_eval_task(validation, train, item_universe);
    for (const auto& [u, items] : data.validation->held_out) val_users.push_back(u);
  }
  data.graph = PropagationGraph::build(build_bipartite_graph(train), val_users, item_universe);
  data.item_universe = std::move(item_universe);
  data.train = std::move(train);
  return data;
}

std::optional<NodeId> sample_negative(const std::set<NodeId>& exclude,
                                      std::span<const NodeId> universe, Rng& rng,
                                      int retry_cap) {
  if (universe.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, universe.size() - 1);
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    const NodeId candidate = universe[pick(rng)];
    if (!exclude.count(candidate)) return candidate;
  }
  std::vector<NodeId> allowed;
  for (NodeId i : universe)
    if (!exclude.count(i)) allowed.push_back(i);
  if (allowed.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick_allowed(0, allowed.size() - 1);
  return allowed[pick_allowed(rng)];
}

BatchSample attach_negatives(std::span<const Interaction> positives,
                             const std::map<NodeId, std::set<NodeId>>& user_items,
                             std::span<const NodeId> universe, int per_positive,
                             Rng& rng) {
  static const std::set<NodeId> kNone;
  BatchSample out;
  out.triples.reserve(positives.size() * static_cast<std::size_t>(per_positive));
  for (const auto& p : positives) {
    const auto it = user_items.find(p.user);
    const auto& exclude = it == user_items.end() ? kNone : it->second;
    for (int n = 0; n < per_positive; ++n) {
      const auto neg = sample_negative(exclude, universe, rng);
      if (!neg) {
        ++out.skipped;
        continue;
      }
      out.triples.push_back({p.user, p.item, *neg});
    }
  }
  return out;
}

BatchSample sample_bpr_batch(std::span<const Interaction> train,
                             const std::map<NodeId, std::set<NodeId>>& user_items,
                             std::span<const NodeId> universe, std::size_t batch_size,
                             Rng& rng) {
  if (train.empty()) throw std::invalid_argument("no training interactions");
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<Interaction> positives(batch_size);
  for (auto& p : positives) p = train[pick(rng)];
  return attach_negatives(positives, user_items, universe, 1, rng);
}

namespace {

template <typename Param, typename Grad, typename Moment, typename Mask>
void adam_apply(Param& p, const Grad& g, Moment& m, Moment& v, const Mask* mask,
                const AdamConfig& c, double bias1, double bias2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  auto update = ((m.array() / bias1) /
                 ((v.array() / bias2).sqrt() + c.epsilon)) * c.learning_rate;
  if (mask) {
    p.array() -= update * mask->array();
  } else {
    p.array() -= update;
  }
}

void ensure_moments(Gradients& moments, const Gradients& grads) {
  moments.layers.resize(grads.layers.size());
  for (std::size_t k = 0; k < grads.layers.size(); ++k) {
    if (grads.layers[k] && !moments.layers[k]) {
      moments.layers[k] = LayerGradient{
          Eigen::MatrixXd::Zero(grads.layers[k]->user.rows(), grads.layers[k]->user.cols()),
          Eigen::MatrixXd::Zero(grads.layers[k]->item.rows(), grads.layers[k]->item.cols())};
    }
  }
  if (grads.users && !moments.users)
    moments.users = RowMatrix::Zero(grads.users->rows(), grads.users->cols());
  if (grads.items && !moments.items)
    moments.items = RowMatrix::Zero(grads.items->rows(), grads.items->cols());
}

std::string describe_non_finite(const Gradients& g, long step) {
  std::ostringstream os;
  os << "non-finite gradient at Adam step " << step << ":";
  for (std::size_t k = 0; k < g.layers.size(); ++k) {
    if (g.layers[k] && (!g.layers[k]->user.allFinite() || !g.layers[k]->item.allFinite()))
      os << " layer " << k + 1;
  }
  if (g.users && !g.users->allFinite()) os << " user-embeddings";
  if (g.items && !g.items->allFinite()) os << " item-embeddings";
  return os.str();
}

}  // namespace

void adam_step(GcnModel& model, EmbeddingTable& embeddings, const Gradients& grads,
               const ParamMask& mask, AdamState& state) {
  if (!grads.all_finite()) throw std::runtime_error(describe_non_finite(grads, state.step + 1));
  if (grads.empty()) return;
  ensure_moments(state.first, grads);
  ensure_moments(state.second, grads);
  ++state.step;
  const auto& c = state.config;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (std::size_t k = 0; k < grads.layers.size(); ++k) {
    if (!grads.layers[k]) continue;
    auto& layer = model.layers.at(k);
    const auto& sel = mask.layers.at(k);
    if (!sel) throw std::invalid_argument("gradient for an unmasked layer");
    if (grads.layers[k]->user.rows() != layer.user_weights.rows() ||
        grads.layers[k]->user.cols() != layer.user_weights.cols())
      throw std::invalid_argument("gradient shape mismatch");
    adam_apply(layer.user_weights, grads.layers[k]->user, state.first.layers[k]->user,
               state.second.layers[k]->user, &sel->user, c, bias1, bias2);
    adam_apply(layer.item_weights, grads.layers[k]->item, state.first.layers[k]->item,
               state.second.layers[k]->item, &sel->item, c, bias1, bias2);
  }
  const Eigen::MatrixXd* no_mask = nullptr;
  if (grads.users && mask.user_embeddings) {
    adam_apply(embeddings.users, *grads.users, *state.first.users, *state.second.users,
               no_mask, c, bias1, bias2);
  }
  if (grads.items && mask.item_embeddings) {
    adam_apply(embeddings.items, *grads.items, *state.first.items, *state.second.items,
               no_mask, c, bias1, bias2);
  }
}

double soft_threshold(double w, double threshold) {
  if (w > threshold) return w - threshold;
  if (w < -threshold) return w + threshold;
  return 0.0;
}

void prox_l1(Eigen::Ref<Eigen::MatrixXd> w, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("negative threshold");
  if (threshold == 0.0) return;
  w = w.unaryExpr([threshold](double x) { return soft_threshold(x, threshold); });
}

void prox_l1(GcnModel& model, const ParamMask& mask, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("negative threshold");
  if (threshold == 0.0) return;
  mask.validate(model);
  for (std::size_t k = 0; k < mask.layers.size(); ++k) {
    if (!mask.layers[k]) continue;
    auto& layer = model.layers[k];
    auto shrink = [threshold](Eigen::MatrixXd& w, const Eigen::MatrixXd& sel) {
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
          if (sel(r, c) != 0.0) w(r, c) = soft_threshold(w(r, c), threshold);
    };
    shrink(layer.user_weights, mask.layers[k]->user);
    shrink(layer.item_weights, mask.layers[k]->item);
  }
}

std::optional<Eigen::MatrixXd> adam_inverse_scale(const AdamState& state, int k, Side side) {
  const auto idx = static_cast<std::size_t>(k - 1);
  if (state.step == 0 || idx >= state.second.layers.size() || !state.second.layers[idx])
    return std::nullopt;
  const auto& c = state.config;
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const auto& v = side == Side::kUser ? state.second.layers[idx]->user : state.second.layers[idx]->item;
  return ((v.array() / bias2).sqrt() + c.epsilon).inverse().matrix();
}

void prox_l1_adam(GcnModel& model, const ParamMask& mask, const AdamState& state, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("negative threshold");
  if (lambda == 0.0) return;
  mask.validate(model);
  const double lr = state.config.learning_rate;
  for (std::size_t k = 0; k < mask.layers.size(); ++k) {
    if (!mask.layers[k]) continue;
    const int layer_k = static_cast<int>(k) + 1;
    auto& layer = model.layers[k];
    for (Side side : {Side::kUser, Side::kItem}) {
      auto& w = layer.weights(side);
      const auto& sel = side == Side::kUser ? mask.layers[k]->user : mask.layers[k]->item;
      const auto scale = adam_inverse_scale(state, layer_k, side);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
          if (sel(r, c) != 0.0)
            w(r, c) = soft_threshold(w(r, c), lr * lambda * (scale ? (*scale)(r, c) : 1.0));
    }
  }
}

void prox_filter_groups_adam(GcnModel& model, std::span<const FilterGroup> groups,
                             const AdamState& state, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("negative threshold");
  if (lambda == 0.0) return;
  const double lr = state.config.learning_rate;
  for (const auto& g : groups) {
    auto& layer = model.layer(g.layer);
    auto u = layer.user_weights.row(g.index);
    auto i = layer.item_weights.row(g.index);
    const auto su = adam_inverse_scale(state, g.layer, Side::kUser);
    const auto si = adam_inverse_scale(state, g.layer, Side::kItem);
    double scale = 1.0;
    if (su && si)
      scale = (su->row(g.index).sum() + si->row(g.index).sum()) /
              static_cast<double>(u.size() + i.size());
    const double f = group_shrink_factor(std::sqrt(u.squaredNorm() + i.squaredNorm()),
                                         lr * lambda * scale);
    u *= f;
    i *= f;
  }
}

double group_shrink_factor(double norm, double threshold) {
  if (norm <= threshold || norm == 0.0) return 0.0;
  return 1.0 - threshold / norm;
}

void prox_group(std::vector<Eigen::VectorXd>& groups, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("negative threshold");
  if (threshold == 0.0) return;
  for (auto& g : groups) g *= group_shrink_factor(g.norm(), threshold);
}

void prox_filter_groups(GcnModel& model, std::span<const FilterGroup> groups,
                        double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("negative threshold");
  if (threshold == 0.0) return;
  for (const auto& g : groups) {
    auto& layer = model.layer(g.layer);
    auto u = layer.user_weights.row(g.index);
    auto i = layer.item_weights.row(g.index);
    const double norm = std::sqrt(u.squaredNorm() + i.squaredNorm());
    const double f = group_shrink_factor(norm, threshold);
    u *= f;
    i *= f;
  }
}

double zero_fraction(const GcnModel& model) {
  const auto n = model.num_weights();
  return n == 0 ? 0.0
                : static_cast<double>(model.num_zero_weights()) / static_cast<double>(n);
}

PhaseResult train_phase(GcnModel& model, EmbeddingTable& embeddings,
                        const TrainingData& data, const PhaseSpec& spec,
                        const TrainConfig& config, const Validator& validator) {
  config.validate();
  PhaseResult result;
  if (spec.mask.empty() || config.max_epochs == 0) return result;
  if (data.train.empty()) throw std::invalid_argument("phase '" + spec.name + "' has no training data");
  spec.mask.validate(model);

  Validator validate = validator;
  if (!validate && data.validation) {
    validate = [&](const GcnModel& m, const EmbeddingTable& e) {
      return evaluate_on(m, e, data.graph, *data.validation, config.eval_k).recall;
    };
  }

  Rng rng(config.seed);
  // Fixed triples so the logged training objective is comparable across epochs.
  Rng probe_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  const auto probe = attach_negatives(data.train, data.user_items, data.item_universe,
                                      config.negatives_per_positive, probe_rng)
                         .triples;
  auto probe_loss = [&] {
    return objective(model, embeddings, data.graph, probe, spec.mask, spec.reg).total();
  };
  result.initial_loss = probe_loss();

  AdamState adam;
  adam.config.learning_rate = config.learning_rate;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_val = -std::numeric_limits<double>::infinity();
  std::optional<GcnModel> best_model;
  std::optional<EmbeddingTable> best_embeddings;
  double best_loss = result.initial_loss;
  std::vector<Interaction> chunk;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto stop = std::min(order.size(), start + config.batch_size);
      chunk.clear();
      for (std::size_t n = start; n < stop; ++n) chunk.push_back(data.train[order[n]]);
      const auto batch = attach_negatives(chunk, data.user_items, data.item_universe,
                                          config.negatives_per_positive, rng);
      if (batch.triples.empty()) continue;
      const auto grads =
          gradient(model, embeddings, data.graph, batch.triples, spec.mask, spec.reg);
      adam_step(model, embeddings, grads, spec.mask, adam);
      const auto& l1_mask = spec.prox.l1_mask ? *spec.prox.l1_mask : spec.mask;
      if (spec.prox.l1 > 0.0) {
        if (config.prox_scaling == ProxScaling::kAdam)
          prox_l1_adam(model, l1_mask, adam, spec.prox.l1);
        else
          prox_l1(model, l1_mask, config.learning_rate * spec.prox.l1);
      }
      if (spec.prox.group > 0.0) {
        if (config.prox_scaling == ProxScaling::kAdam)
          prox_filter_groups_adam(model, spec.prox.groups, adam, spec.prox.group);
        else
          prox_filter_groups(model, spec.prox.groups, config.learning_rate * spec.prox.group);
      }
    }

    EpochRecord rec;
    rec.phase = spec.name;
    rec.epoch = epoch;
    rec.train_loss = probe_loss();
    rec.zero_fraction = zero_fraction(model);
    rec.val_recall = validate ? validate(model, embeddings) : 0.0;
    result.trace.push_back(rec);

    if (!validate) {
      result.best_epoch = epoch;
      best_loss = rec.train_loss;
      continue;
    }
    if (rec.val_recall > best_val) {
      best_val = rec.val_recall;
      result.best_epoch = epoch;
      best_loss = rec.train_loss;
      best_model = model;
      if (spec.mask.embeddings()) best_embeddings = embeddings;
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }
  if (best_model) model = std::move(*best_model);
  if (best_embeddings) embeddings = std::move(*best_embeddings);
  result.final_loss = best_loss;
  return result;
}

}  // namespace degc
