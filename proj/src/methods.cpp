#include "degc/methods.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace degc {

namespace {

constexpr std::pair<Method, std::string_view> kNames[] = {
    {Method::kDegcFinetune, "degc_finetune"}, {Method::kFinetune, "finetune"},
    {Method::kUniformReplay, "uniform"},      {Method::kInverseReplay, "inverse"},
    {Method::kStatic, "static"},              {Method::kDegcNoHcp, "degc_no_hcp"},
    {Method::kDegcNoTpm, "degc_no_tpm"},
};

TrainConfig reseeded(TrainConfig config, Rng& rng) {
  config.seed = rng();
  return config;
}

PhaseResult train_everything(StreamState& state, const TrainingData& data,
                             const std::string& name, const MethodConfig& config, Rng& rng) {
  PhaseSpec spec;
  spec.name = name;
  spec.mask = ParamMask::all(state.model, true);
  spec.reg.embedding_l2 = config.surgery.reg.l2;
  return train_phase(state.model, state.embeddings, data, spec, reseeded(config.train, rng));
}

void cold_start(StreamState& state, const std::vector<NodeId>& users,
                const std::vector<NodeId>& items, double h, Rng& rng) {
  const int d = state.embeddings.dim;
  for (NodeId u : users)
    if (!state.embeddings.has_user(u)) state.embeddings.set_user(u, fallback_embedding(d, h, rng));
  for (NodeId i : items)
    if (!state.embeddings.has_item(i)) state.embeddings.set_item(i, fallback_embedding(d, h, rng));
}

SegmentOutcome finish(StreamState& state, const SegmentInput& input, const TrainingData& data,
                      std::vector<EpochRecord> trace, int k) {
  SegmentOutcome out;
  out.trace = std::move(trace);
  out.metrics = evaluate_on(state.model, state.embeddings, data.graph, input.test, k,
                            input.index);
  return out;
}

}  // namespace

std::string method_name(Method m) {
  for (const auto& [method, name] : kNames)
    if (method == m) return std::string(name);
  throw std::logic_error("unnamed method");
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [method, n] : kNames)
    if (n == name) return method;
  return std::nullopt;
}

std::vector<Method> all_methods() {
  std::vector<Method> out;
  for (const auto& [method, name] : kNames) out.push_back(method);
  return out;
}

StreamState fresh_state(const ModelConfig& config, Rng& rng) {
  StreamState s;
  s.model = GcnModel::create(config.variant, config.embedding_dim, config.widths, rng);
  s.embeddings = EmbeddingTable(config.embedding_dim, 0, 0);
  s.temporal = TemporalAttention(config.embedding_dim);
  return s;
}

std::vector<Interaction> sample_replay(const std::vector<Interaction>& history,
                                       std::size_t budget, ReplayWeighting weighting,
                                       Rng& rng) {
  budget = std::min(budget, history.size());
  std::vector<std::size_t> idx(history.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (weighting == ReplayWeighting::kUniform) {
    // Partial Fisher-Yates.
    for (std::size_t n = 0; n < budget; ++n) {
      std::uniform_int_distribution<std::size_t> pick(n, idx.size() - 1);
      std::swap(idx[n], idx[pick(rng)]);
    }
  } else {
    std::map<NodeId, std::size_t> degree;
    for (const auto& r : history) ++degree[r.user];
    // Weighted sampling without replacement: keep the largest log(u) / w.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> key(history.size());
    for (std::size_t n = 0; n < history.size(); ++n) {
      double u = unit(rng);
      while (u == 0.0) u = unit(rng);
      const double w = 1.0 / static_cast<double>(degree[history[n].user]);
      key[n] = std::log(u) / w;
    }
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(budget), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        return key[a] != key[b] ? key[a] > key[b] : a < b;
                      });
  }
  std::vector<Interaction> out;
  out.reserve(budget);
  for (std::size_t n = 0; n < budget; ++n) out.push_back(history[idx[n]]);
  return out;
}

SegmentOutcome run_finetune_step(StreamState& state, const SegmentInput& input,
                                 const MethodConfig& config, Rng& rng) {
  InitOptions plain;
  plain.temporal_shift = false;
  plain.neighbor_init = false;
  plain.fallback_half_width = config.surgery.init_half_width;
  const auto init = init_user_embeddings(state.temporal, input.index, input.active_users,
                                         input.known_items, input.user_graph, state.embeddings,
                                         rng, plain);
  auto r = train_everything(state, input.data, "inherit", config, rng);
  commit_segment(state.temporal, init, input.active_users, state.embeddings,
                 config.surgery.ta_ridge, false);
  return finish(state, input, input.data, std::move(r.trace), config.train.eval_k);
}

SegmentOutcome run_static_step(StreamState& state, const SegmentInput& input,
                               const MethodConfig& config, Rng& rng) {
  cold_start(state, input.active_users, input.known_items, config.surgery.init_half_width, rng);
  std::vector<EpochRecord> trace;
  if (input.index == 1) trace = train_everything(state, input.data, "static", config, rng).trace;
  return finish(state, input, input.data, std::move(trace), config.train.eval_k);
}

SegmentOutcome run_replay_step(StreamState& state, const SegmentInput& input,
                               const std::vector<Interaction>& history,
                               ReplayWeighting weighting, const MethodConfig& config,
                               Rng& rng) {
  const auto budget = static_cast<std::size_t>(
      std::llround(config.replay_fraction * static_cast<double>(input.split.train.size())));
  auto rows = sample_replay(history, budget, weighting, rng);
  rows.insert(rows.end(), input.split.train.begin(), input.split.train.end());
  // The replay sample can repeat a (user, item) pair of this segment.
  std::sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.item, a.timestamp) < std::tie(b.user, b.item, b.timestamp);
  });
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const Interaction& a, const Interaction& b) {
                           return a.user == b.user && a.item == b.item;
                         }),
             rows.end());

  std::set<NodeId> items(input.known_items.begin(), input.known_items.end());
  std::set<NodeId> users;
  for (const auto& r : rows) {
    users.insert(r.user);
    items.insert(r.item);
  }
  const auto data = make_training_data(rows, input.split.validation,
                                       std::vector<NodeId>(items.begin(), items.end()));

  state = fresh_state(config.model, rng);
  cold_start(state, std::vector<NodeId>(users.begin(), users.end()),
             std::vector<NodeId>(items.begin(), items.end()), config.surgery.init_half_width,
             rng);
  auto r = train_everything(state, data, "replay", config, rng);
  return finish(state, input, data, std::move(r.trace), config.train.eval_k);
}

std::vector<SegmentOutcome> run_method(const std::vector<SegmentInput>& segments,
                                       const MethodConfig& config, std::uint64_t seed,
                                       StreamState* final_state) {
  config.train.validate();
  config.surgery.reg.validate();
  Rng rng(seed);
  StreamState state = fresh_state(config.model, rng);
  std::vector<Interaction> history;

  auto step = [&](const SegmentInput& input) {
    SurgeryConfig surgery = config.surgery;
    switch (config.method) {
      case Method::kDegcNoHcp:
        surgery.historical_pruning = false;
        return run_degc_segment(state, input, surgery, config.train, rng);
      case Method::kDegcNoTpm:
        surgery.temporal_preference = false;
        return run_degc_segment(state, input, surgery, config.train, rng);
      case Method::kDegcFinetune:
        return run_degc_segment(state, input, surgery, config.train, rng);
      case Method::kFinetune:
        return run_finetune_step(state, input, config, rng);
      case Method::kStatic:
        return run_static_step(state, input, config, rng);
      case Method::kUniformReplay:
        return run_replay_step(state, input, history, ReplayWeighting::kUniform, config, rng);
      case Method::kInverseReplay:
        return run_replay_step(state, input, history, ReplayWeighting::kInverseDegree, config,
                               rng);
    }
    throw std::logic_error("unknown method");
  };

  std::vector<SegmentOutcome> out;
  for (const auto& input : segments) {
    try {
      out.push_back(step(input));
    } catch (const DataError& e) {
      throw DataError("segment " + std::to_string(input.index) + ": " + e.what());
    }
    history.insert(history.end(), input.split.train.begin(), input.split.train.end());
  }
  if (final_state) *final_state = std::move(state);
  return out;
}

}  // namespace degc
