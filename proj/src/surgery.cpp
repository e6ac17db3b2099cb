#include "degc/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace degc {

void RegConfig::validate() const {
  if (l1 < 0.0 || l2 < 0.0 || group < 0.0 || epsilon < 0.0)
    throw std::invalid_argument("regularisation coefficients must be >= 0");
}

namespace {

std::vector<Eigen::Index> keep_indices(Eigen::Index n, const std::set<int>& drop) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < n; ++j)
    if (!drop.count(static_cast<int>(j))) keep.push_back(j);
  return keep;
}

// Column positions of a layer input that survive when `drop` coordinates of
// the previous layer go away: both the self half and the neighbour half.
std::vector<Eigen::Index> keep_columns(int half, const std::set<int>& drop) {
  std::vector<Eigen::Index> keep;
  for (int h = 0; h < 2; ++h)
    for (int j = 0; j < half; ++j)
      if (!drop.count(j)) keep.push_back(static_cast<Eigen::Index>(h * half + j));
  return keep;
}

double outgoing_norm(const GcnModel& model, int k, int j) {
  const auto& next = model.layer(k + 1);
  const int half = next.input_half();
  double s = 0.0;
  for (const auto* w : {&next.user_weights, &next.item_weights}) {
    s += w->col(j).squaredNorm() + w->col(half + j).squaredNorm();
  }
  return std::sqrt(s);
}

bool incoming_within(const ConvLayer& layer, int j, double epsilon) {
  return layer.user_weights.row(j).cwiseAbs().maxCoeff() <= epsilon &&
         layer.item_weights.row(j).cwiseAbs().maxCoeff() <= epsilon;
}

TrainConfig reseeded(TrainConfig config, Rng& rng) {
  config.seed = rng();
  return config;
}

}  // namespace

PhaseResult train_topmost_sparse(GcnModel& model, EmbeddingTable& embeddings,
                                 const TrainingData& data, const RegConfig& reg,
                                 const TrainConfig& config, Rng& rng,
                                 const Validator& validator) {
  reg.validate();
  if (data.train.empty()) throw std::invalid_argument("topmost training needs data");
  auto& top = model.layer(model.num_layers());
  xavier_init(top.user_weights, rng);
  xavier_init(top.item_weights, rng);
  PhaseSpec spec;
  spec.name = "topmost";
  spec.mask = ParamMask::only_layer(model, model.num_layers());
  spec.prox.l1 = reg.l1;
  return train_phase(model, embeddings, data, spec, config, validator);
}

PruneReport find_dead_filters(const GcnModel& model, double epsilon) {
  const int K = model.num_layers();
  PruneReport report;
  report.epsilon = epsilon;
  report.widths_before = model.widths();
  std::vector<bool> alive_above(static_cast<std::size_t>(model.width(K)), true);
  for (int k = K - 1; k >= 1; --k) {
    const auto& next = model.layer(k + 1);
    const int half = next.input_half();
    std::vector<bool> alive(static_cast<std::size_t>(model.width(k)), false);
    for (int i = 0; i < next.width(); ++i) {
      if (!alive_above[static_cast<std::size_t>(i)]) continue;
      for (const auto* w : {&next.user_weights, &next.item_weights}) {
        for (int j = 0; j < half; ++j) {
          if (std::abs((*w)(i, j)) > epsilon || std::abs((*w)(i, half + j)) > epsilon)
            alive[static_cast<std::size_t>(j)] = true;
        }
      }
    }
    for (int j = 0; j < model.width(k); ++j) {
      (alive[static_cast<std::size_t>(j)] ? report.surviving : report.dead).insert({k, j});
    }
    alive_above = std::move(alive);
  }
  report.widths_after = report.widths_before;
  for (const auto& f : report.dead) --report.widths_after[static_cast<std::size_t>(f.layer - 1)];
  return report;
}

PruneReport guard_empty_layers(const GcnModel& model, PruneReport report) {
  for (int k = 1; k < model.num_layers(); ++k) {
    if (report.widths_after[static_cast<std::size_t>(k - 1)] > 0) continue;
    int best = 0;
    double best_norm = -1.0;
    for (int j = 0; j < model.width(k); ++j) {
      const double n = outgoing_norm(model, k, j);
      if (n > best_norm) {
        best_norm = n;
        best = j;
      }
    }
    report.dead.erase({k, best});
    report.surviving.insert({k, best});
    report.widths_after[static_cast<std::size_t>(k - 1)] = 1;
  }
  return report;
}

void remove_filters(GcnModel& model, const std::set<FilterId>& filters) {
  std::map<int, std::set<int>> by_layer;
  for (const auto& f : filters) {
    if (f.layer < 1 || f.layer > model.num_layers() || f.index < 0 ||
        f.index >= model.width(f.layer))
      throw std::invalid_argument("filter outside the model");
    by_layer[f.layer].insert(f.index);
  }
  if (by_layer.empty()) return;
  for (int k = 1; k <= model.num_layers(); ++k) {
    auto& layer = model.layer(k);
    const auto rows = by_layer.find(k);
    const auto cols = by_layer.find(k - 1);
    if (rows == by_layer.end() && cols == by_layer.end()) continue;
    const auto keep_r = rows == by_layer.end() ? keep_indices(layer.width(), {})
                                               : keep_indices(layer.width(), rows->second);
    const auto keep_c = cols == by_layer.end() ? keep_columns(layer.input_half(), {})
                                               : keep_columns(layer.input_half(), cols->second);
    if (keep_r.empty()) throw std::invalid_argument("removal would empty layer " + std::to_string(k));
    Eigen::MatrixXd u = layer.user_weights(keep_r, keep_c);
    Eigen::MatrixXd i = layer.item_weights(keep_r, keep_c);
    layer.user_weights = std::move(u);
    layer.item_weights = std::move(i);
  }
  model.validate();
}

PruneReport prune_filters(GcnModel& model, const PruneReport& report) {
  if (report.widths_before != model.widths())
    throw std::invalid_argument("prune report was made for a different model");
  for (const auto& f : report.dead) {
    if (f.layer < 1 || f.layer >= model.num_layers() || f.index < 0 ||
        f.index >= model.width(f.layer))
      throw std::invalid_argument("prune report names a filter outside layers 1..K-1");
    if (report.surviving.count(f)) throw std::invalid_argument("filter both dead and surviving");
  }
  PruneReport applied = report;
  applied.widths_after = report.widths_before;
  for (const auto& f : report.dead) --applied.widths_after[static_cast<std::size_t>(f.layer - 1)];
  applied = guard_empty_layers(model, std::move(applied));
  remove_filters(model, applied.dead);
  return applied;
}

PhaseResult refine_ltp(GcnModel& model, EmbeddingTable& embeddings,
                       const TrainingData& data, const RegConfig& reg,
                       const TrainConfig& config, const Validator& validator) {
  reg.validate();
  if (data.train.empty()) throw std::invalid_argument("refinement needs data");
  PhaseSpec spec;
  spec.name = "refine";
  spec.mask = ParamMask::all(model, false);
  spec.reg.weight_l2 = reg.l2;
  return train_phase(model, embeddings, data, spec, config, validator);
}

ExpansionReport expand_layers(GcnModel& model, int n, Rng& rng, double half_width) {
  if (n < 0) throw std::invalid_argument("expansion count must be >= 0");
  ExpansionReport report;
  report.widths_before = model.widths();
  if (n == 0) {
    report.widths_after = report.widths_before;
    return report;
  }
  std::uniform_real_distribution<double> dist(-half_width, half_width);
  int prev_old = model.embedding_dim;
  int prev_new = model.embedding_dim;
  for (int k = 1; k <= model.num_layers(); ++k) {
    auto& layer = model.layer(k);
    const int old_w = layer.width();
    const int new_w = old_w + n;
    for (auto* w : {&layer.user_weights, &layer.item_weights}) {
      Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(new_w, 2 * prev_new);
      grown.block(0, 0, old_w, prev_old) = w->leftCols(prev_old);
      grown.block(0, prev_new, old_w, prev_old) = w->rightCols(prev_old);
      for (int r = old_w; r < new_w; ++r)
        for (int c = 0; c < 2 * prev_new; ++c) grown(r, c) = dist(rng);
      *w = std::move(grown);
    }
    for (int j = old_w; j < new_w; ++j) report.added.insert({k, j});
    prev_old = old_w;
    prev_new = new_w;
  }
  report.widths_after = model.widths();
  model.validate();
  return report;
}

ParamMask expansion_mask(const GcnModel& model, const ExpansionReport& report) {
  ParamMask mask = ParamMask::none(model);
  std::map<int, std::vector<int>> added;
  for (const auto& f : report.added) added[f.layer].push_back(f.index);
  for (int k = 1; k <= model.num_layers(); ++k) {
    const auto& layer = model.layer(k);
    auto sel = LayerSelection::empty_like(layer);
    if (auto it = added.find(k); it != added.end()) {
      for (int j : it->second) {
        sel.user.row(j).setOnes();
        sel.item.row(j).setOnes();
      }
    }
    if (auto it = added.find(k - 1); it != added.end()) {
      const int half = layer.input_half();
      for (int j : it->second) {
        for (int c : {j, half + j}) {
          sel.user.col(c).setOnes();
          sel.item.col(c).setOnes();
        }
      }
    }
    if (sel.any()) mask.layers[static_cast<std::size_t>(k - 1)] = std::move(sel);
  }
  return mask;
}

PhaseResult train_expansion(GcnModel& model, EmbeddingTable& embeddings,
                            const TrainingData& data, const ExpansionReport& report,
                            const RegConfig& reg, const TrainConfig& config,
                            const Validator& validator) {
  reg.validate();
  PhaseSpec spec;
  spec.name = "expansion";
  spec.mask = expansion_mask(model, report);
  spec.prox.l1 = reg.l1;
  spec.prox.group = reg.group;
  for (const auto& f : report.added) spec.prox.groups.push_back({f.layer, f.index});
  return train_phase(model, embeddings, data, spec, config, validator);
}

void prune_expansion(GcnModel& model, ExpansionReport& report, double epsilon) {
  std::set<FilterId> drop;
  report.retained.clear();
  for (const auto& f : report.added) {
    if (incoming_within(model.layer(f.layer), f.index, epsilon)) {
      drop.insert(f);
    } else {
      report.retained.insert(f);
    }
  }
  remove_filters(model, drop);
  // Indices of retained filters shift down past the removed ones.
  std::set<FilterId> renumbered;
  for (const auto& f : report.retained) {
    int shift = 0;
    for (const auto& g : drop)
      if (g.layer == f.layer && g.index < f.index) ++shift;
    renumbered.insert({f.layer, f.index - shift});
  }
  report.retained = std::move(renumbered);
  report.widths_after = model.widths();
}

PhaseResult final_finetune(GcnModel& model, EmbeddingTable& embeddings,
                           const TrainingData& data, const RegConfig& reg,
                           const TrainConfig& config, const Validator& validator) {
  reg.validate();
  PhaseSpec spec;
  spec.name = "finetune";
  spec.mask = ParamMask::all(model, true);
  spec.reg.embedding_l2 = reg.l2;
  spec.prox.l1 = reg.l1;
  spec.prox.l1_mask = ParamMask::all(model, false);
  return train_phase(model, embeddings, data, spec, config, validator);
}

namespace {

std::string join_widths(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

std::string join_filters(const std::set<FilterId>& fs) {
  if (fs.empty()) return "-";
  std::string s;
  for (const auto& f : fs) {
    if (!s.empty()) s += ' ';
    s += std::to_string(f.layer) + ':' + std::to_string(f.index);
  }
  return s;
}

}  // namespace

std::string format_surgery_record(const SurgeryRecord& r) {
  std::ostringstream os;
  os.precision(6);
  os << "segment " << r.segment << '\n';
  os << "  widths_start " << join_widths(r.widths_start) << '\n';
  if (r.prune) {
    os << "  widths_pruned " << join_widths(r.prune->widths_after) << '\n';
    os << "  dead " << join_filters(r.prune->dead) << '\n';
  }
  os << "  widths_expanded " << join_widths(r.widths_expanded) << '\n';
  os << "  retained " << join_filters(r.expansion.retained) << '\n';
  os << "  widths_final " << join_widths(r.widths_final) << '\n';
  os << "  zero_fraction " << r.zero_fraction << '\n';
  for (const auto& p : r.phases) {
    os << "  phase " << p.name << " epochs " << p.epochs << " best_epoch " << p.best_epoch
       << " initial_loss " << p.initial_loss << " final_loss " << p.final_loss << '\n';
  }
  return os.str();
}

SegmentMetrics evaluate_state(const StreamState& state, const SegmentInput& input, int k) {
  return evaluate_on(state.model, state.embeddings, input.data.graph, input.test, k,
                     input.index);
}

SegmentOutcome run_degc_segment(StreamState& state, const SegmentInput& input,
                                const SurgeryConfig& surgery, const TrainConfig& config,
                                Rng& rng) {
  surgery.reg.validate();
  SegmentOutcome out;
  SurgeryRecord rec;
  rec.segment = input.index;

  const bool cold = state.temporal.last_seen.empty();
  InitOptions init_opts;
  init_opts.temporal_shift = surgery.temporal_preference;
  init_opts.neighbor_init = surgery.temporal_preference;
  init_opts.fallback_half_width = surgery.init_half_width;
  const auto init = init_user_embeddings(state.temporal, input.index, input.active_users,
                                         input.known_items, input.user_graph,
                                         state.embeddings, rng, init_opts);

  rec.widths_start = state.model.widths();
  rec.width_trace.push_back(rec.widths_start);
  auto note = [&](const PhaseResult& r, const std::string& name) {
    out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
    rec.phases.push_back({name, static_cast<int>(r.trace.size()), r.best_epoch,
                          r.initial_loss, r.final_loss});
  };

  if (cold) {
    PhaseSpec spec;
    spec.name = "scratch";
    spec.mask = ParamMask::all(state.model, true);
    spec.reg.embedding_l2 = surgery.reg.l2;
    note(train_phase(state.model, state.embeddings, input.data, spec, reseeded(config, rng)),
         "scratch");
  }

  if (surgery.historical_pruning) {
    note(train_topmost_sparse(state.model, state.embeddings, input.data, surgery.reg,
                              reseeded(config, rng), rng),
         "topmost");
    const auto dead = find_dead_filters(state.model, surgery.reg.epsilon);
    rec.prune = prune_filters(state.model, dead);
    rec.width_trace.push_back(state.model.widths());
    note(refine_ltp(state.model, state.embeddings, input.data, surgery.reg,
                    reseeded(config, rng)),
         "refine");
  }

  rec.expansion = expand_layers(state.model, surgery.expansion, rng, surgery.init_half_width);
  rec.widths_expanded = state.model.widths();
  rec.width_trace.push_back(rec.widths_expanded);
  note(train_expansion(state.model, state.embeddings, input.data, rec.expansion, surgery.reg,
                       reseeded(config, rng)),
       "expansion");
  prune_expansion(state.model, rec.expansion, surgery.reg.epsilon);
  rec.width_trace.push_back(state.model.widths());
  note(final_finetune(state.model, state.embeddings, input.data, surgery.reg,
                      reseeded(config, rng)),
       "finetune");

  commit_segment(state.temporal, init, input.active_users, state.embeddings, surgery.ta_ridge,
                 surgery.temporal_preference);

  rec.widths_final = state.model.widths();
  rec.zero_fraction = zero_fraction(state.model);
  out.metrics = evaluate_state(state, input, config.eval_k);
  out.surgery = std::move(rec);
  return out;
}

}  // namespace degc
