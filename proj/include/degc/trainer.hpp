#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "degc/eval.hpp"
#include "degc/gcn.hpp"

namespace degc {

/// How proximal thresholds are scaled after an Adam step. `kAdam` applies
/// the prox in Adam's diagonal metric: coordinate c is thresholded by
/// lr * lambda / (sqrt(v_hat_c) + eps_adam); a group uses the mean of its
/// coordinates' scales. `kPlain` uses lr * lambda everywhere.
enum class ProxScaling { kAdam, kPlain };

struct TrainConfig {
  double learning_rate = 0.001;
  ProxScaling prox_scaling = ProxScaling::kAdam;
  std::size_t batch_size = 1000;
  int max_epochs = 100;
  int patience = 5;
  std::uint64_t seed = 0;
  int negatives_per_positive = 1;
  int eval_k = 20;

  void validate() const;
};

/// Everything a phase trains and validates on. The propagation graph is the
/// training graph plus every node that can appear as a negative or in
/// validation, so all of them have representations.
struct TrainingData {
  std::vector<Interaction> train;
  std::map<NodeId, std::set<NodeId>> user_items;  // current-segment train items
  std::vector<NodeId> item_universe;              // negative pool
  PropagationGraph graph;
  std::optional<EvalTask> validation;
};

TrainingData make_training_data(std::vector<Interaction> train,
                                const std::vector<Interaction>& validation,
                                std::vector<NodeId> item_universe);

struct BatchSample {
  std::vector<Triple> triples;
  std::size_t skipped = 0;  // positives whose user has no valid negative
};

/// Draws a uniform negative outside `exclude`. Falls back to enumeration after
/// `retry_cap` rejections; nullopt when every item is excluded.
std::optional<NodeId> sample_negative(const std::set<NodeId>& exclude,
                                      std::span<const NodeId> universe, Rng& rng,
                                      int retry_cap = 64);

/// Positives uniformly with replacement from `train`, one negative each.
BatchSample sample_bpr_batch(std::span<const Interaction> train,
                             const std::map<NodeId, std::set<NodeId>>& user_items,
                             std::span<const NodeId> universe, std::size_t batch_size,
                             Rng& rng);

/// Attaches `per_positive` negatives to each given positive.
BatchSample attach_negatives(std::span<const Interaction> positives,
                             const std::map<NodeId, std::set<NodeId>>& user_items,
                             std::span<const NodeId> universe, int per_positive,
                             Rng& rng);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  Gradients first;
  Gradients second;
};

/// One bias-corrected Adam update of the masked parameters. Throws
/// std::runtime_error on a non-finite gradient.
void adam_step(GcnModel& model, EmbeddingTable& embeddings, const Gradients& grads,
               const ParamMask& mask, AdamState& state);

double soft_threshold(double w, double threshold);

/// Entry-wise soft threshold, in place.
void prox_l1(Eigen::Ref<Eigen::MatrixXd> w, double threshold);
void prox_l1(GcnModel& model, const ParamMask& mask, double threshold);

/// max(1 - threshold / |g|, 0).
double group_shrink_factor(double norm, double threshold);
void prox_group(std::vector<Eigen::VectorXd>& groups, double threshold);

/// A filter's incoming weights on both sides form one group.
struct FilterGroup {
  int layer = 1;
  int index = 0;
};
void prox_filter_groups(GcnModel& model, std::span<const FilterGroup> groups,
                        double threshold);

/// Per-coordinate factor 1 / (sqrt(v_hat) + eps_adam) of the second-moment
/// estimate, for layer k (1-based) and one side. Empty before the layer's
/// first step.
std::optional<Eigen::MatrixXd> adam_inverse_scale(const AdamState& state, int k, Side side);

/// prox_l1 with thresholds lr * lambda * adam_inverse_scale, entry by entry.
void prox_l1_adam(GcnModel& model, const ParamMask& mask, const AdamState& state, double lambda);
/// prox_filter_groups with threshold lr * lambda * (mean inverse scale of the group).
void prox_filter_groups_adam(GcnModel& model, std::span<const FilterGroup> groups,
                             const AdamState& state, double lambda);

struct ProxSpec {
  double l1 = 0.0;
  std::optional<ParamMask> l1_mask;
  double group = 0.0;
  std::vector<FilterGroup> groups;
};

struct PhaseSpec {
  std::string name;
  ParamMask mask;
  RegSpec reg;
  ProxSpec prox;
};

struct EpochRecord {
  std::string phase;
  int epoch = 0;
  double train_loss = 0.0;
  double val_recall = 0.0;
  double zero_fraction = 0.0;
};

struct PhaseResult {
  std::vector<EpochRecord> trace;
  int best_epoch = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // training objective at the returned parameters
};

using Validator = std::function<double(const GcnModel&, const EmbeddingTable&)>;

/// Seeded epochs of shuffled mini-batch Adam on BPR + differentiable
/// regularisers, each step followed by the proximal operators. Validation
/// Recall@k after every epoch drives early stopping, and the parameters of
/// the best epoch are restored. Without validation the last epoch is kept.
PhaseResult train_phase(GcnModel& model, EmbeddingTable& embeddings,
                        const TrainingData& data, const PhaseSpec& spec,
                        const TrainConfig& config, const Validator& validator = {});

double zero_fraction(const GcnModel& model);

}  // namespace degc
