#pragma once

#include <compare>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "degc/eval.hpp"
#include "degc/gcn.hpp"
#include "degc/pipeline.hpp"
#include "degc/temporal.hpp"
#include "degc/trainer.hpp"

namespace degc {

/// Filter `index` (0-based output coordinate) of convolution layer `layer`.
struct FilterId {
  int layer = 1;
  int index = 0;
  auto operator<=>(const FilterId&) const = default;
};

struct PruneReport {
  std::set<FilterId> dead;       // of layers 1..K-1
  std::set<FilterId> surviving;  // of layers 1..K-1
  double epsilon = 0.0;
  std::vector<int> widths_before;
  std::vector<int> widths_after;
};

struct ExpansionReport {
  std::set<FilterId> added;
  std::set<FilterId> retained;
  std::vector<int> widths_before;  // before expansion
  std::vector<int> widths_after;
};

struct RegConfig {
  double l1 = 0.001;
  double l2 = 0.01;
  double group = 0.01;
  double epsilon = 1e-8;

  void validate() const;
};

/// Reinitialises layer K and trains it alone with BPR and proximal L1;
/// everything else stays bit-identical.
PhaseResult train_topmost_sparse(GcnModel& model, EmbeddingTable& embeddings,
                                 const TrainingData& data, const RegConfig& reg,
                                 const TrainConfig& config, Rng& rng,
                                 const Validator& validator = {});

/// Top-down reachability: a layer-k filter is alive iff an alive layer-(k+1)
/// filter reads it, on either half and either side, with |w| > epsilon.
/// Layer-K filters are always alive and never listed.
PruneReport find_dead_filters(const GcnModel& model, double epsilon);

/// Moves the filter with the largest outgoing norm of every all-dead layer
/// back to `surviving`.
PruneReport guard_empty_layers(const GcnModel& model, PruneReport report);

/// Removes the dead filters and the columns that read them. Applies the
/// empty-layer guard and returns the report that was actually applied.
/// Throws std::invalid_argument if the report does not describe this model.
PruneReport prune_filters(GcnModel& model, const PruneReport& report);

/// Drops filter rows and the columns reading them, layer by layer.
void remove_filters(GcnModel& model, const std::set<FilterId>& filters);

/// All weights with BPR + lambda2 |W|^2, embeddings frozen.
PhaseResult refine_ltp(GcnModel& model, EmbeddingTable& embeddings,
                       const TrainingData& data, const RegConfig& reg,
                       const TrainConfig& config, const Validator& validator = {});

/// Appends `n` filters to every layer. New filters read everything with
/// U(-h, h) weights; old filters read the new coordinates with zeros.
ExpansionReport expand_layers(GcnModel& model, int n, Rng& rng, double half_width = 0.01);

/// Mask of the expansion parameters: the added rows, and every column that
/// reads an added coordinate.
ParamMask expansion_mask(const GcnModel& model, const ExpansionReport& report);

/// Trains the expansion parameters with BPR, proximal L1 and a group
/// shrinkage on each added filter's incoming weights (both sides jointly).
PhaseResult train_expansion(GcnModel& model, EmbeddingTable& embeddings,
                            const TrainingData& data, const ExpansionReport& report,
                            const RegConfig& reg, const TrainConfig& config,
                            const Validator& validator = {});

/// Removes every added filter whose incoming weights are all within epsilon
/// of zero, and fills `report.retained` / `report.widths_after`.
void prune_expansion(GcnModel& model, ExpansionReport& report, double epsilon);

/// Weights and embeddings jointly: BPR + proximal L1 on all weights +
/// lambda2 on embeddings.
PhaseResult final_finetune(GcnModel& model, EmbeddingTable& embeddings,
                           const TrainingData& data, const RegConfig& reg,
                           const TrainConfig& config, const Validator& validator = {});

struct SurgeryConfig {
  RegConfig reg;
  int expansion = 30;
  double ta_ridge = 0.1;
  double init_half_width = 0.01;
  bool historical_pruning = true;
  bool temporal_preference = true;
};

struct PhaseSummary {
  std::string name;
  int epochs = 0;
  int best_epoch = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct SurgeryRecord {
  int segment = 0;
  std::vector<int> widths_start;
  std::optional<PruneReport> prune;
  ExpansionReport expansion;
  std::vector<int> widths_expanded;
  std::vector<int> widths_final;
  double zero_fraction = 0.0;
  std::vector<PhaseSummary> phases;
  std::vector<std::vector<int>> width_trace;  // after every structural step
};

/// One text block per segment for the surgery log.
std::string format_surgery_record(const SurgeryRecord& record);

struct SegmentOutcome {
  SegmentMetrics metrics;
  std::vector<EpochRecord> trace;
  std::optional<SurgeryRecord> surgery;
};

/// Scores the state on the segment's test task.
SegmentMetrics evaluate_state(const StreamState& state, const SegmentInput& input, int k);

/// Full per-segment pipeline: embedding initialisation, topmost sparse
/// training, dead-filter pruning, LTP refinement, expansion training,
/// expansion pruning, joint finetune, temporal-attention refit, test scoring.
/// Disabling historical pruning skips the first three training/pruning steps;
/// disabling temporal preference gives plain embedding inheritance.
SegmentOutcome run_degc_segment(StreamState& state, const SegmentInput& input,
                                const SurgeryConfig& surgery, const TrainConfig& config,
                                Rng& rng);

}  // namespace degc
