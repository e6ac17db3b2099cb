#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "degc/pipeline.hpp"
#include "degc/surgery.hpp"

namespace degc {

enum class Method {
  kDegcFinetune,
  kFinetune,
  kUniformReplay,
  kInverseReplay,
  kStatic,
  kDegcNoHcp,
  kDegcNoTpm,
};

std::string method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
std::vector<Method> all_methods();

struct ModelConfig {
  Variant variant = Variant::kNgcf;
  int embedding_dim = 128;
  std::vector<int> widths{128, 128};
};

struct MethodConfig {
  Method method = Method::kDegcFinetune;
  ModelConfig model;
  SurgeryConfig surgery;
  TrainConfig train;
  double replay_fraction = 1.0;  // replay budget as a multiple of |train_t|
};

/// Untrained model and an empty embedding table.
StreamState fresh_state(const ModelConfig& config, Rng& rng);

enum class ReplayWeighting { kUniform, kInverseDegree };

/// Draws `budget` rows without replacement. Inverse-degree weighting gives
/// each row weight 1 / (number of history rows of its user).
std::vector<Interaction> sample_replay(const std::vector<Interaction>& history,
                                       std::size_t budget, ReplayWeighting weighting,
                                       Rng& rng);

/// Inherits everything and trains weights and embeddings on the segment.
SegmentOutcome run_finetune_step(StreamState& state, const SegmentInput& input,
                                 const MethodConfig& config, Rng& rng);

/// Trains at the first segment only; later segments only give unseen nodes a
/// cold-start embedding before scoring.
SegmentOutcome run_static_step(StreamState& state, const SegmentInput& input,
                               const MethodConfig& config, Rng& rng);

/// Retrains from scratch on the segment plus a replay sample of `history`.
SegmentOutcome run_replay_step(StreamState& state, const SegmentInput& input,
                               const std::vector<Interaction>& history,
                               ReplayWeighting weighting, const MethodConfig& config,
                               Rng& rng);

/// Runs one method over every segment with a single seed. Data errors are
/// rethrown with the segment index.
std::vector<SegmentOutcome> run_method(const std::vector<SegmentInput>& segments,
                                       const MethodConfig& config, std::uint64_t seed,
                                       StreamState* final_state = nullptr);

}  // namespace degc
