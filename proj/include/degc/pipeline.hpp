#pragma once

#include <cstdint>
#include <vector>

#include "degc/eval.hpp"
#include "degc/gcn.hpp"
#include "degc/stream_data.hpp"
#include "degc/temporal.hpp"
#include "degc/trainer.hpp"

namespace degc {

/// One segment made ready for training and scoring.
struct SegmentInput {
  int index = 0;
  SplitData split;
  std::vector<NodeId> active_users;  // users with train rows
  std::vector<NodeId> known_items;   // every item of segments 1..index
  UserUserGraph user_graph;          // from train rows
  TrainingData data;                 // train graph, negatives pool, validation
  EvalTask test;                     // scored on data.graph
};

/// Splits every segment with `seed + index` and builds the per-segment graphs
/// and tasks. Items seen in earlier segments stay candidates.
std::vector<SegmentInput> prepare_segments(const std::vector<Segment>& segments,
                                           SplitRatios ratios, std::uint64_t seed,
                                           int co_threshold);

/// What a method carries from one segment to the next.
struct StreamState {
  GcnModel model;
  EmbeddingTable embeddings;
  TemporalAttention temporal;
};

}  // namespace degc
