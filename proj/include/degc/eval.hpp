#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "degc/gcn.hpp"
#include "degc/stream_data.hpp"

namespace degc {

/// |top-k intersect test| / |test|.
double recall_at_k(std::span<const NodeId> ranked, const std::set<NodeId>& test, int k);

/// Binary-relevance NDCG with ideal DCG over min(|test|, k) positions.
double ndcg_at_k(std::span<const NodeId> ranked, const std::set<NodeId>& test, int k);

struct SegmentMetrics {
  int segment = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t n_users = 0;
  int k = 20;
};

/// Users to score, their held-out items, the items to skip for each of them,
/// and the candidate catalogue.
struct EvalTask {
  std::map<NodeId, std::set<NodeId>> held_out;
  std::map<NodeId, std::set<NodeId>> exclude;
  std::vector<NodeId> candidates;
};

EvalTask make_eval_task(const std::vector<Interaction>& held_out,
                        const std::vector<Interaction>& seen,
                        std::vector<NodeId> candidates);

/// Items sorted by descending score, ties by ascending id, excluding `skip`.
std::vector<NodeId> rank_candidates(const Eigen::VectorXd& user_rep,
                                    const RowMatrix& candidate_reps,
                                    std::span<const NodeId> candidate_ids,
                                    const std::set<NodeId>& skip, std::size_t limit);

/// Ranks every candidate for every held-out user with the model's
/// representations on `graph`; nodes outside the graph are propagated with no
/// neighbours. Throws DataError when no user can be evaluated.
SegmentMetrics evaluate_segment(const GcnModel& model, const EmbeddingTable& embeddings,
                                const BipartiteGraph& graph, const EvalTask& task,
                                int k, int segment_index = 0);

/// Same, on a prebuilt propagation graph that already contains every user of
/// the task and every candidate.
SegmentMetrics evaluate_on(const GcnModel& model, const EmbeddingTable& embeddings,
                           const PropagationGraph& graph, const EvalTask& task, int k,
                           int segment_index = 0);

struct StreamSummary {
  double mean_recall = 0.0;
  double mean_ndcg = 0.0;
  std::vector<SegmentMetrics> series;
};

/// Unweighted mean over segments.
StreamSummary aggregate_stream(const std::vector<SegmentMetrics>& series);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace degc
