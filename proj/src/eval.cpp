#include "degc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace degc {

double recall_at_k(std::span<const NodeId> ranked, const std::set<NodeId>& test, int k) {
  if (test.empty()) throw std::invalid_argument("recall of an empty test set");
  const auto n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) hits += test.count(ranked[r]);
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double ndcg_at_k(std::span<const NodeId> ranked, const std::set<NodeId>& test, int k) {
  if (test.empty()) throw std::invalid_argument("NDCG of an empty test set");
  const auto n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    if (test.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  const auto ideal = std::min<std::size_t>(test.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

EvalTask make_eval_task(const std::vector<Interaction>& held_out,
                        const std::vector<Interaction>& seen,
                        std::vector<NodeId> candidates) {
  EvalTask task;
  for (const auto& r : held_out) task.held_out[r.user].insert(r.item);
  for (const auto& r : seen)
    if (task.held_out.count(r.user)) task.exclude[r.user].insert(r.item);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  task.candidates = std::move(candidates);
  return task;
}

std::vector<NodeId> rank_candidates(const Eigen::VectorXd& user_rep,
                                    const RowMatrix& candidate_reps,
                                    std::span<const NodeId> candidate_ids,
                                    const std::set<NodeId>& skip, std::size_t limit) {
  const Eigen::VectorXd scores = candidate_reps * user_rep;
  std::vector<std::size_t> order;
  order.reserve(candidate_ids.size());
  for (std::size_t c = 0; c < candidate_ids.size(); ++c)
    if (!skip.count(candidate_ids[c])) order.push_back(c);
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sb = scores[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return candidate_ids[a] < candidate_ids[b];
  };
  const auto n = std::min(limit, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n),
                    order.end(), better);
  std::vector<NodeId> ranked;
  ranked.reserve(n);
  for (std::size_t r = 0; r < n; ++r) ranked.push_back(candidate_ids[order[r]]);
  return ranked;
}

SegmentMetrics evaluate_on(const GcnModel& model, const EmbeddingTable& embeddings,
                           const PropagationGraph& graph, const EvalTask& task, int k,
                           int segment_index) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const auto fp = model_forward(model, graph, embeddings);
  RowMatrix cand(static_cast<Eigen::Index>(task.candidates.size()), fp.item_rep.cols());
  for (std::size_t c = 0; c < task.candidates.size(); ++c) {
    const auto local = graph.local_item(task.candidates[c]);
    if (!local) throw std::invalid_argument("candidate missing from evaluation graph");
    cand.row(static_cast<Eigen::Index>(c)) = fp.item_rep.row(*local);
  }

  static const std::set<NodeId> kNone;
  SegmentMetrics m;
  m.segment = segment_index;
  m.k = k;
  double recall_sum = 0.0, ndcg_sum = 0.0;
  for (const auto& [user, test] : task.held_out) {
    if (test.empty()) continue;
    const auto local = graph.local_user(user);
    if (!local) throw std::invalid_argument("user missing from evaluation graph");
    auto ex = task.exclude.find(user);
    const auto& skip = ex == task.exclude.end() ? kNone : ex->second;
    const auto ranked = rank_candidates(fp.user_rep.row(*local).transpose(), cand,
                                        task.candidates, skip, static_cast<std::size_t>(k));
    recall_sum += recall_at_k(ranked, test, k);
    ndcg_sum += ndcg_at_k(ranked, test, k);
    ++m.n_users;
  }
  if (m.n_users == 0) throw DataError("no evaluable users");
  m.recall = recall_sum / static_cast<double>(m.n_users);
  m.ndcg = ndcg_sum / static_cast<double>(m.n_users);
  return m;
}

SegmentMetrics evaluate_segment(const GcnModel& model, const EmbeddingTable& embeddings,
                                const BipartiteGraph& graph, const EvalTask& task, int k,
                                int segment_index) {
  std::vector<NodeId> users;
  for (const auto& [u, items] : task.held_out) users.push_back(u);
  const auto pg = PropagationGraph::build(graph, users, task.candidates);
  return evaluate_on(model, embeddings, pg, task, k, segment_index);
}

StreamSummary aggregate_stream(const std::vector<SegmentMetrics>& series) {
  if (series.empty()) throw std::invalid_argument("no segments to aggregate");
  StreamSummary s;
  s.series = series;
  for (const auto& m : series) {
    s.mean_recall += m.recall;
    s.mean_ndcg += m.ndcg;
  }
  s.mean_recall /= static_cast<double>(series.size());
  s.mean_ndcg /= static_cast<double>(series.size());
  return s;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[idx[m]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman needs two equal series of length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace degc
