#include "degc/temporal.hpp"

#include <stdexcept>

namespace degc {

bool operator==(const TemporalAttention& a, const TemporalAttention& b) {
  if (a.w_ta.size() != b.w_ta.size() || a.w_ta != b.w_ta) return false;
  if (a.last_seen != b.last_seen) return false;
  if (a.prev_embeddings.size() != b.prev_embeddings.size()) return false;
  for (auto ia = a.prev_embeddings.begin(), ib = b.prev_embeddings.begin();
       ia != a.prev_embeddings.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.size() != ib->second.size() ||
        ia->second != ib->second)
      return false;
  }
  return true;
}

Eigen::VectorXd estimate_shift(const TemporalAttention& ta, NodeId user, int t) {
  const auto seen = ta.last_seen.find(user);
  if (seen == ta.last_seen.end())
    throw std::out_of_range("user " + std::to_string(user) + " has no history");
  const auto& prev = ta.prev_embeddings.at(user);
  const double dt = static_cast<double>(t - seen->second);
  return (ta.w_ta * dt).cwiseProduct(prev);
}

Eigen::VectorXd fallback_embedding(int dim, double half_width, Rng& rng) {
  std::uniform_real_distribution<double> dist(-half_width, half_width);
  Eigen::VectorXd e(dim);
  for (int c = 0; c < dim; ++c) e[c] = dist(rng);
  return e;
}

InitReport init_user_embeddings(TemporalAttention& ta, int t,
                                const std::vector<NodeId>& active_users,
                                const std::vector<NodeId>& active_items,
                                const UserUserGraph& user_graph,
                                EmbeddingTable& embeddings, Rng& rng,
                                const InitOptions& options) {
  const int d = embeddings.dim;
  if (ta.w_ta.size() != d) throw std::invalid_argument("w_ta dim mismatch");
  InitReport report;
  std::vector<NodeId> fresh;

  // Existing users first, so new users can average their initialised values.
  std::map<NodeId, Eigen::VectorXd> existing;
  for (NodeId u : active_users) {
    if (!ta.tracks(u)) {
      fresh.push_back(u);
      continue;
    }
    const auto& prev = ta.prev_embeddings.at(u);
    Eigen::VectorXd e = prev;
    if (options.temporal_shift) e += estimate_shift(ta, u, t);
    report.existing.push_back({u, prev, t - ta.last_seen.at(u)});
    embeddings.set_user(u, e);
    existing.emplace(u, std::move(e));
  }

  for (NodeId u : fresh) {
    std::vector<Eigen::VectorXd> neighbors;
    if (options.neighbor_init) {
      if (auto it = user_graph.neighbors.find(u); it != user_graph.neighbors.end()) {
        for (NodeId j : it->second) {
          if (auto e = existing.find(j); e != existing.end()) neighbors.push_back(e->second);
        }
      }
    }
    if (neighbors.empty()) {
      embeddings.set_user(u, fallback_embedding(d, options.fallback_half_width, rng));
      report.fallback_users.push_back(u);
    } else {
      embeddings.set_user(u, aggregate_neighbors(neighbors, d));
      report.neighbor_initialized.push_back(u);
    }
  }

  for (NodeId i : active_items) {
    if (embeddings.has_item(i)) continue;
    embeddings.set_item(i, fallback_embedding(d, options.fallback_half_width, rng));
    report.fallback_items.push_back(i);
  }

  for (NodeId u : active_users) {
    ta.last_seen[u] = t;
    ta.prev_embeddings[u] = embeddings.users.row(u).transpose();
  }
  return report;
}

Eigen::VectorXd fit_temporal_attention(const std::vector<ShiftSample>& samples,
                                       double ridge) {
  if (samples.empty()) throw std::invalid_argument("no shift observations");
  const auto d = samples.front().previous.size();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd den = Eigen::VectorXd::Constant(d, ridge);
  for (const auto& s : samples) {
    if (s.previous.size() != d || s.current.size() != d)
      throw std::invalid_argument("shift observation dim mismatch");
    const Eigen::VectorXd x = static_cast<double>(s.dt) * s.previous;
    num += x.cwiseProduct(s.current - s.previous);
    den += x.cwiseProduct(x);
  }
  Eigen::VectorXd w(d);
  for (Eigen::Index c = 0; c < d; ++c) w[c] = den[c] > 0.0 ? num[c] / den[c] : 0.0;
  return w;
}

void commit_segment(TemporalAttention& ta, const InitReport& init,
                    const std::vector<NodeId>& active_users,
                    const EmbeddingTable& embeddings, double ridge, bool refit) {
  if (refit && !init.existing.empty()) {
    std::vector<ShiftSample> samples;
    samples.reserve(init.existing.size());
    for (const auto& obs : init.existing) {
      samples.push_back({obs.previous, obs.dt, embeddings.users.row(obs.user).transpose()});
    }
    ta.w_ta = fit_temporal_attention(samples, ridge);
  }
  for (NodeId u : active_users) ta.prev_embeddings[u] = embeddings.users.row(u).transpose();
}

}  // namespace degc
