#pragma once

#include <Eigen/Dense>

#include <map>
#include <vector>

#include "degc/gcn.hpp"
#include "degc/stream_data.hpp"

namespace degc {

/// Per-user temporal preference shift: delta_e = (w_ta * dt) (.) e_prev,
/// where dt counts segments since the user was last active.
struct TemporalAttention {
  Eigen::VectorXd w_ta;
  std::map<NodeId, int> last_seen;
  std::map<NodeId, Eigen::VectorXd> prev_embeddings;

  explicit TemporalAttention(int dim = 0) : w_ta(Eigen::VectorXd::Zero(dim)) {}
  bool tracks(NodeId u) const { return last_seen.count(u) != 0; }

  friend bool operator==(const TemporalAttention& a, const TemporalAttention& b);
};

/// Throws std::out_of_range for an untracked user.
Eigen::VectorXd estimate_shift(const TemporalAttention& ta, NodeId user, int t);

struct InitOptions {
  bool temporal_shift = true;   // apply delta_e for existing users
  bool neighbor_init = true;    // new users from existing user-user neighbours
  double fallback_half_width = 0.01;
};

/// One existing user's state at initialisation, kept so the shift model can
/// be refitted once the segment has been trained.
struct ShiftObservation {
  NodeId user = 0;
  Eigen::VectorXd previous;  // e at t-
  int dt = 0;
};

struct InitReport {
  std::vector<ShiftObservation> existing;
  std::vector<NodeId> neighbor_initialized;
  std::vector<NodeId> fallback_users;
  std::vector<NodeId> fallback_items;
};

/// Segment-start initialisation. Existing active users get e_prev + delta_e;
/// new users get the mean of their existing one-hop neighbours on the
/// user-user graph; the rest, and new items, draw from U(-h, h). Afterwards
/// every active user has last_seen = t and prev_embeddings = its new e.
InitReport init_user_embeddings(TemporalAttention& ta, int t,
                                const std::vector<NodeId>& active_users,
                                const std::vector<NodeId>& active_items,
                                const UserUserGraph& user_graph,
                                EmbeddingTable& embeddings, Rng& rng,
                                const InitOptions& options = {});

/// U(-h, h) vector, the cold-start distribution.
Eigen::VectorXd fallback_embedding(int dim, double half_width, Rng& rng);

struct ShiftSample {
  Eigen::VectorXd previous;  // e at t-
  int dt = 0;
  Eigen::VectorXd current;   // e at t after training
};

/// Per-coordinate closed-form ridge regression of (current - previous) on
/// dt * previous. Throws std::invalid_argument on an empty sample set.
Eigen::VectorXd fit_temporal_attention(const std::vector<ShiftSample>& samples,
                                       double ridge);

/// Refits w_ta from this segment's observations and records the trained
/// embeddings of the active users as their new history.
void commit_segment(TemporalAttention& ta, const InitReport& init,
                    const std::vector<NodeId>& active_users,
                    const EmbeddingTable& embeddings, double ridge, bool refit);

}  // namespace degc
