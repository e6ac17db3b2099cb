#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "degc/stream_data.hpp"

namespace degc {

/// Drifting-preference stream generator.
///
/// Items are partitioned into clusters placed on a ring. Every user keeps a
/// fixed home cluster (long-term preference) and a position on the ring that
/// moves by `drift_rate` clusters per segment (short-term preference). Each
/// segment samples interactions from the mixture of a Gaussian kernel around
/// the current position and the home cluster, with Zipf-like popularity
/// inside a cluster.
struct SyntheticConfig {
  std::size_t n_users = 500;
  std::size_t n_items = 300;
  int num_segments = 10;
  double drift_rate = 0.3;
  std::uint64_t seed = 1;

  std::size_t n_clusters = 10;
  double kernel_width = 0.5;      // std-dev of the short-term kernel, in clusters
  double long_term_weight = 0.3;  // probability mass on the home cluster
  double initial_user_fraction = 0.6;  // rest join evenly over segments 2..T
  double activity = 0.7;  // chance an existing user is active in a segment
  int min_interactions = 8;  // per active user and segment
  int max_interactions = 16;
  double popularity_skew = 0.8;
  std::int64_t segment_span = 86400;
};

class SyntheticStream {
 public:
  explicit SyntheticStream(const SyntheticConfig& config);

  const SyntheticConfig& config() const { return config_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const IdVocabulary& users() const { return users_; }
  const IdVocabulary& items() const { return items_; }

  /// All rows of all segments in time order.
  std::vector<Interaction> interactions() const;

  /// Ring position of the drifting component at segment t (1-based).
  double latent_position(NodeId user, int t) const;
  /// Cluster nearest to the drifting position.
  std::size_t dominant_cluster(NodeId user, int t) const;
  std::vector<double> cluster_distribution(NodeId user, int t) const;
  std::vector<double> item_distribution(NodeId user, int t) const;
  std::size_t item_cluster(NodeId item) const { return item_cluster_.at(item); }
  int join_segment(NodeId user) const { return join_segment_.at(user); }

 private:
  SyntheticConfig config_;
  IdVocabulary users_;
  IdVocabulary items_;
  std::vector<Segment> segments_;
  std::vector<double> start_position_;
  std::vector<int> direction_;
  std::vector<std::size_t> home_cluster_;
  std::vector<int> join_segment_;
  std::vector<std::size_t> item_cluster_;
  std::vector<double> item_weight_;  // popularity inside its cluster
};

SyntheticStream generate_synthetic_stream(const SyntheticConfig& config);

}  // namespace degc
