#include "degc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace degc {

namespace {

double ring_distance(double a, double b, double circumference) {
  double d = std::fmod(std::abs(a - b), circumference);
  return std::min(d, circumference - d);
}

std::size_t sample_index(const std::vector<double>& cumulative, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(),
                             u * cumulative.back());
  return std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
}

}  // namespace

SyntheticStream::SyntheticStream(const SyntheticConfig& config) : config_(config) {
  if (config.n_users < 1 || config.n_items < 1 || config.num_segments < 1 ||
      config.n_clusters < 1) {
    throw std::invalid_argument("synthetic stream counts must be >= 1");
  }
  if (config.drift_rate < 0.0 || config.drift_rate > 1.0) {
    throw std::invalid_argument("drift_rate must lie in [0, 1]");
  }
  if (config.min_interactions < 1 ||
      config.max_interactions < config.min_interactions) {
    throw std::invalid_argument("invalid per-user interaction range");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto C = config.n_clusters;
  const int T = config.num_segments;

  for (std::size_t i = 0; i < config.n_items; ++i)
    items_.intern("i" + std::to_string(i));
  for (std::size_t u = 0; u < config.n_users; ++u)
    users_.intern("u" + std::to_string(u));

  std::vector<std::size_t> perm(config.n_items);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  item_cluster_.resize(config.n_items);
  item_weight_.resize(config.n_items);
  for (std::size_t pos = 0; pos < perm.size(); ++pos) {
    item_cluster_[perm[pos]] = pos % C;
    item_weight_[perm[pos]] =
        1.0 / std::pow(static_cast<double>(pos / C + 1), config.popularity_skew);
  }

  const auto n_initial = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(config.initial_user_fraction *
                                           static_cast<double>(config.n_users))),
      1, config.n_users);
  const auto n_late = config.n_users - n_initial;
  start_position_.resize(config.n_users);
  direction_.resize(config.n_users);
  home_cluster_.resize(config.n_users);
  join_segment_.resize(config.n_users);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    start_position_[u] = unit(rng) * static_cast<double>(C);
    direction_[u] = unit(rng) < 0.5 ? -1 : 1;
    home_cluster_[u] = static_cast<std::size_t>(unit(rng) * C) % C;
    if (u < n_initial || T == 1) {
      join_segment_[u] = 1;
    } else {
      const auto j = u - n_initial;
      join_segment_[u] = 2 + static_cast<int>(j * (T - 1) / n_late);
    }
  }

  segments_.resize(T);
  std::uniform_int_distribution<int> count_dist(config.min_interactions,
                                                config.max_interactions);
  std::uniform_int_distribution<std::int64_t> offset_dist(0,
                                                          config.segment_span - 1);
  for (int t = 1; t <= T; ++t) {
    auto& seg = segments_[t - 1];
    seg.index = t;
    seg.start = (t - 1) * config.segment_span;
    seg.closed_end = (t == T);
    seg.end = seg.closed_end ? t * config.segment_span - 1 : t * config.segment_span;

    std::vector<Interaction> rows;
    for (std::size_t u = 0; u < config.n_users; ++u) {
      if (join_segment_[u] > t) continue;
      if (join_segment_[u] < t && unit(rng) >= config.activity) continue;
      const auto dist = item_distribution(static_cast<NodeId>(u), t);
      std::vector<double> cumulative(dist.size());
      std::partial_sum(dist.begin(), dist.end(), cumulative.begin());
      const int want = count_dist(rng);
      std::set<std::size_t> chosen;
      for (int attempt = 0;
           static_cast<int>(chosen.size()) < want && attempt < 20 * want;
           ++attempt) {
        chosen.insert(sample_index(cumulative, unit(rng)));
      }
      for (std::size_t item : chosen) {
        rows.push_back({static_cast<NodeId>(u), static_cast<NodeId>(item),
                        seg.start + offset_dist(rng)});
      }
    }
    seg.interactions = deduplicate(std::move(rows));
  }
  mark_new_entities(segments_);
}

std::vector<Interaction> SyntheticStream::interactions() const {
  std::vector<Interaction> all;
  for (const auto& seg : segments_)
    all.insert(all.end(), seg.interactions.begin(), seg.interactions.end());
  return all;
}

double SyntheticStream::latent_position(NodeId user, int t) const {
  const double C = static_cast<double>(config_.n_clusters);
  double pos = start_position_.at(user) +
               direction_.at(user) * config_.drift_rate * (t - 1);
  pos = std::fmod(pos, C);
  return pos < 0 ? pos + C : pos;
}

std::size_t SyntheticStream::dominant_cluster(NodeId user, int t) const {
  const double C = static_cast<double>(config_.n_clusters);
  const double pos = latent_position(user, t);
  std::size_t best = 0;
  double best_d = C;
  for (std::size_t c = 0; c < config_.n_clusters; ++c) {
    const double d = ring_distance(static_cast<double>(c), pos, C);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<double> SyntheticStream::cluster_distribution(NodeId user, int t) const {
  const auto C = config_.n_clusters;
  const double pos = latent_position(user, t);
  const double w = config_.kernel_width;
  std::vector<double> p(C);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double d = ring_distance(static_cast<double>(c), pos, static_cast<double>(C));
    p[c] = std::exp(-0.5 * d * d / (w * w));
    total += p[c];
  }
  for (auto& v : p) v *= (1.0 - config_.long_term_weight) / total;
  p[home_cluster_.at(user)] += config_.long_term_weight;
  return p;
}

std::vector<double> SyntheticStream::item_distribution(NodeId user, int t) const {
  const auto clusters = cluster_distribution(user, t);
  std::vector<double> cluster_mass(config_.n_clusters, 0.0);
  for (std::size_t i = 0; i < item_weight_.size(); ++i)
    cluster_mass[item_cluster_[i]] += item_weight_[i];
  std::vector<double> p(item_weight_.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto c = item_cluster_[i];
    p[i] = cluster_mass[c] > 0 ? clusters[c] * item_weight_[i] / cluster_mass[c] : 0.0;
  }
  return p;
}

SyntheticStream generate_synthetic_stream(const SyntheticConfig& config) {
  return SyntheticStream(config);
}

}  // namespace degc
