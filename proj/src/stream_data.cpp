#include "degc/stream_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "degc/io.hpp"

namespace degc {

NodeId IdVocabulary::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<NodeId>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<NodeId> IdVocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(delim, pos);
    out.push_back(line.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

InteractionLog load_interactions(const std::filesystem::path& path,
                                 const ColumnMapping& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());

  InteractionLog log;
  const int needed =
      std::max({columns.user_column, columns.item_column, columns.time_column});
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && columns.skip_header) {
      first = false;
      continue;
    }
    first = false;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, columns.delimiter);
    if (static_cast<int>(fields.size()) <= needed) {
      ++log.malformed_rows;
      continue;
    }
    const auto user = trim(fields[columns.user_column]);
    const auto item = trim(fields[columns.item_column]);
    const auto ts_text = trim(fields[columns.time_column]);
    std::int64_t ts = 0;
    const auto [ptr, ec] =
        std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), ts);
    if (user.empty() || item.empty() || ec != std::errc() ||
        ptr != ts_text.data() + ts_text.size() || ts < 0) {
      ++log.malformed_rows;
      continue;
    }
    log.rows.push_back({log.users.intern(user), log.items.intern(item), ts});
  }
  if (log.rows.empty()) {
    throw DataError("zero parseable rows in " + path.string());
  }
  return log;
}

std::vector<Interaction> filter_by_count(std::vector<Interaction> rows,
                                         std::size_t min_count) {
  if (min_count <= 1) return rows;
  while (true) {
    std::unordered_map<NodeId, std::size_t> users, items;
    for (const auto& r : rows) {
      ++users[r.user];
      ++items[r.item];
    }
    const auto before = rows.size();
    std::erase_if(rows, [&](const Interaction& r) {
      return users[r.user] < min_count || items[r.item] < min_count;
    });
    if (rows.size() == before) return rows;
  }
}

std::vector<NodeId> Segment::users() const {
  std::set<NodeId> s;
  for (const auto& r : interactions) s.insert(r.user);
  return {s.begin(), s.end()};
}

std::vector<NodeId> Segment::items() const {
  std::set<NodeId> s;
  for (const auto& r : interactions) s.insert(r.item);
  return {s.begin(), s.end()};
}

std::vector<Interaction> deduplicate(std::vector<Interaction> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user, a.item, a.timestamp) <
           std::tie(b.user, b.item, b.timestamp);
  });
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const auto& a, const auto& b) {
                           return a.user == b.user && a.item == b.item;
                         }),
             rows.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.timestamp, a.user, a.item) <
           std::tie(b.timestamp, b.user, b.item);
  });
  return rows;
}

void mark_new_entities(std::vector<Segment>& segments) {
  std::set<NodeId> seen_users, seen_items;
  for (auto& seg : segments) {
    seg.new_users.clear();
    seg.new_items.clear();
    for (NodeId u : seg.users())
      if (!seen_users.count(u)) seg.new_users.push_back(u);
    for (NodeId i : seg.items())
      if (!seen_items.count(i)) seg.new_items.push_back(i);
    seen_users.insert(seg.new_users.begin(), seg.new_users.end());
    seen_items.insert(seg.new_items.begin(), seg.new_items.end());
  }
}

std::vector<Segment> segment_stream(const std::vector<Interaction>& rows,
                                    int num_segments) {
  if (num_segments < 1) throw DataError("number of segments must be >= 1");
  if (rows.empty()) throw DataError("cannot segment an empty stream");

  const auto [lo, hi] = std::minmax_element(
      rows.begin(), rows.end(),
      [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  const std::int64_t min_ts = lo->timestamp;
  const std::int64_t max_ts = hi->timestamp;
  const std::int64_t length = max_ts - min_ts + 1;
  if (num_segments > length) {
    throw DataError("requested " + std::to_string(num_segments) +
                    " segments but the stream spans only " +
                    std::to_string(length) + " distinct timestamps");
  }

  // Boundaries min + floor(k * length / T); computed in 128 bits.
  std::vector<std::int64_t> bounds(num_segments + 1);
  for (int k = 0; k <= num_segments; ++k) {
    const __int128 off = static_cast<__int128>(k) * length / num_segments;
    bounds[k] = min_ts + static_cast<std::int64_t>(off);
  }

  std::vector<Segment> segments(num_segments);
  for (int k = 0; k < num_segments; ++k) {
    auto& seg = segments[k];
    seg.index = k + 1;
    seg.start = bounds[k];
    seg.end = (k + 1 == num_segments) ? max_ts : bounds[k + 1];
    seg.closed_end = (k + 1 == num_segments);
  }
  std::vector<std::vector<Interaction>> buckets(num_segments);
  for (const auto& r : rows) {
    auto it = std::upper_bound(bounds.begin() + 1, bounds.end() - 1, r.timestamp);
    buckets[it - (bounds.begin() + 1)].push_back(r);
  }
  for (int k = 0; k < num_segments; ++k) {
    segments[k].interactions = deduplicate(std::move(buckets[k]));
  }
  mark_new_entities(segments);
  return segments;
}

SplitData split_segment(const Segment& segment, SplitRatios ratios,
                        std::uint64_t seed) {
  std::map<NodeId, std::vector<Interaction>> by_user;
  for (const auto& r : segment.interactions) by_user[r.user].push_back(r);

  const double total = ratios.train + ratios.validation + ratios.test;
  std::mt19937_64 rng(seed);
  SplitData out;
  for (auto& [user, rows] : by_user) {
    const auto n = rows.size();
    if (n < 3) {
      out.train.insert(out.train.end(), rows.begin(), rows.end());
      continue;
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    auto share = [&](int part) -> std::size_t {
      if (part <= 0) return 0;
      return std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(n * part / total)));
    };
    const auto n_test = share(ratios.test);
    const auto n_val = share(ratios.validation);
    std::size_t i = 0;
    for (; i < n_test; ++i) out.test.push_back(rows[i]);
    for (; i < n_test + n_val; ++i) out.validation.push_back(rows[i]);
    for (; i < n; ++i) out.train.push_back(rows[i]);
  }
  return out;
}

std::size_t BipartiteGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& [u, items] : user_neighbors) n += items.size();
  return n;
}

BipartiteGraph build_bipartite_graph(const std::vector<Interaction>& rows) {
  BipartiteGraph g;
  for (const auto& r : rows) {
    g.user_neighbors[r.user].push_back(r.item);
    g.item_neighbors[r.item].push_back(r.user);
  }
  auto normalize = [](auto& adj) {
    for (auto& [node, nbrs] : adj) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
  };
  normalize(g.user_neighbors);
  normalize(g.item_neighbors);
  return g;
}

UserUserGraph build_user_user_graph(const std::vector<Interaction>& rows,
                                    int co_threshold) {
  if (co_threshold < 1) throw std::invalid_argument("co_threshold must be >= 1");
  const auto bip = build_bipartite_graph(rows);
  std::map<std::pair<NodeId, NodeId>, int> shared;
  for (const auto& [item, users] : bip.item_neighbors) {
    for (std::size_t a = 0; a < users.size(); ++a)
      for (std::size_t b = a + 1; b < users.size(); ++b)
        ++shared[{users[a], users[b]}];
  }
  UserUserGraph g;
  g.co_threshold = co_threshold;
  for (const auto& [user, items] : bip.user_neighbors) g.neighbors[user];
  for (const auto& [pair, count] : shared) {
    if (count < co_threshold) continue;
    g.neighbors[pair.first].push_back(pair.second);
    g.neighbors[pair.second].push_back(pair.first);
  }
  for (auto& [user, nbrs] : g.neighbors) std::sort(nbrs.begin(), nbrs.end());
  return g;
}

double compute_aer(const std::vector<Segment>& segments) {
  if (segments.size() < 2) throw DataError("AER needs at least two segments");
  // Users and items live in separate id spaces; tag them by side.
  auto entities = [](const Segment& s) {
    std::set<std::pair<int, NodeId>> e;
    for (const auto& r : s.interactions) {
      e.insert({0, r.user});
      e.insert({1, r.item});
    }
    return e;
  };
  double sum = 0.0;
  auto prev = entities(segments.front());
  for (std::size_t t = 1; t < segments.size(); ++t) {
    auto cur = entities(segments[t]);
    std::size_t inter = 0;
    for (const auto& e : cur) inter += prev.count(e);
    const std::size_t uni = prev.size() + cur.size() - inter;
    sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    prev = std::move(cur);
  }
  return sum / static_cast<double>(segments.size() - 1);
}

void dump_segments(const std::vector<Segment>& segments,
                   const IdVocabulary& users, const IdVocabulary& items,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& seg : segments) {
    std::vector<std::tuple<std::string, std::string, std::int64_t>> rows;
    for (const auto& r : seg.interactions)
      rows.emplace_back(users.name(r.user), items.name(r.item), r.timestamp);
    std::sort(rows.begin(), rows.end());
    std::ostringstream out;
    for (const auto& [u, i, ts] : rows) out << u << ',' << i << ',' << ts << '\n';
    write_file_atomic(dir / ("segment_" + std::to_string(seg.index) + ".csv"),
                      out.str());
  }
}

}  // namespace degc
