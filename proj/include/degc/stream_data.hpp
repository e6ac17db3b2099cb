#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace degc {

/// Dense index of a user or an item inside one stream's vocabulary.
using NodeId = std::uint32_t;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps opaque external identifiers to dense NodeIds in first-seen order.
class IdVocabulary {
 public:
  NodeId intern(std::string_view name);
  std::optional<NodeId> find(std::string_view name) const;
  const std::string& name(NodeId id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, NodeId> index_;
};

struct Interaction {
  NodeId user = 0;
  NodeId item = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionLog {
  std::vector<Interaction> rows;  // file order
  IdVocabulary users;
  IdVocabulary items;
  std::size_t malformed_rows = 0;
};

struct ColumnMapping {
  char delimiter = ',';
  int user_column = 0;
  int item_column = 1;
  int time_column = 2;
  bool skip_header = false;
};

/// Parses delimiter-separated rows. Rows that do not parse are counted in
/// `malformed_rows`. Throws DataError on a missing file or zero parseable rows.
InteractionLog load_interactions(const std::filesystem::path& path,
                                 const ColumnMapping& columns = {});

/// Drops users and items below `min_count` interactions, repeating until
/// stable. A `min_count` of 0 or 1 is a no-op.
std::vector<Interaction> filter_by_count(std::vector<Interaction> rows,
                                         std::size_t min_count);

struct Segment {
  int index = 0;  // 1-based
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive unless closed_end
  bool closed_end = false;
  std::vector<Interaction> interactions;  // one row per (user, item)
  std::vector<NodeId> new_users;
  std::vector<NodeId> new_items;

  bool contains(std::int64_t ts) const {
    return ts >= start && (closed_end ? ts <= end : ts < end);
  }
  std::vector<NodeId> users() const;
  std::vector<NodeId> items() const;
};

/// Cuts the stream into `num_segments` equal-span windows tiling
/// [min_ts, max_ts]. Windows are half-open except the last.
std::vector<Segment> segment_stream(const std::vector<Interaction>& rows,
                                    int num_segments);

/// Collapses repeated (user, item) pairs to their earliest row and sorts by
/// (timestamp, user, item).
std::vector<Interaction> deduplicate(std::vector<Interaction> rows);

/// Fills `new_users` / `new_items` of each segment relative to earlier ones.
void mark_new_entities(std::vector<Segment>& segments);

struct SplitRatios {
  int train = 8;
  int validation = 1;
  int test = 1;
};

struct SplitData {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
};

/// Per-user stratified split. Users with fewer than three interactions go
/// entirely to train.
SplitData split_segment(const Segment& segment, SplitRatios ratios,
                        std::uint64_t seed);

struct BipartiteGraph {
  std::map<NodeId, std::vector<NodeId>> user_neighbors;  // sorted, unique
  std::map<NodeId, std::vector<NodeId>> item_neighbors;

  bool empty() const { return user_neighbors.empty(); }
  std::size_t num_edges() const;
};

BipartiteGraph build_bipartite_graph(const std::vector<Interaction>& rows);

struct UserUserGraph {
  std::map<NodeId, std::vector<NodeId>> neighbors;  // every user of the input
  int co_threshold = 1;
};

/// Users are linked when they share at least `co_threshold` items.
UserUserGraph build_user_user_graph(const std::vector<Interaction>& rows,
                                    int co_threshold = 1);

/// Mean Jaccard overlap of (users + items) between adjacent segments.
double compute_aer(const std::vector<Segment>& segments);

/// Writes one "user,item,timestamp" file per segment, rows sorted.
void dump_segments(const std::vector<Segment>& segments,
                   const IdVocabulary& users, const IdVocabulary& items,
                   const std::filesystem::path& dir);

}  // namespace degc
