#include "degc/pipeline.hpp"

#include <set>

namespace degc {

std::vector<SegmentInput> prepare_segments(const std::vector<Segment>& segments,
                                           SplitRatios ratios, std::uint64_t seed,
                                           int co_threshold) {
  std::vector<SegmentInput> out;
  std::set<NodeId> seen_items;
  for (const auto& seg : segments) {
    SegmentInput in;
    in.index = seg.index;
    in.split = split_segment(seg, ratios, seed + static_cast<std::uint64_t>(seg.index));
    if (in.split.train.empty())
      throw DataError("segment " + std::to_string(seg.index) + " has no training rows");
    std::set<NodeId> users;
    for (const auto& r : in.split.train) users.insert(r.user);
    in.active_users.assign(users.begin(), users.end());
    for (const auto& r : seg.interactions) seen_items.insert(r.item);
    in.known_items.assign(seen_items.begin(), seen_items.end());
    in.user_graph = build_user_user_graph(in.split.train, co_threshold);
    in.data = make_training_data(in.split.train, in.split.validation, in.known_items);
    if (!in.split.test.empty()) {
      in.test = make_eval_task(in.split.test, in.split.train, in.known_items);
    }
    out.push_back(std::move(in));
  }
  return out;
}

}  // namespace degc
