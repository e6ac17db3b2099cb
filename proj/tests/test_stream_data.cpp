#include "doctest.h"

#include <fstream>

#include "degc/eval.hpp"
#include "degc/io.hpp"
#include "degc/stream_data.hpp"
#include "degc/synthetic.hpp"
#include "support.hpp"

using namespace degc;
using degc::testing::scratch_dir;

namespace {

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  const auto dir = scratch_dir("stream_" + name);
  const auto p = dir / "rows.csv";
  std::ofstream(p) << text;
  return p;
}

std::vector<Interaction> rows_of(std::initializer_list<std::tuple<NodeId, NodeId, std::int64_t>> r) {
  std::vector<Interaction> out;
  for (const auto& [u, i, t] : r) out.push_back({u, i, t});
  return out;
}

Segment segment_of(std::vector<Interaction> rows, int index = 1) {
  Segment s;
  s.index = index;
  s.interactions = deduplicate(std::move(rows));
  return s;
}

}  // namespace

TEST_SUITE("stream_data") {

TEST_CASE("three-row csv parses in file order") {
  const auto p = write_text("three", "u1,i1,100\nu1,i2,200\nu2,i1,150\n");
  const auto log = load_interactions(p);
  REQUIRE(log.rows.size() == 3);
  CHECK(log.malformed_rows == 0);
  CHECK(log.users.name(log.rows[0].user) == "u1");
  CHECK(log.items.name(log.rows[1].item) == "i2");
  CHECK(log.rows[2].timestamp == 150);
  CHECK(log.rows[0].item == log.rows[2].item);
}

TEST_CASE("empty file has zero parseable rows") {
  const auto p = write_text("empty", "");
  CHECK_THROWS_WITH_AS(load_interactions(p), doctest::Contains("zero parseable rows"), DataError);
}

TEST_CASE("missing file is a data error") {
  CHECK_THROWS_AS(load_interactions("/nonexistent/rows.csv"), DataError);
}

TEST_CASE("one malformed row among ten valid ones is counted") {
  std::string text;
  for (int n = 0; n < 10; ++n) text += "u" + std::to_string(n % 3) + ",i" + std::to_string(n) + "," + std::to_string(100 * n) + "\n";
  text.insert(text.find('\n', 30) + 1, "u1,i1,abc\n");
  const auto log = load_interactions(write_text("malformed", text));
  CHECK(log.rows.size() == 10);
  CHECK(log.malformed_rows == 1);
}

TEST_CASE("column mapping, delimiter and header") {
  const auto p = write_text("mapping", "ts\titem\tuser\n5\ta\tx\n7\tb\ty\n");
  ColumnMapping m;
  m.delimiter = '\t';
  m.skip_header = true;
  m.time_column = 0;
  m.item_column = 1;
  m.user_column = 2;
  const auto log = load_interactions(p, m);
  REQUIRE(log.rows.size() == 2);
  CHECK(log.users.name(log.rows[1].user) == "y");
  CHECK(log.items.name(log.rows[0].item) == "a");
  CHECK(log.rows[1].timestamp == 7);
}

TEST_CASE("negative timestamps are malformed") {
  const auto log = load_interactions(write_text("negative", "a,b,-5\na,c,3\n"));
  CHECK(log.rows.size() == 1);
  CHECK(log.malformed_rows == 1);
}

TEST_CASE("thirty days cut into thirty one-day segments") {
  std::vector<Interaction> rows;
  const std::int64_t day = 86400;
  for (NodeId d = 0; d < 30; ++d) {
    rows.push_back({d % 4, d, d * day});
    rows.push_back({(d + 1) % 4, d, d * day + day - 1});
  }
  const auto segs = segment_stream(rows, 30);
  REQUIRE(segs.size() == 30);
  for (int t = 0; t < 30; ++t) {
    CHECK(segs[static_cast<std::size_t>(t)].start == t * day);
    CHECK(segs[static_cast<std::size_t>(t)].interactions.size() == 2);
  }
}

TEST_CASE("a single segment holds everything and every user is new") {
  const auto rows = rows_of({{0, 0, 5}, {1, 1, 9}, {2, 0, 1}, {0, 1, 3}});
  const auto segs = segment_stream(rows, 1);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].interactions.size() == 4);
  CHECK(segs[0].new_users == std::vector<NodeId>{0, 1, 2});
  CHECK(segs[0].new_items == std::vector<NodeId>{0, 1});
}

TEST_CASE("twelve interactions over three windows match brute-force assignment") {
  const std::vector<std::int64_t> ts{0, 50, 199, 200, 201, 333, 399, 400, 401, 555, 598, 599};
  std::vector<Interaction> rows;
  for (std::size_t n = 0; n < ts.size(); ++n)
    rows.push_back({static_cast<NodeId>(n % 5), static_cast<NodeId>(n), ts[n]});
  const auto segs = segment_stream(rows, 3);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].start == 0);
  CHECK(segs[0].end == 200);
  CHECK(segs[1].start == 200);
  CHECK(segs[1].end == 400);
  CHECK(segs[2].start == 400);
  CHECK(segs[2].closed_end);
  for (const auto& r : rows) {
    const int expect = r.timestamp < 200 ? 0 : r.timestamp < 400 ? 1 : 2;
    for (int s = 0; s < 3; ++s) {
      const auto& in = segs[static_cast<std::size_t>(s)].interactions;
      const bool found = std::find(in.begin(), in.end(), r) != in.end();
      CHECK(found == (s == expect));
    }
  }
}

TEST_CASE("more segments than distinct timestamps is an error") {
  const auto rows = rows_of({{0, 0, 10}, {1, 1, 12}});
  CHECK_THROWS_AS(segment_stream(rows, 4), DataError);
  CHECK_NOTHROW(segment_stream(rows, 3));
}

TEST_CASE("duplicates within a segment collapse to the earliest row") {
  const auto segs = segment_stream(rows_of({{0, 0, 5}, {0, 0, 2}, {1, 0, 3}}), 1);
  REQUIRE(segs[0].interactions.size() == 2);
  CHECK(segs[0].interactions[0] == Interaction{0, 0, 2});
}

TEST_CASE("new entities are relative to earlier segments") {
  const auto segs = segment_stream(rows_of({{0, 0, 0}, {1, 1, 1}, {0, 2, 2}, {2, 1, 3}}), 2);
  CHECK(segs[1].new_users == std::vector<NodeId>{2});
  CHECK(segs[1].new_items == std::vector<NodeId>{2});
}

TEST_CASE("property: segmentation partitions the stream and tiles the span") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::int64_t> ts(0, 1000 + trial * 37);
    std::vector<Interaction> rows;
    const int n = 20 + trial * 3;
    for (int k = 0; k < n; ++k)
      rows.push_back({static_cast<NodeId>(k % 7), static_cast<NodeId>(k), ts(rng)});
    const int T = 1 + trial % 9;
    const auto segs = segment_stream(rows, T);
    std::size_t total = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      total += segs[s].interactions.size();
      for (const auto& r : segs[s].interactions) CHECK(segs[s].contains(r.timestamp));
      if (s + 1 < segs.size()) CHECK(segs[s].end == segs[s + 1].start);
    }
    CHECK(total == rows.size());  // distinct items per row, so no dedup
    const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(), [](auto& a, auto& b) {
      return a.timestamp < b.timestamp;
    });
    CHECK(segs.front().start == lo->timestamp);
    CHECK(segs.back().end == hi->timestamp);
  }
}

TEST_CASE("user with ten interactions splits 8/1/1") {
  std::vector<Interaction> rows;
  for (NodeId i = 0; i < 10; ++i) rows.push_back({0, i, i});
  const auto split = split_segment(segment_of(rows), {}, 3);
  CHECK(split.train.size() == 8);
  CHECK(split.validation.size() == 1);
  CHECK(split.test.size() == 1);
}

TEST_CASE("user with two interactions goes entirely to train") {
  const auto split = split_segment(segment_of(rows_of({{0, 0, 1}, {0, 1, 2}})), {}, 3);
  CHECK(split.train.size() == 2);
  CHECK(split.validation.empty());
  CHECK(split.test.empty());
}

TEST_CASE("split is deterministic under the seed") {
  std::vector<Interaction> rows;
  for (NodeId u = 0; u < 5; ++u)
    for (NodeId i = 0; i < 12; ++i) rows.push_back({u, i, u * 100 + i});
  const auto seg = segment_of(rows);
  const auto a = split_segment(seg, {}, 1);
  const auto b = split_segment(seg, {}, 1);
  const auto c = split_segment(seg, {}, 2);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.validation == b.validation);
  CHECK(a.test != c.test);
  CHECK(a.train.size() == c.train.size());
  CHECK(a.test.size() == c.test.size());
}

TEST_CASE("property: split conservation and disjointness for any seed") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const auto edges = degc::testing::random_edges(1 + trial % 13, 25, 10 + trial * 2, rng);
    const auto seg = segment_of(edges);
    const auto s = split_segment(seg, {}, rng());
    CHECK(s.train.size() + s.validation.size() + s.test.size() == seg.interactions.size());
    std::set<std::pair<NodeId, NodeId>> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& r : *part) CHECK(seen.insert({r.user, r.item}).second);
    // Every user keeps at least one train row.
    std::set<NodeId> users, train_users;
    for (const auto& r : seg.interactions) users.insert(r.user);
    for (const auto& r : s.train) train_users.insert(r.user);
    CHECK(users == train_users);
  }
}

TEST_CASE("bipartite graph dedups and stays symmetric") {
  const auto g = build_bipartite_graph(rows_of({{1, 1, 0}, {1, 1, 5}, {2, 1, 3}}));
  CHECK(g.user_neighbors.at(1) == std::vector<NodeId>{1});
  CHECK(g.item_neighbors.at(1) == std::vector<NodeId>{1, 2});
  CHECK(build_bipartite_graph({}).empty());
}

TEST_CASE("twenty-edge graph equals a set-based oracle") {
  Rng rng(9);
  std::vector<Interaction> rows;
  std::uniform_int_distribution<NodeId> pick(0, 5);
  for (int k = 0; k < 20; ++k) rows.push_back({pick(rng), pick(rng), k});
  std::map<NodeId, std::set<NodeId>> un, in;
  for (const auto& r : rows) {
    un[r.user].insert(r.item);
    in[r.item].insert(r.user);
  }
  const auto g = build_bipartite_graph(rows);
  REQUIRE(g.user_neighbors.size() == un.size());
  for (const auto& [u, items] : un)
    CHECK(g.user_neighbors.at(u) == std::vector<NodeId>(items.begin(), items.end()));
  for (const auto& [i, users] : in)
    CHECK(g.item_neighbors.at(i) == std::vector<NodeId>(users.begin(), users.end()));
}

TEST_CASE("property: random graphs are symmetric") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = build_bipartite_graph(degc::testing::random_edges(8, 9, 30, rng));
    for (const auto& [u, items] : g.user_neighbors)
      for (NodeId i : items) {
        const auto& back = g.item_neighbors.at(i);
        CHECK(std::binary_search(back.begin(), back.end(), u));
      }
    for (const auto& [i, users] : g.item_neighbors)
      for (NodeId u : users) {
        const auto& fwd = g.user_neighbors.at(u);
        CHECK(std::binary_search(fwd.begin(), fwd.end(), i));
      }
  }
}

TEST_CASE("user-user graph thresholds on shared items") {
  const auto rows = rows_of({{1, 1, 0}, {1, 2, 0}, {2, 2, 0}, {2, 3, 0}});
  const auto g1 = build_user_user_graph(rows, 1);
  CHECK(g1.neighbors.at(1) == std::vector<NodeId>{2});
  CHECK(g1.neighbors.at(2) == std::vector<NodeId>{1});
  const auto g2 = build_user_user_graph(rows, 2);
  CHECK(g2.neighbors.at(1).empty());
  CHECK(g2.neighbors.at(2).empty());
}

TEST_CASE("ten-user co-interaction graph equals the pairwise oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rows = degc::testing::random_edges(10, 8, 35, rng);
    std::map<NodeId, std::set<NodeId>> items;
    for (const auto& r : rows) items[r.user].insert(r.item);
    for (int threshold : {1, 2, 3}) {
      const auto g = build_user_user_graph(rows, threshold);
      for (const auto& [u, iu] : items) {
        std::vector<NodeId> expect;
        for (const auto& [v, iv] : items) {
          if (u == v) continue;
          std::vector<NodeId> common;
          std::set_intersection(iu.begin(), iu.end(), iv.begin(), iv.end(), std::back_inserter(common));
          if (static_cast<int>(common.size()) >= threshold) expect.push_back(v);
        }
        CHECK(g.neighbors.at(u) == expect);
      }
    }
  }
}

TEST_CASE("AER examples") {
  auto seg = [](std::vector<Interaction> rows) { return segment_of(std::move(rows)); };
  // Users and items live in separate namespaces, so {a,b} is user 0 + item 0.
  const auto same = std::vector<Segment>{seg(rows_of({{0, 0, 0}})), seg(rows_of({{0, 0, 1}}))};
  CHECK(compute_aer(same) == doctest::Approx(1.0));
  const auto disjoint = std::vector<Segment>{seg(rows_of({{0, 0, 0}})), seg(rows_of({{1, 1, 1}}))};
  CHECK(compute_aer(disjoint) == doctest::Approx(0.0));
  // Entity sets {a,b}, {b,c}, {c,d}: a = user 0, b = item 0, c = user 1, d = item 1.
  const auto chain = std::vector<Segment>{seg(rows_of({{0, 0, 0}})), seg(rows_of({{1, 0, 1}})),
                                          seg(rows_of({{1, 1, 2}}))};
  CHECK(compute_aer(chain) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(compute_aer({seg(rows_of({{0, 0, 0}}))}), DataError);
}

TEST_CASE("property: AER stays in [0, 1] and is 1 only for identical entity sets") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Segment> segs;
    for (int t = 0; t < 3; ++t) segs.push_back(segment_of(degc::testing::random_edges(4, 4, 5, rng)));
    const double aer = compute_aer(segs);
    CHECK(aer >= 0.0);
    CHECK(aer <= 1.0);
    bool identical = true;
    for (std::size_t t = 0; t + 1 < segs.size(); ++t) {
      auto ents = [](const Segment& s) {
        std::set<std::pair<int, NodeId>> e;
        for (const auto& r : s.interactions) {
          e.insert({0, r.user});
          e.insert({1, r.item});
        }
        return e;
      };
      identical = identical && ents(segs[t]) == ents(segs[t + 1]);
    }
    CHECK((aer == 1.0) == identical);
  }
}

TEST_CASE("min-count filter repeats until stable") {
  // Item 9 has one row; dropping it leaves user 3 with one row, which goes next.
  auto rows = rows_of({{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}, {3, 9, 0}, {3, 0, 0}});
  const auto kept = filter_by_count(rows, 2);
  CHECK(kept.size() == 4);
  for (const auto& r : kept) CHECK(r.user != 3);
  CHECK(filter_by_count(rows, 1).size() == rows.size());
}

TEST_CASE("segment dump writes sorted rows per segment") {
  const auto dir = scratch_dir("dump");
  IdVocabulary users, items;
  users.intern("ub");
  users.intern("ua");
  items.intern("x");
  const auto segs = segment_stream(rows_of({{0, 0, 1}, {1, 0, 0}}), 1);
  dump_segments(segs, users, items, dir);
  const auto text = read_file(dir / "segment_1.csv");
  CHECK(text == "ua,x,0\nub,x,1\n");
}

TEST_CASE("synthetic stream without drift keeps each user's item distribution") {
  SyntheticConfig c;
  c.drift_rate = 0.0;
  c.n_users = 40;
  c.n_items = 60;
  c.num_segments = 5;
  const auto s = generate_synthetic_stream(c);
  for (NodeId u = 0; u < 40; ++u)
    for (int t = 2; t <= 5; ++t) CHECK(s.item_distribution(u, t) == s.item_distribution(u, 1));
}

TEST_CASE("synthetic drift 1 with two clusters alternates the dominant cluster") {
  SyntheticConfig c;
  c.drift_rate = 1.0;
  c.n_clusters = 2;
  c.n_users = 30;
  c.n_items = 20;
  c.num_segments = 6;
  const auto s = generate_synthetic_stream(c);
  for (NodeId u = 0; u < 30; ++u)
    for (int t = 1; t < 6; ++t) CHECK(s.dominant_cluster(u, t) != s.dominant_cluster(u, t + 1));
}

TEST_CASE("synthetic empirical item frequencies follow the latent distribution") {
  SyntheticConfig c;
  c.drift_rate = 0.0;
  c.n_users = 1;
  c.n_items = 12;
  c.n_clusters = 3;
  c.num_segments = 400;
  c.activity = 1.0;
  c.segment_span = 1000;
  const auto s = generate_synthetic_stream(c);
  // Rows within a segment are unique per item, so compare per-segment presence
  // against the inclusion tendency: more likely items show up more often.
  std::vector<double> freq(12, 0.0);
  for (const auto& seg : s.segments())
    for (const auto& r : seg.interactions) freq[r.item] += 1.0;
  const auto p = s.item_distribution(0, 1);
  std::vector<double> pv(p.begin(), p.end());
  CHECK(spearman(pv, freq) > 0.8);
}

TEST_CASE("synthetic streams are deterministic under the seed") {
  SyntheticConfig c;
  c.n_users = 80;
  c.n_items = 50;
  c.seed = 17;
  const auto a = generate_synthetic_stream(c).interactions();
  const auto b = generate_synthetic_stream(c).interactions();
  CHECK(a == b);
  c.seed = 18;
  CHECK(generate_synthetic_stream(c).interactions() != a);
}

TEST_CASE("synthetic counts are validated") {
  SyntheticConfig c;
  c.n_users = 0;
  CHECK_THROWS_AS(generate_synthetic_stream(c), std::invalid_argument);
  c = SyntheticConfig{};
  c.drift_rate = 1.5;
  CHECK_THROWS_AS(generate_synthetic_stream(c), std::invalid_argument);
}

}  // TEST_SUITE
