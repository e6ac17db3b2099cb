#include "doctest.h"

#include "degc/checkpoint.hpp"
#include "degc/io.hpp"
#include "degc/gcn.hpp"
#include "support.hpp"

using namespace degc;
using namespace degc::testing;

namespace {

ConvLayer layer_of(Eigen::MatrixXd w, Activation a) {
  ConvLayer l;
  l.user_weights = w;
  l.item_weights = w;
  l.activation = a;
  return l;
}

struct Fixture {
  GcnModel model;
  EmbeddingTable emb;
  std::vector<Interaction> edges;
  BipartiteGraph graph;
  PropagationGraph pg;
};

Fixture random_fixture(Rng& rng, int d, std::vector<int> widths, std::size_t nu, std::size_t ni,
                       std::size_t n_edges, Variant v = Variant::kNgcf) {
  Fixture f;
  f.model = GcnModel::create(v, d, widths, rng);
  f.emb = random_embeddings(d, nu, ni, rng);
  f.edges = random_edges(nu, ni, n_edges, rng);
  f.graph = build_bipartite_graph(f.edges);
  std::vector<NodeId> us(nu), is(ni);
  for (NodeId n = 0; n < nu; ++n) us[n] = n;
  for (NodeId n = 0; n < ni; ++n) is[n] = n;
  f.pg = PropagationGraph::build(f.graph, us, is);
  return f;
}

}  // namespace

TEST_SUITE("gcn_core") {

TEST_CASE("mean aggregation") {
  std::vector<Eigen::VectorXd> v{vec({1, 3}), vec({3, 5})};
  CHECK(aggregate_neighbors(v, 2) == vec({2, 4}));
  CHECK(aggregate_neighbors({}, 3) == Eigen::VectorXd::Zero(3));
  std::vector<Eigen::VectorXd> bad{vec({1, 2}), vec({1})};
  CHECK_THROWS_AS(aggregate_neighbors(bad, 2), std::invalid_argument);
}

TEST_CASE("aggregation of seven random vectors equals the looped sum") {
  Rng rng(1);
  std::vector<Eigen::VectorXd> v;
  for (int n = 0; n < 7; ++n) v.push_back(random_vector(5, rng));
  const auto got = aggregate_neighbors(v, 5);
  for (int c = 0; c < 5; ++c) {
    double s = 0.0;
    for (const auto& x : v) s += x(c);
    CHECK(got(c) == doctest::Approx(s / 7).epsilon(1e-15));
  }
}

TEST_CASE("layer forward examples") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 4);
  w(0, 0) = 1;
  w(1, 1) = 1;
  const auto id = layer_of(w, Activation::kIdentity);
  CHECK(layer_forward(id, vec({1, 2}), vec({0, 0}), Side::kUser) == vec({1, 2}));
  const auto zero = layer_of(Eigen::MatrixXd::Zero(3, 4), Activation::kTanh);
  CHECK(layer_forward(zero, vec({5, -2}), vec({7, 1}), Side::kItem) == Eigen::VectorXd::Zero(3));
  CHECK_THROWS_AS(layer_forward(id, vec({1, 2, 3}), vec({0, 0}), Side::kUser), std::invalid_argument);
}

TEST_CASE("random 4x2 layer matches a naive matvec") {
  Rng rng(2);
  for (Activation a : {Activation::kTanh, Activation::kIdentity}) {
    ConvLayer l;
    l.activation = a;
    l.user_weights = Eigen::MatrixXd::Random(4, 4);
    l.item_weights = Eigen::MatrixXd::Random(4, 4);
    const auto self = random_vector(2, rng), nb = random_vector(2, rng);
    for (Side side : {Side::kUser, Side::kItem}) {
      const auto got = layer_forward(l, self, nb, side);
      const auto& w = l.weights(side);
      for (int r = 0; r < 4; ++r) {
        double s = 0;
        for (int c = 0; c < 2; ++c) s += w(r, c) * self(c) + w(r, 2 + c) * nb(c);
        CHECK(std::abs(got(r) - activate(a, s)) < 1e-12);
      }
    }
  }
}

TEST_CASE("one layer on a single edge, unrolled by hand") {
  GcnModel m;
  m.variant = Variant::kNgcf;
  m.embedding_dim = 2;
  Eigen::MatrixXd w(2, 4);
  w << 1, 0, 0.5, 0, 0, 1, 0, 0.5;
  m.layers.push_back(layer_of(w, Activation::kTanh));
  EmbeddingTable emb(2, 1, 1);
  emb.set_user(0, vec({0.2, -0.4}));
  emb.set_item(0, vec({0.6, 0.8}));
  const auto g = build_bipartite_graph({{0, 0, 0}});
  const auto pg = PropagationGraph::build(g);
  const auto fp = model_forward(m, pg, emb);
  const auto u = fp.user(0);
  REQUIRE(u.size() == 4);
  CHECK(u(0) == 0.2);
  CHECK(u(1) == -0.4);
  CHECK(u(2) == doctest::Approx(std::tanh(0.2 + 0.3)).epsilon(1e-15));
  CHECK(u(3) == doctest::Approx(std::tanh(-0.4 + 0.4)).epsilon(1e-15));
}

TEST_CASE("isolated nodes see a zero neighbour part at every layer") {
  Rng rng(3);
  auto m = GcnModel::create(Variant::kNgcf, 3, {4, 2}, rng);
  EmbeddingTable emb = random_embeddings(3, 2, 2, rng);
  const auto g = build_bipartite_graph({{0, 0, 0}});
  const std::vector<NodeId> extra_u{1}, extra_i{1};
  const auto pg = PropagationGraph::build(g, extra_u, extra_i);
  const auto fp = model_forward(m, pg, emb);
  Eigen::VectorXd h = emb.users.row(1).transpose();
  for (int k = 1; k <= 2; ++k) h = layer_forward(m.layer(k), h, Eigen::VectorXd::Zero(h.size()), Side::kUser);
  CHECK((fp.user(1).tail(2) - h).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("property: forward equals the recursive oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 1 + trial % 5;
    std::vector<int> widths;
    for (int k = 0; k < 1 + trial % 3; ++k) widths.push_back(1 + (trial + k) % 6);
    const auto v = trial % 2 ? Variant::kLightGcnDense : Variant::kNgcf;
    auto f = random_fixture(rng, d, widths, 4, 5, 8, v);
    RecursiveForward oracle(f.model, f.graph, f.emb);
    const auto fp = model_forward(f.model, f.pg, f.emb);
    for (NodeId u = 0; u < 4; ++u) {
      const auto want = oracle.representation(Side::kUser, u);
      const auto got = fp.user(u);
      REQUIRE(got.size() == static_cast<Eigen::Index>(want.size()));
      for (std::size_t c = 0; c < want.size(); ++c) CHECK(std::abs(got(static_cast<Eigen::Index>(c)) - want[c]) < 1e-12);
    }
    for (NodeId i = 0; i < 5; ++i) {
      const auto want = oracle.representation(Side::kItem, i);
      const auto got = fp.item(i);
      for (std::size_t c = 0; c < want.size(); ++c) CHECK(std::abs(got(static_cast<Eigen::Index>(c)) - want[c]) < 1e-12);
    }
  }
}

TEST_CASE("two layers on a three-node path match the recursive oracle") {
  Rng rng(5);
  auto m = GcnModel::create(Variant::kNgcf, 2, {3, 2}, rng);
  auto emb = random_embeddings(2, 2, 1, rng);
  const auto g = build_bipartite_graph({{0, 0, 0}, {1, 0, 1}});  // u0 - i0 - u1
  const auto pg = PropagationGraph::build(g);
  const auto fp = model_forward(m, pg, emb);
  RecursiveForward oracle(m, g, emb);
  for (NodeId u : {0u, 1u}) {
    const auto want = oracle.representation(Side::kUser, u);
    for (std::size_t c = 0; c < want.size(); ++c)
      CHECK(std::abs(fp.user(u)(static_cast<Eigen::Index>(c)) - want[c]) < 1e-12);
  }
}

TEST_CASE("a graph node without an embedding is an error") {
  Rng rng(6);
  auto m = GcnModel::create(Variant::kNgcf, 2, {2}, rng);
  EmbeddingTable emb(2, 1, 0);
  emb.set_user(0, vec({1, 1}));
  const auto pg = PropagationGraph::build(build_bipartite_graph({{0, 0, 0}}));
  CHECK_THROWS_AS(model_forward(m, pg, emb), DataError);
}

TEST_CASE("score examples") {
  CHECK(score_pair(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(score_pair(vec({1, 2}), vec({3, 4})) == 11.0);
  CHECK_THROWS_AS(score_pair(vec({1}), vec({1, 2})), std::invalid_argument);
  Rng rng(7);
  const auto a = random_vector(37, rng), b = random_vector(37, rng);
  double s = 0;
  for (int c = 0; c < 37; ++c) s += a(c) * b(c);
  CHECK(std::abs(score_pair(a, b) - s) < 1e-12);
}

TEST_CASE("BPR loss examples") {
  const std::vector<double> p{0.3}, n{0.3};
  CHECK(std::abs(bpr_loss(p, n) - std::log(2.0)) < 1e-12);
  const std::vector<double> hi{30.0}, lo{0.0};
  CHECK(bpr_loss(hi, lo) < 1e-12);
  CHECK(std::isfinite(bpr_loss(std::vector<double>{-800.0}, std::vector<double>{800.0})));
  Rng rng(8);
  std::vector<double> ps, ns;
  double naive = 0;
  for (int k = 0; k < 5; ++k) {
    ps.push_back(random_vector(1, rng, 3)(0));
    ns.push_back(random_vector(1, rng, 3)(0));
    naive += -std::log(1.0 / (1.0 + std::exp(-(ps.back() - ns.back()))));
  }
  CHECK(std::abs(bpr_loss(ps, ns) - naive / 5) < 1e-10);
  CHECK_THROWS_AS(bpr_loss(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(bpr_loss(std::vector<double>{1.0}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("empty mask gives an empty gradient") {
  Rng rng(9);
  auto f = random_fixture(rng, 3, {2}, 2, 3, 4);
  const auto batch = random_triples(f.edges, 3, 4, rng);
  const auto g = gradient(f.model, f.emb, f.pg, batch, ParamMask::none(f.model), {});
  CHECK(g.empty());
}

TEST_CASE("single edge, one layer: every gradient entry matches central differences") {
  Rng rng(10);
  auto f = random_fixture(rng, 3, {3}, 1, 2, 1);
  const std::vector<Triple> batch{{0, f.edges[0].item, f.edges[0].item == 0 ? 1u : 0u}};
  const auto r = finite_difference_check(f.model, f.emb, f.pg, batch, {});
  CHECK(r.failures == 0);
  CHECK(r.worst_rel < 1e-4);
}

TEST_CASE("property: gradients of BPR + L2 match central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int d = 1 + trial % 8;
    std::vector<int> widths{1 + trial % 4};
    if (trial % 2) widths.push_back(1 + (trial / 2) % 5);
    const auto v = trial % 3 == 0 ? Variant::kLightGcnDense : Variant::kNgcf;
    auto f = random_fixture(rng, d, widths, 3 + trial % 3, 4, 8, v);
    const auto batch = random_triples(f.edges, 4, 5, rng);
    RegSpec reg{0.05 * (trial % 3), 0.02 * (trial % 2)};
    const auto r = finite_difference_check(f.model, f.emb, f.pg, batch, reg);
    CHECK_MESSAGE(r.failures == 0, "trial " << trial << " worst " << r.worst_rel);
  }
}

TEST_CASE("a layer-K mask leaves lower layers without gradient") {
  Rng rng(12);
  auto f = random_fixture(rng, 3, {3, 2}, 3, 3, 6);
  const auto batch = random_triples(f.edges, 3, 6, rng);
  const auto mask = ParamMask::only_layer(f.model, 2);
  const auto g = gradient(f.model, f.emb, f.pg, batch, mask, {});
  CHECK_FALSE(g.layers[0].has_value());
  CHECK(g.layers[1].has_value());
  CHECK_FALSE(g.users.has_value());
  const double before = objective(f.model, f.emb, f.pg, batch, mask, {}).total();
  auto perturbed = f.model;
  perturbed.layer(1).user_weights.array() += 0.3;
  CHECK(objective(perturbed, f.emb, f.pg, batch, mask, {}).total() != before);
  const auto g2 = gradient(perturbed, f.emb, f.pg, batch, mask, {});
  CHECK_FALSE(g2.layers[0].has_value());
}

TEST_CASE("a mask shaped for another model is rejected") {
  Rng rng(13);
  auto a = GcnModel::create(Variant::kNgcf, 3, {3, 2}, rng);
  auto b = GcnModel::create(Variant::kNgcf, 3, {4, 2}, rng);
  CHECK_THROWS_AS(ParamMask::all(a, false).validate(b), std::invalid_argument);
  CHECK_THROWS_AS(ParamMask::all(a, false).validate(GcnModel::create(Variant::kNgcf, 3, {3}, rng)),
                  std::invalid_argument);
}

TEST_CASE("property: forward is independent of node insertion order") {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    auto f = random_fixture(rng, 4, {3, 3}, 5, 6, 12);
    auto shuffled = f.edges;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<NodeId> us{4, 2, 0, 3, 1}, is{5, 1, 3, 0, 2, 4};
    const auto pg2 = PropagationGraph::build(build_bipartite_graph(shuffled), us, is);
    const auto a = model_forward(f.model, f.pg, f.emb);
    const auto b = model_forward(f.model, pg2, f.emb);
    for (NodeId u = 0; u < 5; ++u) CHECK(a.user(u) == b.user(u));
    for (NodeId i = 0; i < 6; ++i) CHECK(a.item(i) == b.item(i));
  }
}

TEST_CASE("property: an all-zero filter outputs sigma(0)") {
  Rng rng(15);
  for (Variant v : {Variant::kNgcf, Variant::kLightGcnDense}) {
    auto f = random_fixture(rng, 3, {4, 3}, 4, 4, 8, v);
    f.model.layer(1).user_weights.row(2).setZero();
    f.model.layer(1).item_weights.row(2).setZero();
    const auto fp = model_forward(f.model, f.pg, f.emb);
    const int off = f.model.representation_offset(1);
    for (NodeId u = 0; u < 4; ++u) CHECK(fp.user(u)(off + 2) == 0.0);
    for (NodeId i = 0; i < 4; ++i) CHECK(fp.item(i)(off + 2) == 0.0);
  }
}

TEST_CASE("property: forward works for any width vector") {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> widths;
    const int K = 1 + trial % 4;
    for (int k = 0; k < K; ++k) widths.push_back(1 + static_cast<int>(rng() % 9));
    auto f = random_fixture(rng, 1 + trial % 6, widths, 3, 3, 5);
    const auto fp = model_forward(f.model, f.pg, f.emb);
    CHECK(fp.user(0).size() == f.model.representation_dim());
    CHECK(fp.item(2).size() == f.model.representation_dim());
    CHECK(fp.user(1).allFinite());
  }
}

TEST_CASE("property: the identity-activation layer is linear") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = GcnModel::create(Variant::kLightGcnDense, 3, {4}, rng);
    const auto x = random_vector(3, rng), n = random_vector(3, rng);
    const double alpha = random_vector(1, rng, 5)(0);
    const Eigen::VectorXd a = layer_forward(m.layer(1), alpha * x, alpha * n, Side::kUser);
    const Eigen::VectorXd b = alpha * layer_forward(m.layer(1), x, n, Side::kUser);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(18);
  Checkpoint c;
  c.model = GcnModel::create(Variant::kLightGcnDense, 4, {3, 5}, rng);
  c.embeddings = EmbeddingTable(4, 3, 2);
  c.users.intern("alice");
  c.users.intern("bob");
  c.users.intern("carol");
  c.items.intern("x");
  c.items.intern("y");
  c.embeddings.set_user(0, random_vector(4, rng));
  c.embeddings.set_user(2, random_vector(4, rng));
  c.embeddings.set_item(1, random_vector(4, rng));
  c.temporal = TemporalAttention(4);
  c.temporal.w_ta = random_vector(4, rng);
  c.temporal.last_seen[2] = 3;
  c.temporal.prev_embeddings[2] = random_vector(4, rng);
  c.segment = 7;
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(c, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.model == c.model);
  CHECK(back.segment == 7);
  CHECK(back.temporal.w_ta == c.temporal.w_ta);
  const auto carol = *back.users.find("carol");
  CHECK(back.embeddings.has_user(carol));
  CHECK(back.embeddings.users.row(carol) == c.embeddings.users.row(2));
  CHECK(back.temporal.last_seen.at(carol) == 3);
  CHECK(back.temporal.prev_embeddings.at(carol) == c.temporal.prev_embeddings.at(2));
  CHECK_FALSE(back.users.find("bob").has_value());
  CHECK(back.embeddings.items.row(*back.items.find("y")) == c.embeddings.items.row(1));
}

TEST_CASE("corrupt checkpoints are data errors") {
  const auto dir = scratch_dir("ckpt_bad");
  write_file_atomic(dir / "bad.ckpt", "NOTACKPT");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
}

}  // TEST_SUITE
