#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rntraj/model/gpsformer.hpp"
#include "rntraj/model/subgraph.hpp"
#include "rntraj/numcore/grad_check.hpp"
#include "support.hpp"

using namespace rntraj;
using namespace rntraj::model;
using rntraj::testing::random_tensor;
using rntraj::testing::straight;
using Catch::Approx;

namespace {

const geo::LocalProjection kProj({30.65, 104.05});

geo::LatLon at(double x, double y) { return kProj.to_latlon({x, y}); }

SubGraph with_weights(std::vector<SegIndex> nodes, std::vector<double> w) {
  SubGraph g;
  g.nodes = std::move(nodes);
  g.weights = std::move(w);
  return g;
}

}  // namespace

TEST_CASE("influence at zero, gamma and three gamma") {
  CHECK(influence(0.0, 30.0) == 1.0);
  CHECK(influence(30.0, 30.0) == Approx(0.367879441171).epsilon(1e-11));
  CHECK(influence(90.0, 30.0) == Approx(std::exp(-9.0)).epsilon(1e-12));
  CHECK(influence(90.0, 30.0) == Approx(1.234e-4).epsilon(1e-3));
  CHECK_THROWS_AS(influence(1.0, 0.0), ContractError);
}

TEST_CASE("point beside an isolated segment gives one node and no edges") {
  const RoadNetwork net({straight(1, at(0, 0), at(100, 0)), straight(2, at(0, 2000), at(100, 2000))}, {{1, 2}});
  const auto g = gen_subgraph(net, at(50, 12), 400, 30);
  REQUIRE(g.size() == 1);
  CHECK(g.nodes[0] == 0);
  CHECK(g.edges.empty());
  CHECK(g.weights[0] == Approx(std::exp(-144.0 / 900.0)).epsilon(1e-6));
}

TEST_CASE("a radius covering the whole network returns all of it") {
  const auto sn = rntraj::testing::lattice(3, 3);
  const auto p = at(200, 200);
  const auto g = gen_subgraph(sn.net, p, 5000, 30);
  CHECK(g.size() == sn.net.size());
  CHECK(g.edges.size() == sn.net.edges().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g.weights[i] > 0.0);
    CHECK(g.weights[i] <= 1.0);
  }
}

TEST_CASE("sub-graphs equal a brute-force construction") {
  const auto sn = rntraj::testing::lattice(6, 6, 0.3);
  std::mt19937_64 rng(71);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = rntraj::testing::random_point(sn.net, rng);
    const auto got = gen_subgraph(sn.net, p, 400, 30);
    const auto want = oracle::brute_force_subgraph(sn.net, p, 400, 30);
    std::vector<std::pair<SegIndex, SegIndex>> edges;
    for (auto [a, b] : got.edges) edges.emplace_back(got.nodes[a], got.nodes[b]);
    std::sort(edges.begin(), edges.end());
    bool ok = got.nodes == want.nodes && edges == want.edges;
    for (std::size_t i = 0; ok && i < want.weights.size(); ++i) ok = std::abs(got.weights[i] - want.weights[i]) <= 1e-6;
    if (!ok) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("the radius doubles before giving up") {
  const RoadNetwork net({straight(1, at(0, 0), at(100, 0))}, {});
  CHECK(gen_subgraph(net, at(50, 700), 400, 30).size() == 1);
  CHECK(gen_subgraph(net, at(50, 1500), 400, 30).size() == 1);
  CHECK_THROWS_AS(gen_subgraph(net, at(50, 1700), 400, 30), UnmatchedPointError);
  CHECK_THROWS_AS(gen_subgraph(net, at(50, 0), 0, 30), ContractError);
}

TEST_CASE("pooling a single node returns its embedding") {
  std::mt19937_64 rng(72);
  const auto x = random_tensor(5, 4, rng);
  const auto g = pool_point(with_weights({3}, {0.2}), x);
  for (std::size_t c = 0; c < 4; ++c) CHECK(g(0, c) == Approx(x(3, c)).margin(1e-15));
}

TEST_CASE("equal weights give the plain average") {
  std::mt19937_64 rng(73);
  const auto x = random_tensor(4, 6, rng);
  const auto g = pool_point(with_weights({1, 2}, {0.7, 0.7}), x);
  for (std::size_t c = 0; c < 6; ++c) CHECK(g(0, c) == Approx((x(1, c) + x(2, c)) / 2).margin(1e-15));
}

TEST_CASE("weights one, e^-1 and e^-4 give the weighted mean") {
  std::mt19937_64 rng(74);
  const auto x = random_tensor(3, 5, rng);
  const double w[3] = {1.0, std::exp(-1.0), std::exp(-4.0)};
  const auto g = pool_point(with_weights({0, 1, 2}, {w[0], w[1], w[2]}), x);
  for (std::size_t c = 0; c < 5; ++c) {
    const double want = (w[0] * x(0, c) + w[1] * x(1, c) + w[2] * x(2, c)) / (w[0] + w[1] + w[2]);
    CHECK(g(0, c) == Approx(want).margin(1e-14));
  }
}

TEST_CASE("pooling stays in the hull and ignores weight scale") {
  std::mt19937_64 rng(75);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const auto x = random_tensor(8, 4, rng, -3, 3);
    std::vector<SegIndex> nodes;
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      nodes.push_back(rng() % 8);
      w.push_back(0.01 + 0.99 * nc::uniform01(rng));
    }
    const auto g = pool_point(with_weights(nodes, w), x);
    for (double& v : w) v *= 0.37;
    const auto h = pool_point(with_weights(nodes, w), x);
    for (std::size_t c = 0; c < 4; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (SegIndex s : nodes) {
        lo = std::min(lo, x(s, c));
        hi = std::max(hi, x(s, c));
      }
      CHECK(g(0, c) >= lo - 1e-12);
      CHECK(g(0, c) <= hi + 1e-12);
      CHECK(h(0, c) == Approx(g(0, c)).margin(1e-12));
    }
  }
}

TEST_CASE("pooling rejects non-positive weights") {
  std::mt19937_64 rng(76);
  CHECK_THROWS_AS(pool_point(with_weights({0, 1}, {0.5, 0.0}), random_tensor(2, 2, rng)), ContractError);
}

TEST_CASE("a one-point trajectory yields one graph") {
  const auto sn = rntraj::testing::lattice(3, 3);
  const auto in = build_encoder_input(sn.net, {{at(100, 5), 1000.0}}, 400, 30);
  REQUIRE(in.size() == 1);
  CHECK(in.point_features[0][0] == 0.0);
  std::mt19937_64 rng(77);
  nc::ParamSet ps;
  ModelConfig cfg;
  cfg.d = 8;
  GpsFormer f(ps, cfg, rng);
  const auto bg = make_batch_graph({&in});
  const auto xroad = random_tensor(sn.net.size(), 8, rng);
  const auto h0 = f.initial_sequence(GpsFormer::initial_nodes(xroad, bg), bg);
  CHECK(h0.rows() == 1);
  CHECK(h0.cols() == 8);
}

TEST_CASE("point features are normalized time and grid cell") {
  const auto sn = rntraj::testing::lattice(4, 4);
  const std::vector<traj::GpsPoint> pts{{at(10, 10), 100.0}, {at(300, 10), 130.0}, {at(300, 590), 200.0}};
  const auto in = build_encoder_input(sn.net, pts, 400, 30);
  const auto& grid = sn.net.grid();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto c = grid.clamped_cell_of(pts[i].pos);
    CHECK(in.point_features[i][1] == static_cast<double>(c.x) / grid.m);
    CHECK(in.point_features[i][2] == static_cast<double>(c.y) / grid.n);
    CHECK(in.point_features[i][1] >= 0.0);
    CHECK(in.point_features[i][1] <= 1.0);
  }
  CHECK(in.point_features[1][0] == Approx(0.3));
  CHECK(in.point_features[2][0] == 1.0);
}

TEST_CASE("equal timestamps are rejected") {
  const auto sn = rntraj::testing::lattice(3, 3);
  CHECK_THROWS_AS(build_encoder_input(sn.net, {{at(10, 0), 5.0}, {at(10, 0), 5.0}}, 400, 30), ContractError);
}

TEST_CASE("off-network points report their index") {
  const auto sn = rntraj::testing::lattice(3, 3);
  try {
    build_encoder_input(sn.net, {{at(10, 0), 0.0}, {at(10, 0), 10.0}, {at(5000, 5000), 20.0}}, 400, 30);
    FAIL("expected UnmatchedPointError");
  } catch (const UnmatchedPointError& e) {
    CHECK(e.point_index == 2);
  }
}

TEST_CASE("batched pooling equals per-point pooling") {
  const auto sn = rntraj::testing::lattice(4, 4, 0.3);
  std::mt19937_64 rng(78);
  std::vector<EncoderInput> inputs;
  for (int t = 0; t < 3; ++t) {
    std::vector<traj::GpsPoint> pts;
    for (int i = 0; i < 4; ++i) pts.push_back({rntraj::testing::random_point(sn.net, rng, 0.0), 10.0 * i});
    inputs.push_back(build_encoder_input(sn.net, pts, 400, 30));
  }
  const auto bg = make_batch_graph({&inputs[0], &inputs[1], &inputs[2]});
  CHECK(bg.graphs() == 12);
  const auto xroad = random_tensor(sn.net.size(), 6, rng);
  const auto pooled = GpsFormer::pooled_points(GpsFormer::initial_nodes(xroad, bg), bg);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 4; ++i) {
      const auto want = pool_point(inputs[t].graphs[i], xroad);
      for (std::size_t c = 0; c < 6; ++c) CHECK(pooled(t * 4 + i, c) == Approx(want(0, c)).margin(1e-12));
    }
  std::vector<EncoderInput> shorter{inputs[0]};
  shorter[0].graphs.pop_back();
  shorter[0].point_features.pop_back();
  CHECK_THROWS_AS(make_batch_graph({&inputs[0], &shorter[0]}), ContractError);
}

TEST_CASE("input projection passes finite-difference checks") {
  const auto sn = rntraj::testing::lattice(3, 3);
  std::mt19937_64 rng(79);
  const std::vector<traj::GpsPoint> pts{{at(10, 0), 0.0}, {at(150, 10), 10.0}, {at(200, 180), 20.0}};
  const auto in = build_encoder_input(sn.net, pts, 400, 30);
  const auto bg = make_batch_graph({&in});
  nc::ParamSet ps;
  ModelConfig cfg;
  cfg.d = 8;
  GpsFormer f(ps, cfg, rng);
  const auto xroad = random_tensor(sn.net.size(), 8, rng, -1, 1, true);
  std::vector<nc::Tensor> params{ps.find("gpsformer.input_proj.weight")->tensor,
                                 ps.find("gpsformer.input_proj.bias")->tensor, xroad};
  CHECK(nc::grad_check_params(
            [&] { return nc::sum_all(nc::tanh(f.initial_sequence(GpsFormer::initial_nodes(xroad, bg), bg))); }, params,
            1e-6) < 1e-4);
}
