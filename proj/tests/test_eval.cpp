#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "rntraj/eval/metrics.hpp"
#include "support.hpp"

using namespace rntraj;
using namespace rntraj::eval;
using traj::MatchedTrajectory;
using Catch::Approx;

namespace {

const geo::LocalProjection kProj({30.65, 104.05});

geo::LatLon at(double x, double y) { return kProj.to_latlon({x, y}); }

MatchedTrajectory matched(long long id, const std::vector<std::pair<SegIndex, double>>& pts) {
  MatchedTrajectory m;
  m.id = id;
  m.interval = 10;
  for (std::size_t i = 0; i < pts.size(); ++i) m.points.push_back({pts[i].first, pts[i].second, 10.0 * double(i)});
  return m;
}

// Set-based precision/recall/F1 computed with std::set operations.
Prf prf_oracle(const std::vector<SegIndex>& t, const std::vector<SegIndex>& p) {
  const std::set<SegIndex> a(t.begin(), t.end()), b(p.begin(), p.end());
  std::size_t inter = 0;
  for (SegIndex s : a) inter += b.count(s);
  Prf r;
  r.recall = a.empty() ? 0 : double(inter) / double(a.size());
  r.precision = b.empty() ? 0 : double(inter) / double(b.size());
  r.f1 = r.recall + r.precision > 0 ? 2 * r.recall * r.precision / (r.recall + r.precision) : 0;
  return r;
}

}  // namespace

TEST_CASE("identical paths score one everywhere") {
  const auto p = path_prf({1, 2, 2, 3}, {1, 2, 2, 3});
  CHECK(p.recall == 1.0);
  CHECK(p.precision == 1.0);
  CHECK(p.f1 == 1.0);
  CHECK(accuracy({1, 2, 2, 3}, {1, 2, 2, 3}) == 1.0);
}

TEST_CASE("disjoint paths score zero") {
  const auto p = path_prf({1, 2}, {3, 4});
  CHECK(p.recall == 0.0);
  CHECK(p.precision == 0.0);
  CHECK(p.f1 == 0.0);
  CHECK(accuracy({1, 2}, {3, 4}) == 0.0);
}

TEST_CASE("overlapping sets abc and bcd give two thirds") {
  const auto p = path_prf({0, 1, 2}, {1, 2, 3});
  CHECK(p.recall == Approx(2.0 / 3.0));
  CHECK(p.precision == Approx(2.0 / 3.0));
  CHECK(p.f1 == Approx(2.0 / 3.0));
}

TEST_CASE("three of four positions match") {
  CHECK(accuracy({1, 2, 3, 4}, {1, 2, 9, 4}) == 0.75);
  CHECK_THROWS_AS(accuracy({1, 2}, {1}), ContractError);
}

TEST_CASE("path scores match a set-based oracle") {
  std::mt19937_64 rng(131);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<SegIndex> t(1 + rng() % 12), p(t.size());
    for (auto& s : t) s = rng() % 8;
    for (auto& s : p) s = rng() % 8;
    const auto got = path_prf(t, p), want = prf_oracle(t, p);
    CHECK(got.recall == Approx(want.recall).margin(1e-15));
    CHECK(got.precision == Approx(want.precision).margin(1e-15));
    CHECK(got.f1 == Approx(want.f1).margin(1e-15));
    CHECK(got.f1 <= std::max(got.recall, got.precision) + 1e-15);
    if (std::set<SegIndex>(t.begin(), t.end()).size() == std::set<SegIndex>(p.begin(), p.end()).size()) {
      CHECK(got.recall == Approx(got.precision).margin(1e-15));
      CHECK(got.f1 == Approx(got.recall).margin(1e-15));
    }
  }
}

TEST_CASE("distance errors of identical and shifted trajectories") {
  const roadnet::RoadNetwork net({rntraj::testing::straight(1, at(0, 0), at(100, 0))}, {});
  mapmatch::Router router(net);
  const auto t = matched(1, {{0, 0.1}, {0, 0.2}, {0, 0.3}});
  const auto same = mae_rmse(t, t, router);
  CHECK(same.mae == 0.0);
  CHECK(same.rmse == 0.0);
  const auto shifted = mae_rmse(t, matched(1, {{0, 0.15}, {0, 0.25}, {0, 0.35}}), router);
  CHECK(shifted.mae == Approx(5.0).margin(1e-6));
  CHECK(shifted.rmse == Approx(5.0).margin(1e-6));
  const auto spread = mae_rmse(t, matched(1, {{0, 0.1}, {0, 0.3}, {0, 0.5}}), router);
  CHECK(spread.mae == Approx(10.0).margin(1e-6));
  CHECK(spread.rmse == Approx(std::sqrt(500.0 / 3.0)).margin(1e-6));
  CHECK(spread.rmse == Approx(12.910).margin(1e-3));
}

TEST_CASE("unreachable pairs are excluded and counted") {
  const roadnet::RoadNetwork net({rntraj::testing::straight(1, at(0, 0), at(100, 0)),
                                  rntraj::testing::straight(2, at(0, 300), at(100, 300))},
                                 {});
  mapmatch::Router router(net);
  const auto e = mae_rmse(matched(1, {{0, 0.1}, {0, 0.2}}), matched(1, {{0, 0.3}, {1, 0.2}}), router);
  CHECK(e.unreachable == 1);
  CHECK(e.counted == 1);
  CHECK(e.mae == Approx(20.0).margin(1e-6));
}

TEST_CASE("network distance takes the shorter direction and matches the oracle") {
  const auto sn = rntraj::testing::lattice(4, 4, 0.3);
  mapmatch::Router router(sn.net);
  std::mt19937_64 rng(132);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    const mapmatch::Location a{rng() % sn.net.size(), u(rng)}, b{rng() % sn.net.size(), u(rng)};
    const double want = std::min(oracle::route_distance(sn.net, a.segment, a.ratio, b.segment, b.ratio),
                                 oracle::route_distance(sn.net, b.segment, b.ratio, a.segment, a.ratio));
    CHECK(network_distance(router, a, b) == Approx(want).margin(1e-6));
    CHECK(network_distance(router, a, b) == Approx(network_distance(router, b, a)).margin(1e-9));
  }
}

TEST_CASE("self comparison has zero error on random trajectories") {
  const auto sn = rntraj::testing::lattice(4, 4, 0.3);
  mapmatch::Router router(sn.net);
  std::mt19937_64 rng(133);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<SegIndex, double>> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({rng() % sn.net.size(), nc::uniform01(rng) * 0.99});
    const auto t = matched(trial, pts);
    const auto e = mae_rmse(t, t, router);
    CHECK(e.mae == 0.0);
    CHECK(e.rmse == 0.0);
  }
}

TEST_CASE("SR at k examples") {
  CHECK(sr_at_k({1.0, 1.0, 1.0}, 0.9) == 1.0);
  CHECK(sr_at_k({0.4, 0.5}, 0.5) == 0.0);
  CHECK(sr_at_k({0.95, 0.6, 0.85}, 0.8) == Approx(2.0 / 3.0));
  std::mt19937_64 rng(134);
  std::vector<double> f(40);
  for (double& v : f) v = nc::uniform01(rng);
  double prev = 1.0;
  for (double k = 0.0; k <= 1.0; k += 0.05) {
    const double s = sr_at_k(f, k);
    CHECK(s <= prev);
    prev = s;
  }
}

TEST_CASE("labeled sub-path is the longest labeled run") {
  std::vector<bool> labels(6, false);
  labels[2] = labels[3] = true;
  const auto t = matched(1, {{0, 0.1}, {2, 0.1}, {1, 0.1}, {2, 0.2}, {3, 0.1}, {3, 0.5}, {4, 0.1}});
  const auto r = labeled_subpath(t, labels);
  REQUIRE(r);
  CHECK(r->first == 3);
  CHECK(r->second == 6);
  CHECK_FALSE(labeled_subpath(matched(2, {{0, 0.1}, {1, 0.1}}), labels));
}

TEST_CASE("evaluate aggregates pairs by id and reports every format") {
  const auto sn = rntraj::testing::lattice(3, 3);
  std::vector<bool> labels(sn.net.size(), false);
  labels[1] = labels[2] = true;
  const std::vector<MatchedTrajectory> truth{matched(1, {{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 0.4}}),
                                             matched(2, {{5, 0.1}, {6, 0.2}, {7, 0.3}, {8, 0.4}})};
  const std::vector<MatchedTrajectory> pred{matched(2, {{5, 0.1}, {6, 0.2}, {9, 0.3}, {8, 0.4}}),
                                            matched(1, {{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 0.4}})};
  const auto rep = evaluate(truth, pred, sn.net, &labels);
  CHECK(rep.n_trajectories == 2);
  CHECK(rep.accuracy == Approx((1.0 + 0.75) / 2));
  CHECK(rep.recall == Approx((1.0 + 0.75) / 2));
  CHECK(rep.n_subpaths == 1);
  CHECK(rep.n_without_subpath == 1);
  CHECK(rep.sr_at_k.at(0.9) == 1.0);
  CHECK(rep.rmse >= rep.mae);
  std::istringstream flat(report_flat(rep));
  const auto kv = parse_flat_report(flat);
  CHECK(kv.at("n_trajectories") == "2");
  CHECK(kv.at("accuracy") == "0.875000");
  CHECK(kv.count("sr_at_0.5") == 1);
  CHECK(report_text(rep).find("f1: ") != std::string::npos);
  const auto csv = report_csv(rep);
  CHECK(csv.rfind("traj_id,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK_THROWS_AS(evaluate(truth, {pred[0]}, sn.net), ContractError);
  std::istringstream broken("recall 0.5\n");
  CHECK_THROWS_AS(parse_flat_report(broken), FormatError);
}
