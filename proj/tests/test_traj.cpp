#include <catch_amalgamated.hpp>

#include <sstream>

#include "rntraj/traj/trajectory.hpp"
#include "support.hpp"

using namespace rntraj;
using namespace rntraj::traj;
using Catch::Approx;

namespace {

RawTrajectory uniform_track(std::size_t n, double dt = 10.0, long long id = 1) {
  RawTrajectory t;
  t.id = id;
  for (std::size_t i = 0; i < n; ++i) t.points.push_back({{30.65 + 1e-4 * i, 104.05 + 2e-4 * i}, 1000.0 + dt * i});
  return t;
}

}  // namespace

TEST_CASE("stride 8 on 17 points keeps 0, 8, 16") {
  const auto d = downsample(uniform_track(17), 8);
  CHECK(d.kept == std::vector<std::size_t>{0, 8, 16});
  CHECK(d.trajectory.size() == 3);
  CHECK(d.trajectory.points[1].t == 1080.0);
}

TEST_CASE("stride 1 is the identity") {
  const auto src = uniform_track(9);
  const auto d = downsample(src, 1);
  REQUIRE(d.trajectory.size() == src.size());
  for (std::size_t i = 0; i < src.size(); ++i) CHECK(d.trajectory.points[i].pos == src.points[i].pos);
}

TEST_CASE("jittered downsampling is reproducible and keeps endpoints") {
  const auto src = uniform_track(60);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = downsample(src, 8, seed), b = downsample(src, 8, seed);
    CHECK(a.kept == b.kept);
    CHECK(a.kept.front() == 0);
    CHECK(a.kept.back() == 59);
    for (std::size_t i = 1; i + 1 < a.kept.size(); ++i) {
      CHECK(a.kept[i] > a.kept[i - 1]);
      const long long nominal = static_cast<long long>(8 * i);
      CHECK(std::abs(static_cast<long long>(a.kept[i]) - nominal) <= 1);
    }
  }
}

TEST_CASE("downsampling errors") {
  RawTrajectory one;
  one.points.push_back({{30.0, 104.0}, 0.0});
  CHECK_THROWS_AS(downsample(one, 4), ContractError);
  CHECK_THROWS_AS(downsample(uniform_track(5), 0), ContractError);
}

TEST_CASE("interpolating at a midpoint time gives the coordinate midpoint") {
  RawTrajectory t;
  t.points = {{{30.0, 104.0}, 0.0}, {{30.002, 104.004}, 20.0}};
  const auto o = linear_interpolate(t, 10.0);
  REQUIRE(o.size() == 3);
  CHECK(o.points[1].pos.lat == Approx(30.001).margin(1e-12));
  CHECK(o.points[1].pos.lon == Approx(104.002).margin(1e-12));
  CHECK(o.points[0].pos == t.points[0].pos);
  CHECK(o.points[2].pos == t.points[1].pos);
}

TEST_CASE("interpolating collinear uniform points stays collinear") {
  const auto src = uniform_track(3, 40.0);
  const auto o = linear_interpolate(src, 10.0);
  REQUIRE(o.size() == 9);
  for (const auto& p : o.points) {
    const double s = (p.pos.lat - 30.65) / 1e-4;
    CHECK(std::abs(p.pos.lon - (104.05 + 2e-4 * s)) <= 1e-9);
  }
}

TEST_CASE("downsample then interpolate restores the timestamps") {
  for (std::size_t stride : {2, 4, 8, 16}) {
    const auto src = uniform_track(41);
    const auto o = linear_interpolate(downsample(src, stride, stride).trajectory, 10.0);
    REQUIRE(o.size() == src.size());
    for (std::size_t i = 0; i < o.size(); ++i) CHECK(o.points[i].t == Approx(src.points[i].t).margin(1e-9));
  }
}

TEST_CASE("to_gps places points along the polyline") {
  const auto sn = rntraj::testing::lattice(3, 3);
  const auto& seg = sn.net.segment(0);
  MatchedTrajectory mt;
  mt.interval = 10;
  mt.points = {{0, 0.0, 0.0}, {0, roadnet::kMaxRatio, 10.0}};
  const auto g = to_gps(mt, sn.net);
  CHECK(g.points[0].pos == seg.polyline.front());
  CHECK(geo::haversine(g.points[1].pos, seg.polyline.back()) < 1e-6);
  mt.points[1].ratio = 1.0;
  CHECK_THROWS_AS(to_gps(mt, sn.net), ContractError);
}

TEST_CASE("to_gps round trips through projection") {
  const auto sn = rntraj::testing::lattice(4, 4, 0.5);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (int trial = 0; trial < 500; ++trial) {
    const roadnet::SegIndex s = rng() % sn.net.size();
    MatchedTrajectory mt;
    mt.points = {{s, u(rng), 0.0}};
    const auto g = to_gps(mt, sn.net);
    const auto hit = roadnet::point_to_segment_distance(g.points[0].pos, sn.net.segment(s));
    CHECK(hit.distance < 1e-6);
    CHECK(hit.ratio == Approx(mt.points[0].ratio).margin(1e-6));
  }
}

TEST_CASE("matched trajectories enforce a fixed interval") {
  const auto sn = rntraj::testing::lattice(3, 3);
  MatchedTrajectory mt;
  mt.interval = 10;
  mt.points = {{0, 0.1, 0.0}, {1, 0.2, 10.0}, {2, 0.3, 20.0}};
  CHECK_NOTHROW(mt.validate(sn.net));
  mt.points[2].t = 25.0;
  CHECK_THROWS_AS(mt.validate(sn.net), ContractError);
  RawTrajectory r = uniform_track(3);
  r.points[2].t = r.points[1].t;
  CHECK_THROWS_AS(r.validate(), ContractError);
}

TEST_CASE("trajectory files round trip exactly") {
  const auto sn = rntraj::testing::lattice(3, 3);
  std::vector<RawTrajectory> raws{uniform_track(5, 10.0, 7), uniform_track(3, 5.0, 2)};
  std::stringstream rs;
  write_raw_trajectories(rs, raws);
  const auto rb = read_raw_trajectories(rs);
  REQUIRE(rb.size() == 2);
  CHECK(rb[0].id == 2);
  CHECK(rb[1].points[4].pos == raws[0].points[4].pos);

  MatchedTrajectory mt;
  mt.id = 4;
  mt.interval = 10;
  mt.points = {{3, 0.125, 10.0}, {5, 0.1, 20.0}};
  std::stringstream ms;
  write_matched_trajectories(ms, {mt}, sn.net);
  const auto mb = read_matched_trajectories(ms, sn.net);
  REQUIRE(mb.size() == 1);
  CHECK(mb[0].interval == 10.0);
  CHECK(mb[0].points[1].segment == 5);
  CHECK(mb[0].points[1].ratio == 0.1);
}

TEST_CASE("trajectory file errors") {
  const auto sn = rntraj::testing::lattice(3, 3);
  std::istringstream short_line("1 0 30.0\n");
  CHECK_THROWS_AS(read_raw_trajectories(short_line), FormatError);
  std::istringstream backwards("1 10 30 104\n1 5 30 104\n");
  CHECK_THROWS_AS(read_raw_trajectories(backwards), FormatError);
  std::istringstream unknown("1 0 999 0.5\n");
  CHECK_THROWS_AS(read_matched_trajectories(unknown, sn.net), FormatError);
  std::istringstream ratio("1 0 0 1.0\n");
  CHECK_THROWS_AS(read_matched_trajectories(ratio, sn.net), FormatError);
}
