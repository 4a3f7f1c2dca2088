#include <catch_amalgamated.hpp>

#include <cmath>

#include "rntraj/model/decoder.hpp"
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

ModelConfig tiny(std::size_t d = 6) {
  ModelConfig c;
  c.d = d;
  c.heads = 2;
  return c;
}

const nc::Tensor& param(const nc::ParamSet& ps, const std::string& name) {
  const auto* e = ps.find(name);
  REQUIRE(e);
  return e->tensor;
}

struct Fixture {
  std::mt19937_64 rng{111};
  nc::ParamSet ps;
  std::size_t segments = 7, d = 6;
  Decoder dec{ps, segments, tiny(d), rng};
};

// a = sum_i softmax_i(v . tanh(Wg s + Wh h_i)) h_i for one trajectory.
std::vector<double> attend_reference(const nc::ParamSet& ps, const std::vector<double>& s, const nc::Tensor& h,
                                     std::size_t first, std::size_t count) {
  const auto& v = param(ps, "decoder.attn_v");
  const auto& wg = param(ps, "decoder.attn_Wg.weight");
  const auto& wh = param(ps, "decoder.attn_Wh.weight");
  const std::size_t d = h.cols();
  std::vector<double> mu(count);
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0;
    for (std::size_t c = 0; c < d; ++c) {
      double pre = 0;
      for (std::size_t k = 0; k < d; ++k) pre += s[k] * wg(k, c) + h(first + i, k) * wh(k, c);
      acc += v(c, 0) * std::tanh(pre);
    }
    mu[i] = acc;
  }
  double mx = -INFINITY, z = 0;
  for (double m : mu) mx = std::max(mx, m);
  for (double& m : mu) z += (m = std::exp(m - mx));
  std::vector<double> a(d, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t c = 0; c < d; ++c) a[c] += mu[i] / z * h(first + i, c);
  return a;
}

}  // namespace

TEST_CASE("unobserved rows of the constraint mask are all ones") {
  const auto sn = rntraj::testing::lattice(3, 3);
  const auto& seg = sn.net.segment(4);
  const std::vector<traj::GpsPoint> in{{roadnet::point_at_ratio(seg, 0.2), 100.0},
                                       {roadnet::point_at_ratio(seg, 0.8), 130.0}};
  const std::vector<double> times{100, 110, 120, 130};
  const auto m = build_constraint_mask(sn.net, in, times, 15, 100);
  CHECK(m.observed == std::vector<bool>{true, false, false, true});
  for (std::size_t j : {1, 2})
    for (double v : m.row(j)) CHECK(v == 1.0);
  for (std::size_t j : {0, 3}) {
    double total = 0;
    for (double v : m.row(j)) total += v;
    CHECK(total > 0.0);
    CHECK(m.row(j)[4] == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("a point on one isolated segment masks everything else") {
  const RoadNetwork net({straight(1, at(0, 0), at(100, 0)), straight(2, at(0, 300), at(100, 300)),
                         straight(3, at(500, 0), at(600, 0))},
                        {});
  const auto m = build_constraint_mask(net, {{at(40, 0), 0.0}}, {0.0}, 15, 100);
  CHECK(m.row(0)[0] == Approx(1.0).margin(1e-9));
  CHECK(m.row(0)[1] == 0.0);
  CHECK(m.row(0)[2] == 0.0);
}

TEST_CASE("a point 15 m away with beta 15 gets e^-1") {
  const RoadNetwork net({straight(1, at(0, 0), at(100, 0))}, {});
  const auto m = build_constraint_mask(net, {{at(40, 15), 0.0}}, {0.0}, 15, 100);
  CHECK(m.row(0)[0] == Approx(std::exp(-1.0)).epsilon(1e-4));
}

TEST_CASE("an observation far from every road leaves its row open and warns") {
  const RoadNetwork net({straight(1, at(0, 0), at(100, 0))}, {});
  const auto m = build_constraint_mask(net, {{at(40, 0), 0.0}, {at(40, 400), 10.0}}, {0.0, 10.0}, 15, 100);
  CHECK(m.row(1)[0] == 1.0);
  CHECK(m.warnings.size() == 1);
  CHECK_THROWS_AS(build_constraint_mask(net, {{at(40, 0), 5.0}}, {0.0, 10.0}, 15, 100), ContractError);
}

TEST_CASE("attention over one row returns that row") {
  Fixture f;
  const auto h = random_tensor(1, f.d, f.rng);
  const auto a = f.dec.attend(random_tensor(1, f.d, f.rng), h, f.dec.project_context(h), {0});
  for (std::size_t c = 0; c < f.d; ++c) CHECK(a(0, c) == Approx(h(0, c)).margin(1e-15));
}

TEST_CASE("attention over identical rows returns that row") {
  Fixture f;
  const auto row = random_tensor(1, f.d, f.rng);
  const auto h = nc::concat({row, row, row}, 0);
  const auto a = f.dec.attend(random_tensor(1, f.d, f.rng), h, f.dec.project_context(h), {0, 0, 0});
  for (std::size_t c = 0; c < f.d; ++c) CHECK(a(0, c) == Approx(row(0, c)).margin(1e-14));
}

TEST_CASE("attention matches a direct evaluation per trajectory") {
  Fixture f;
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = random_tensor(8, f.d, f.rng, -2, 2);
    const auto s = random_tensor(2, f.d, f.rng, -2, 2);
    const auto a = f.dec.attend(s, h, f.dec.project_context(h), {0, 0, 0, 0, 1, 1, 1, 1});
    for (std::size_t t = 0; t < 2; ++t) {
      std::vector<double> st(s.data().begin() + long(t * f.d), s.data().begin() + long((t + 1) * f.d));
      const auto want = attend_reference(f.ps, st, h, 4 * t, 4);
      for (std::size_t c = 0; c < f.d; ++c) CHECK(a(t, c) == Approx(want[c]).margin(1e-13));
    }
  }
}

TEST_CASE("a one-hot mask row forces the prediction") {
  Fixture f;
  const auto xroad = random_tensor(f.segments, f.d, f.rng);
  const auto h = random_tensor(3, f.d, f.rng);
  std::vector<double> w(f.segments, 0.0);
  w[5] = 0.3;
  const auto so = f.dec.step(random_tensor(1, f.d, f.rng), nc::Tensor::zeros(1, 1), random_tensor(1, f.d, f.rng), h,
                             f.dec.project_context(h), {0, 0, 0}, w, xroad);
  CHECK(so.argmax[0] == 5);
  CHECK(so.log_probs(0, 5) == 0.0);
  for (std::size_t s = 0; s < f.segments; ++s)
    if (s != 5) CHECK(std::isinf(so.log_probs(0, s)));
}

TEST_CASE("uniform logits and mask give a uniform distribution") {
  Fixture f;
  nc::Tensor wid = param(f.ps, "decoder.w_id");
  std::fill(wid.data().begin(), wid.data().end(), 0.0);
  const auto xroad = random_tensor(f.segments, f.d, f.rng);
  const auto h = random_tensor(2, f.d, f.rng);
  const std::vector<double> w(f.segments, 0.5);
  const auto so = f.dec.step(random_tensor(1, f.d, f.rng), nc::Tensor::zeros(1, 1), random_tensor(1, f.d, f.rng), h,
                             f.dec.project_context(h), {0, 0}, w, xroad);
  for (std::size_t s = 0; s < f.segments; ++s) CHECK(std::exp(so.log_probs(0, s)) == Approx(1.0 / 7.0).margin(1e-15));
}

TEST_CASE("step probabilities and ratio match a loop-based evaluation") {
  Fixture f;
  const auto& wid = param(f.ps, "decoder.w_id");
  const auto& wrate = param(f.ps, "decoder.w_rate");
  for (int trial = 0; trial < 20; ++trial) {
    const auto xroad = random_tensor(f.segments, f.d, f.rng);
    const auto h = random_tensor(6, f.d, f.rng);
    std::vector<double> w(2 * f.segments);
    for (double& v : w) v = f.rng() % 3 == 0 ? 0.0 : nc::uniform01(f.rng);
    w[0] = w[f.segments] = 0.5;
    const auto so = f.dec.step(random_tensor(2, f.d, f.rng), random_tensor(2, 1, f.rng, 0, 1),
                               random_tensor(2, f.d, f.rng), h, f.dec.project_context(h), {0, 0, 0, 1, 1, 1}, w, xroad);
    for (std::size_t b = 0; b < 2; ++b) {
      std::vector<double> p(f.segments);
      double z = 0, total = 0;
      for (std::size_t s = 0; s < f.segments; ++s) {
        double logit = 0;
        for (std::size_t c = 0; c < f.d; ++c) logit += so.hidden(b, c) * wid(c, s);
        z += (p[s] = std::exp(logit) * w[b * f.segments + s]);
      }
      for (std::size_t s = 0; s < f.segments; ++s) {
        const double got = std::exp(so.log_probs(b, s));
        CHECK(got == Approx(p[s] / z).margin(1e-13));
        total += got;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
      CHECK(w[b * f.segments + so.argmax[b]] > 0.0);
      double acc = 0;
      for (std::size_t c = 0; c < f.d; ++c) acc += xroad(so.argmax[b], c) * wrate(c, 0) + so.hidden(b, c) * wrate(f.d + c, 0);
      CHECK(so.rate(b, 0) == Approx(1.0 / (1.0 + std::exp(-acc))).margin(1e-14));
      CHECK(so.rate(b, 0) > 0.0);
      CHECK(so.rate(b, 0) < 1.0);
    }
  }
}

TEST_CASE("an all-zero mask row is rejected") {
  Fixture f;
  const auto h = random_tensor(1, f.d, f.rng);
  const std::vector<double> w(f.segments, 0.0);
  CHECK_THROWS(f.dec.step(random_tensor(1, f.d, f.rng), nc::Tensor::zeros(1, 1), random_tensor(1, f.d, f.rng), h,
                          f.dec.project_context(h), {0}, w, random_tensor(f.segments, f.d, f.rng)));
}

TEST_CASE("one output step decodes from the start token") {
  Fixture f;
  const auto xroad = random_tensor(f.segments, f.d, f.rng);
  const auto h = random_tensor(2, f.d, f.rng);
  const auto mask = ConstraintMask::ones(1, f.segments);
  const auto out = f.dec.decode(xroad, h, {0, 0}, random_tensor(1, f.d, f.rng), {&mask}, DecodeMode::free_running);
  CHECK(out.log_probs.size() == 1);
  CHECK(out.segments[0].size() == 1);
}

TEST_CASE("one-hot masks fix the id sequence in both modes") {
  Fixture f;
  const auto xroad = random_tensor(f.segments, f.d, f.rng);
  const auto h = random_tensor(6, f.d, f.rng);
  std::vector<ConstraintMask> masks;
  std::vector<std::vector<traj::MatchedPoint>> targets(2);
  for (std::size_t t = 0; t < 2; ++t) {
    auto m = ConstraintMask::ones(5, f.segments);
    for (std::size_t j = 0; j < 5; ++j) {
      const SegIndex s = f.rng() % f.segments;
      std::fill(m.values.begin() + long(j * f.segments), m.values.begin() + long((j + 1) * f.segments), 0.0);
      m.values[j * f.segments + s] = 0.2;
      targets[t].push_back({s, 0.5, double(j)});
    }
    masks.push_back(std::move(m));
  }
  const std::vector<const ConstraintMask*> mp{&masks[0], &masks[1]};
  const std::vector<const std::vector<traj::MatchedPoint>*> tp{&targets[0], &targets[1]};
  const auto hidden0 = random_tensor(2, f.d, f.rng);
  for (auto mode : {DecodeMode::teacher_forced, DecodeMode::free_running}) {
    const auto out = f.dec.decode(xroad, h, {0, 0, 0, 1, 1, 1}, hidden0, mp, mode, &tp);
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(out.segments[t][j] == targets[t][j].segment);
        CHECK(out.ratios[t][j] > 0.0);
        CHECK(out.ratios[t][j] < 1.0);
      }
  }
  const auto wrong = ConstraintMask::ones(4, f.segments);
  CHECK_THROWS_AS(f.dec.decode(xroad, h, {0, 0, 0, 1, 1, 1}, hidden0, {&masks[0], &wrong}, DecodeMode::free_running),
                  ContractError);
  CHECK_THROWS_AS(f.dec.decode(xroad, h, {0, 0, 0, 1, 1, 1}, hidden0, mp, DecodeMode::teacher_forced), ContractError);
}

TEST_CASE("argmax at observed timestamps stays within the GPS error radius") {
  const auto sn = rntraj::testing::lattice(4, 4, 0.3);
  std::mt19937_64 rng(112);
  nc::ParamSet ps;
  Decoder dec(ps, sn.net.size(), tiny(), rng);
  const auto xroad = random_tensor(sn.net.size(), 6, rng, -3, 3);
  std::size_t violations = 0, observed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<traj::GpsPoint> in;
    for (int k = 0; k < 3; ++k) in.push_back({rntraj::testing::random_point(sn.net, rng, 0.0), 40.0 * k});
    const auto times = std::vector<double>{0, 10, 20, 30, 40, 50, 60, 70, 80};
    const auto mask = build_constraint_mask(sn.net, in, times, 15, 100);
    const auto h = random_tensor(3, 6, rng);
    const auto out = dec.decode(xroad, h, {0, 0, 0}, random_tensor(1, 6, rng), {&mask}, DecodeMode::free_running);
    for (int k = 0; k < 3; ++k) {
      ++observed;
      const SegIndex s = out.segments[0][4 * k];
      if (roadnet::point_to_segment_distance(in[k].pos, sn.net.segment(s)).distance > 100.0 + 1e-6) ++violations;
    }
  }
  CHECK(observed == 150);
  CHECK(violations == 0);
}

TEST_CASE("teacher-forced decoding passes finite-difference checks") {
  Fixture f;
  const auto xroad = random_tensor(f.segments, f.d, f.rng, -1, 1, true);
  const auto h = random_tensor(4, f.d, f.rng, -1, 1, true);
  const auto h_traj = random_tensor(2, f.d, f.rng, -1, 1, true);
  const auto mask = ConstraintMask::ones(3, f.segments);
  std::vector<std::vector<traj::MatchedPoint>> targets{{{1, 0.2, 0}, {2, 0.4, 1}, {3, 0.6, 2}},
                                                       {{6, 0.9, 0}, {0, 0.1, 1}, {6, 0.3, 2}}};
  const std::vector<const std::vector<traj::MatchedPoint>*> tp{&targets[0], &targets[1]};
  auto params = f.ps.trainable();
  params.push_back(xroad);
  params.push_back(h);
  params.push_back(h_traj);
  const double err = nc::grad_check_params(
      [&] {
        const auto out = f.dec.decode(xroad, h, {0, 0, 1, 1}, h_traj, {&mask, &mask}, DecodeMode::teacher_forced, &tp);
        nc::Tensor total = nc::Tensor::scalar(0.0);
        for (std::size_t j = 0; j < 3; ++j) {
          total = nc::add(total, nc::sum_all(nc::pick(out.log_probs[j], {0, 1}, {targets[0][j].segment, targets[1][j].segment})));
          total = nc::add(total, nc::sum_all(nc::square(out.rates[j])));
        }
        return total;
      },
      params, 1e-6);
  CHECK(err < 1e-4);
}
