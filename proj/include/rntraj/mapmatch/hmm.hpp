#pragma once

// Hidden-Markov map matching with Viterbi decoding.
//
// Emission:   log p(z | c) = -d(z, c)^2 / (2 sigma_z^2)
// Transition: log p(c' | c) = max(-|route(c, c') - gc(z, z')| / beta_t, kLogFloor)
// where route is the directed driving distance and gc the great-circle
// distance between consecutive observations. Unreachable pairs get the floor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/mapmatch/route.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::mapmatch {

inline constexpr double kLogFloor = -30.0;

struct HmmConfig {
  double sigma_z = 15.0;
  double beta_t = 30.0;
  double candidate_radius = 100.0;
  std::size_t max_candidates = 8;

  void validate() const {
    if (!(sigma_z > 0 && beta_t > 0 && candidate_radius > 0 && max_candidates > 0)) {
      throw ConfigError("HMM parameters must all be positive");
    }
  }
};

struct Candidate {
  SegIndex segment = 0;
  double ratio = 0.0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<Candidate> path;  // one per input point
  double log_prob = 0.0;
};

inline double emission_log_prob(double distance, const HmmConfig& cfg) {
  return -distance * distance / (2.0 * cfg.sigma_z * cfg.sigma_z);
}

inline double transition_log_prob(double route, double great_circle, const HmmConfig& cfg) {
  if (!reachable(route)) return kLogFloor;
  return std::max(-std::abs(route - great_circle) / cfg.beta_t, kLogFloor);
}

// Nearest segments within the candidate radius, closest first (ties by
// segment index), at most max_candidates.
inline std::vector<Candidate> find_candidates(const RoadNetwork& net, geo::LatLon p, const HmmConfig& cfg) {
  std::vector<Candidate> out;
  for (SegIndex s : net.radius_query(p, cfg.candidate_radius)) {
    const auto hit = roadnet::point_to_segment_distance(p, net.segment(s));
    out.push_back({s, hit.ratio, hit.distance});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.segment < b.segment;
  });
  if (out.size() > cfg.max_candidates) out.resize(cfg.max_candidates);
  return out;
}

// Viterbi over explicit candidate lists. Ties keep the lowest candidate index.
inline MatchResult viterbi(const std::vector<geo::LatLon>& points,
                           const std::vector<std::vector<Candidate>>& cands, Router& router,
                           const HmmConfig& cfg) {
  const std::size_t n = points.size();
  MatchResult res;
  if (n == 0) return res;
  for (std::size_t i = 0; i < n; ++i) {
    if (cands[i].empty()) {
      throw UnmatchedPointError(i, "no road segment within " + std::to_string(cfg.candidate_radius) +
                                       " m of point " + std::to_string(i));
    }
  }
  std::vector<std::vector<double>> score(n);
  std::vector<std::vector<std::size_t>> back(n);
  score[0].resize(cands[0].size());
  for (std::size_t k = 0; k < cands[0].size(); ++k) score[0][k] = emission_log_prob(cands[0][k].distance, cfg);
  for (std::size_t i = 1; i < n; ++i) {
    const double gc = geo::haversine(points[i - 1], points[i]);
    score[i].assign(cands[i].size(), -std::numeric_limits<double>::infinity());
    back[i].assign(cands[i].size(), 0);
    for (std::size_t k = 0; k < cands[i].size(); ++k) {
      const Location to{cands[i][k].segment, cands[i][k].ratio};
      for (std::size_t j = 0; j < cands[i - 1].size(); ++j) {
        const Location from{cands[i - 1][j].segment, cands[i - 1][j].ratio};
        const double s = score[i - 1][j] + transition_log_prob(router.distance(from, to), gc, cfg);
        if (s > score[i][k]) {
          score[i][k] = s;
          back[i][k] = j;
        }
      }
      score[i][k] += emission_log_prob(cands[i][k].distance, cfg);
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < score[n - 1].size(); ++k)
    if (score[n - 1][k] > score[n - 1][best]) best = k;
  res.log_prob = score[n - 1][best];
  res.path.resize(n);
  for (std::size_t i = n; i-- > 0;) {
    res.path[i] = cands[i][best];
    if (i > 0) best = back[i][best];
  }
  return res;
}

inline MatchResult hmm_match(const traj::RawTrajectory& tr, const RoadNetwork& net, const HmmConfig& cfg,
                             Router* router = nullptr) {
  cfg.validate();
  std::vector<geo::LatLon> pts;
  std::vector<std::vector<Candidate>> cands;
  for (const auto& p : tr.points) {
    pts.push_back(p.pos);
    cands.push_back(find_candidates(net, p.pos, cfg));
  }
  Router local(net);
  return viterbi(pts, cands, router ? *router : local, cfg);
}

inline traj::MatchedTrajectory to_matched(const traj::RawTrajectory& tr, const MatchResult& m, double interval) {
  traj::MatchedTrajectory out;
  out.id = tr.id;
  out.interval = interval;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    out.points.push_back({m.path[i].segment, m.path[i].ratio, tr.points[i].t});
  }
  return out;
}

}  // namespace rntraj::mapmatch
