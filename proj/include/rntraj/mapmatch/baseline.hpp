#pragma once

// Linear+HMM baseline: interpolate the low-sample trajectory in raw
// coordinates at the target interval, then map-match the interpolants.

#include <vector>

#include "rntraj/mapmatch/hmm.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::mapmatch {

// Candidates within the configured radius; a point with none is retried at
// twice and four times the radius before giving up with an empty list.
inline std::vector<Candidate> find_candidates_widening(const RoadNetwork& net, geo::LatLon p, HmmConfig cfg) {
  for (int attempt = 0; attempt < 3; ++attempt) {
    auto c = find_candidates(net, p, cfg);
    if (!c.empty()) return c;
    cfg.candidate_radius *= 2.0;
  }
  return {};
}

inline traj::MatchedTrajectory linear_hmm(const traj::RawTrajectory& low, const RoadNetwork& net, double interval,
                                          const HmmConfig& cfg, Router& router) {
  cfg.validate();
  const traj::RawTrajectory dense = traj::linear_interpolate(low, interval);
  std::vector<geo::LatLon> pts;
  std::vector<std::vector<Candidate>> cands;
  for (const auto& p : dense.points) {
    pts.push_back(p.pos);
    cands.push_back(find_candidates_widening(net, p.pos, cfg));
  }
  return to_matched(dense, viterbi(pts, cands, router, cfg), interval);
}

}  // namespace rntraj::mapmatch
