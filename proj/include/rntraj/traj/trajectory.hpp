#pragma once

// Raw GPS and map-matched trajectories, downsampling, and linear
// interpolation in raw coordinates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/roadnet/io.hpp"
#include "rntraj/roadnet/network.hpp"

namespace rntraj::traj {

using geo::LatLon;
using roadnet::RoadNetwork;
using roadnet::SegIndex;

struct GpsPoint {
  LatLon pos;
  double t = 0.0;  // seconds
};

struct RawTrajectory {
  long long id = 0;
  std::vector<GpsPoint> points;

  std::size_t size() const { return points.size(); }

  void validate() const {
    if (points.size() < 2) {
      throw ContractError("trajectory " + std::to_string(id) + " has fewer than 2 points");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].t > points[i - 1].t)) {
        throw ContractError("trajectory " + std::to_string(id) +
                            ": timestamps not strictly increasing at index " + std::to_string(i));
      }
    }
  }
};

struct MatchedPoint {
  SegIndex segment = 0;
  double ratio = 0.0;
  double t = 0.0;
};

struct MatchedTrajectory {
  long long id = 0;
  double interval = 0.0;
  std::vector<MatchedPoint> points;

  std::size_t size() const { return points.size(); }

  void validate(const RoadNetwork& net) const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (p.segment >= net.size()) throw ContractError("matched point references unknown segment");
      if (!(p.ratio >= 0.0 && p.ratio < 1.0)) throw ContractError("moving ratio outside [0,1)");
      const double expect = points[0].t + static_cast<double>(i) * interval;
      if (std::abs(p.t - expect) > 1e-6) {
        throw ContractError("matched trajectory " + std::to_string(id) +
                            " is not on a fixed interval at index " + std::to_string(i));
      }
    }
  }
};

struct Downsampled {
  RawTrajectory trajectory;
  std::vector<std::size_t> kept;  // indices into the source trajectory
};

// Keeps the first and last points and every stride-th point in between.
// With a seed, each interior index moves by -1, 0 or +1 (never onto a
// neighbouring kept index).
inline Downsampled downsample(const RawTrajectory& src, std::size_t stride,
                              std::optional<std::uint64_t> jitter_seed = std::nullopt) {
  if (stride == 0) throw ContractError("downsample: stride must be positive");
  const std::size_t n = src.size();
  std::vector<std::size_t> kept;
  if (n > 0) kept.push_back(0);
  std::mt19937_64 rng(jitter_seed.value_or(0));
  for (std::size_t k = stride; k + 1 < n; k += stride) {
    std::size_t idx = k;
    if (jitter_seed) {
      const int shift = static_cast<int>(rng() % 3) - 1;
      const long long cand = static_cast<long long>(k) + shift;
      if (cand > static_cast<long long>(kept.back()) && cand + 1 < static_cast<long long>(n)) {
        idx = static_cast<std::size_t>(cand);
      }
    }
    if (idx > kept.back()) kept.push_back(idx);
  }
  if (n > 1) kept.push_back(n - 1);
  if (kept.size() < 2) throw ContractError("downsample: result shorter than 2 points");
  Downsampled out;
  out.trajectory.id = src.id;
  for (std::size_t i : kept) out.trajectory.points.push_back(src.points[i]);
  out.kept = std::move(kept);
  return out;
}

// Samples at t1, t1 + eps, ... (up to the last timestamp) by linear
// interpolation of lat/lon between the bracketing input points.
inline RawTrajectory linear_interpolate(const RawTrajectory& src, double eps) {
  if (!(eps > 0)) throw ContractError("linear_interpolate: interval must be positive");
  if (src.points.empty()) return src;
  RawTrajectory out;
  out.id = src.id;
  const double t0 = src.points.front().t, t1 = src.points.back().t;
  const std::size_t count = static_cast<std::size_t>(std::floor((t1 - t0) / eps + 1e-9)) + 1;
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) * eps;
    while (seg + 1 < src.size() && src.points[seg + 1].t <= t) ++seg;
    if (seg + 1 >= src.size()) {
      out.points.push_back({src.points.back().pos, t});
      continue;
    }
    const auto& a = src.points[seg];
    const auto& b = src.points[seg + 1];
    const double f = (t - a.t) / (b.t - a.t);
    out.points.push_back({f == 0.0 ? a.pos : geo::lerp(a.pos, b.pos, f), t});
  }
  return out;
}

inline RawTrajectory to_gps(const MatchedTrajectory& mt, const RoadNetwork& net) {
  RawTrajectory out;
  out.id = mt.id;
  for (const auto& p : mt.points) {
    if (!(p.ratio >= 0.0 && p.ratio < 1.0)) {
      throw ContractError("to_gps: ratio " + std::to_string(p.ratio) + " outside [0,1)");
    }
    out.points.push_back({roadnet::point_at_ratio(net.segment(p.segment), p.ratio), p.t});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files
//   trajectory file:  traj_id t lat lon
//   matched file:     traj_id t segment_id ratio
// Points of one trajectory are contiguous or not; they are grouped by id and
// kept in file order. Output is sorted by id.

inline std::vector<RawTrajectory> read_raw_trajectories(std::istream& is, const std::string& name = "trajectories") {
  std::map<long long, RawTrajectory> by_id;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = roadnet::io_detail::strip(raw);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    std::istringstream ls(line);
    std::string id, t, lat, lon, extra;
    if (!(ls >> id >> t >> lat >> lon) || (ls >> extra)) {
      throw FormatError(where + ": expected 'traj_id t lat lon'");
    }
    const long long tid = roadnet::io_detail::parse_int(id, where);
    auto& tr = by_id[tid];
    tr.id = tid;
    tr.points.push_back({{roadnet::io_detail::parse_double(lat, where), roadnet::io_detail::parse_double(lon, where)},
                         roadnet::io_detail::parse_double(t, where)});
  }
  std::vector<RawTrajectory> out;
  for (auto& [_, tr] : by_id) {
    for (std::size_t i = 1; i < tr.points.size(); ++i) {
      if (!(tr.points[i].t > tr.points[i - 1].t)) {
        throw FormatError(name + ": trajectory " + std::to_string(tr.id) +
                          " timestamps not strictly increasing");
      }
    }
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<MatchedTrajectory> read_matched_trajectories(std::istream& is, const RoadNetwork& net,
                                                                const std::string& name = "matched") {
  std::map<long long, MatchedTrajectory> by_id;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = roadnet::io_detail::strip(raw);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    std::istringstream ls(line);
    std::string id, t, seg, ratio, extra;
    if (!(ls >> id >> t >> seg >> ratio) || (ls >> extra)) {
      throw FormatError(where + ": expected 'traj_id t segment_id ratio'");
    }
    const long long tid = roadnet::io_detail::parse_int(id, where);
    const long long sid = roadnet::io_detail::parse_int(seg, where);
    auto idx = net.find(sid);
    if (!idx) throw FormatError(where + ": unknown segment id " + std::to_string(sid));
    const double r = roadnet::io_detail::parse_double(ratio, where);
    if (!(r >= 0.0 && r < 1.0)) throw FormatError(where + ": ratio outside [0,1)");
    auto& tr = by_id[tid];
    tr.id = tid;
    tr.points.push_back({*idx, r, roadnet::io_detail::parse_double(t, where)});
  }
  std::vector<MatchedTrajectory> out;
  for (auto& [_, tr] : by_id) {
    tr.interval = tr.points.size() > 1 ? tr.points[1].t - tr.points[0].t : 0.0;
    out.push_back(std::move(tr));
  }
  return out;
}

inline void write_raw_trajectories(std::ostream& os, const std::vector<RawTrajectory>& trs) {
  os << "# traj_id t lat lon\n";
  char buf[128];
  for (const auto& tr : trs)
    for (const auto& p : tr.points) {
      std::snprintf(buf, sizeof buf, "%lld %.17g %.17g %.17g\n", tr.id, p.t, p.pos.lat, p.pos.lon);
      os << buf;
    }
}

inline void write_matched_trajectories(std::ostream& os, const std::vector<MatchedTrajectory>& trs,
                                       const RoadNetwork& net) {
  os << "# traj_id t segment_id ratio\n";
  char buf[128];
  for (const auto& tr : trs)
    for (const auto& p : tr.points) {
      std::snprintf(buf, sizeof buf, "%lld %.17g %lld %.17g\n", tr.id, p.t, net.segment(p.segment).id,
                    p.ratio);
      os << buf;
    }
}

inline std::vector<RawTrajectory> load_raw_trajectories(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return read_raw_trajectories(is, path);
}

inline std::vector<MatchedTrajectory> load_matched_trajectories(const std::string& path, const RoadNetwork& net) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return read_matched_trajectories(is, net, path);
}

inline void save_raw_trajectories(const std::string& path, const std::vector<RawTrajectory>& trs) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  write_raw_trajectories(os, trs);
}

inline void save_matched_trajectories(const std::string& path, const std::vector<MatchedTrajectory>& trs,
                                      const RoadNetwork& net) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  write_matched_trajectories(os, trs, net);
}

}  // namespace rntraj::traj
