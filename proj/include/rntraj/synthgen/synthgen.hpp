#pragma once

// Synthetic city: a bidirectional lattice of straight blocks, optional
// elevated corridors running beside full lattice lines, and constant-speed
// vehicles sampled at a fixed interval with Gaussian GPS noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/mapmatch/route.hpp"
#include "rntraj/numcore/params.hpp"
#include "rntraj/roadnet/io.hpp"
#include "rntraj/roadnet/network.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::synthgen {

using geo::LatLon;
using roadnet::RoadNetwork;
using roadnet::SegIndex;

struct SynthConfig {
  int cols = 6;                  // intersections west to east
  int rows = 6;                  // intersections south to north
  double block_len = 200.0;      // meters between neighbouring intersections
  double elevated_fraction = 0.0;  // share of lattice lines carrying an elevated corridor
  double elevated_offset = 12.0; // lateral offset of elevated chains, meters
  double speed_min = 8.0;        // m/s
  double speed_max = 15.0;
  double gps_noise_sigma = 6.0;  // meters, per axis
  double interval = 10.0;        // seconds between ground-truth samples
  std::size_t points = 25;       // samples per trajectory
  std::size_t n_trajectories = 50;
  std::uint64_t seed = 7;
  LatLon origin{30.65, 104.05};
  double time_base = 1600000000.0;  // earliest start, Unix seconds

  void validate() const {
    if (cols < 2 || rows < 2) throw ConfigError("lattice must be at least 2x2");
    if (!(block_len > 0 && elevated_offset > 0 && speed_min > 0 && speed_max >= speed_min && interval > 0)) {
      throw ConfigError("block_len, elevated_offset, speeds and interval must be positive");
    }
    if (!(gps_noise_sigma >= 0)) throw ConfigError("gps_noise_sigma must be non-negative");
    if (!(elevated_fraction >= 0 && elevated_fraction <= 1)) throw ConfigError("elevated_fraction must lie in [0,1]");
    if (points < 2) throw ConfigError("trajectories need at least 2 points");
    if (n_trajectories == 0) throw ConfigError("n_trajectories must be positive");
  }
};

struct SynthNetwork {
  RoadNetwork net;
  // Segments on or beside an elevated road, by dense index.
  std::vector<bool> elevated;
  std::size_t corridors = 0;
};

namespace detail {

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Builder {
  std::vector<roadnet::RoadSegment> segs;
  std::vector<bool> elevated;
  std::vector<int> from, to;  // intersection endpoints, -1 for chain-internal ends

  std::size_t add(std::vector<LatLon> line, int level, int a, int b, bool elev) {
    roadnet::RoadSegment s;
    s.id = static_cast<long long>(segs.size());
    s.level = level;
    s.polyline = std::move(line);
    segs.push_back(std::move(s));
    elevated.push_back(elev);
    from.push_back(a);
    to.push_back(b);
    return segs.size() - 1;
  }
};

}  // namespace detail

// Lattice with 2 * (rows*(cols-1) + cols*(rows-1)) ground segments. A ground
// segment a->b continues to every b->c with c != a; U-turns are allowed
// only at dead ends. Each elevated corridor adds two one-way chains along a
// full lattice line, entered and left only at the line's end intersections.
inline SynthNetwork gen_network(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(detail::mix(cfg.seed));
  const geo::LocalProjection proj(cfg.origin);
  auto node = [&](int x, int y) { return y * cfg.cols + x; };
  auto pos_xy = [&](int id) {
    return geo::XY{(id % cfg.cols) * cfg.block_len, (id / cfg.cols) * cfg.block_len};
  };
  auto pos = [&](int id) { return proj.to_latlon(pos_xy(id)); };

  detail::Builder b;
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(cfg.rows * cfg.cols));
  auto level_of_line = [](int k) { return k % 3 == 0 ? 1 : 3; };
  for (int y = 0; y < cfg.rows; ++y) {
    for (int x = 0; x < cfg.cols; ++x) {
      const int u = node(x, y);
      if (x + 1 < cfg.cols) {
        const int v = node(x + 1, y);
        b.add({pos(u), pos(v)}, level_of_line(y), u, v, false);
        b.add({pos(v), pos(u)}, level_of_line(y), v, u, false);
        nbrs[u].push_back(v);
        nbrs[v].push_back(u);
      }
      if (y + 1 < cfg.rows) {
        const int v = node(x, y + 1);
        b.add({pos(u), pos(v)}, level_of_line(x), u, v, false);
        b.add({pos(v), pos(u)}, level_of_line(x), v, u, false);
        nbrs[u].push_back(v);
        nbrs[v].push_back(u);
      }
    }
  }
  const std::size_t ground = b.segs.size();

  std::vector<std::pair<long long, long long>> edges;
  for (std::size_t i = 0; i < ground; ++i) {
    for (std::size_t j = 0; j < ground; ++j) {
      if (b.from[j] != b.to[i]) continue;
      const bool uturn = b.to[j] == b.from[i];
      if (uturn && nbrs[b.to[i]].size() > 1) continue;
      edges.emplace_back(static_cast<long long>(i), static_cast<long long>(j));
    }
  }

  // Lattice lines: rows first (horizontal), then columns.
  struct Line {
    std::vector<int> nodes;
  };
  std::vector<Line> lines;
  for (int y = 0; y < cfg.rows; ++y) {
    Line l;
    for (int x = 0; x < cfg.cols; ++x) l.nodes.push_back(node(x, y));
    lines.push_back(std::move(l));
  }
  for (int x = 0; x < cfg.cols; ++x) {
    Line l;
    for (int y = 0; y < cfg.rows; ++y) l.nodes.push_back(node(x, y));
    lines.push_back(std::move(l));
  }
  std::vector<std::size_t> order(lines.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto corridors = static_cast<std::size_t>(std::lround(cfg.elevated_fraction * static_cast<double>(lines.size())));
  order.resize(std::min(corridors, order.size()));
  std::sort(order.begin(), order.end());

  std::vector<bool> corridor_ground(ground, false);
  for (std::size_t li : order) {
    for (int dir = 0; dir < 2; ++dir) {
      std::vector<int> path = lines[li].nodes;
      if (dir == 1) std::reverse(path.begin(), path.end());
      const std::size_t k = path.size() - 1;
      // Right-hand lateral offset along the direction of travel.
      const geo::XY a = pos_xy(path.front()), z = pos_xy(path.back());
      const double len = std::hypot(z.x - a.x, z.y - a.y);
      const geo::XY right{(z.y - a.y) / len * cfg.elevated_offset, -(z.x - a.x) / len * cfg.elevated_offset};
      std::vector<LatLon> pts;
      for (std::size_t i = 0; i <= k; ++i) {
        const geo::XY p = pos_xy(path[i]);
        pts.push_back(i == 0 || i == k ? pos(path[i]) : proj.to_latlon({p.x + right.x, p.y + right.y}));
      }
      std::size_t prev = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t s = b.add({pts[i], pts[i + 1]}, 0, i == 0 ? path[0] : -1, i + 1 == k ? path[k] : -1, true);
        if (i == 0) {
          for (std::size_t g = 0; g < ground; ++g) {
            if (b.to[g] == path[0] && b.from[g] != path[1]) edges.emplace_back(static_cast<long long>(g), static_cast<long long>(s));
          }
        } else {
          edges.emplace_back(static_cast<long long>(prev), static_cast<long long>(s));
        }
        if (i + 1 == k) {
          for (std::size_t g = 0; g < ground; ++g) {
            if (b.from[g] == path[k] && b.to[g] != path[k - 1]) edges.emplace_back(static_cast<long long>(s), static_cast<long long>(g));
          }
        }
        prev = s;
      }
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t g = 0; g < ground; ++g) {
          if (b.from[g] == path[i] && b.to[g] == path[i + 1]) corridor_ground[g] = true;
        }
      }
    }
  }
  std::vector<bool> labels = b.elevated;
  for (std::size_t g = 0; g < ground; ++g) labels[g] = labels[g] || corridor_ground[g];
  SynthNetwork out{RoadNetwork(std::move(b.segs), edges), std::move(labels), order.size()};
  return out;
}

struct SynthTrajectory {
  traj::MatchedTrajectory truth;  // dense, every `interval` seconds
  traj::RawTrajectory raw;        // noisy GPS at the same timestamps
};

// Segment sequence of length at least `need` meters beyond `start_offset`
// on the first segment, chained through random waypoint segments.
inline std::vector<SegIndex> random_route(const RoadNetwork& net, mapmatch::Router& router, std::mt19937_64& rng,
                                          SegIndex start, double need) {
  std::vector<SegIndex> route{start};
  double have = net.segment(start).length;
  std::vector<SegIndex> between;
  std::size_t attempts = 0;
  while (have < need) {
    if (++attempts > 1000) throw ContractError("random_route: network too poorly connected");
    const SegIndex target = static_cast<SegIndex>(rng() % net.size());
    if (target == route.back()) continue;
    if (!router.path_between(route.back(), target, between)) continue;
    for (SegIndex s : between) {
      route.push_back(s);
      have += net.segment(s).length;
    }
    route.push_back(target);
    have += net.segment(target).length;
  }
  return route;
}

inline SynthTrajectory gen_trajectory(const RoadNetwork& net, mapmatch::Router& router, const SynthConfig& cfg,
                                      long long id) {
  std::mt19937_64 rng(detail::mix(cfg.seed ^ detail::mix(static_cast<std::uint64_t>(id) + 1)));
  const double speed = nc::uniform(rng, cfg.speed_min, cfg.speed_max);
  const double travel = speed * cfg.interval * static_cast<double>(cfg.points - 1);
  const SegIndex start = static_cast<SegIndex>(rng() % net.size());
  const double start_offset = nc::uniform01(rng) * net.segment(start).length;
  const auto route = random_route(net, router, rng, start, start_offset + travel + 1.0);
  const double t0 = std::floor(cfg.time_base + nc::uniform01(rng) * 7.0 * 86400.0);

  SynthTrajectory out;
  out.truth.id = id;
  out.truth.interval = cfg.interval;
  out.raw.id = id;
  std::size_t seg = 0;
  double seg_begin = 0.0;  // route arc length at the start of route[seg]
  for (std::size_t k = 0; k < cfg.points; ++k) {
    const double s = start_offset + speed * cfg.interval * static_cast<double>(k);
    while (s >= seg_begin + net.segment(route[seg]).length) {
      seg_begin += net.segment(route[seg]).length;
      ++seg;
    }
    const auto& rs = net.segment(route[seg]);
    const double ratio = std::min((s - seg_begin) / rs.length, roadnet::kMaxRatio);
    const double t = t0 + cfg.interval * static_cast<double>(k);
    out.truth.points.push_back({route[seg], ratio, t});
    const LatLon p = roadnet::point_at_ratio(rs, ratio);
    const geo::LocalProjection local(p);
    const LatLon noisy = local.to_latlon({nc::normal01(rng) * cfg.gps_noise_sigma, nc::normal01(rng) * cfg.gps_noise_sigma});
    out.raw.points.push_back({noisy, t});
  }
  return out;
}

inline std::vector<SynthTrajectory> gen_trajectories(const RoadNetwork& net, const SynthConfig& cfg) {
  cfg.validate();
  mapmatch::Router router(net);
  std::vector<SynthTrajectory> out;
  out.reserve(cfg.n_trajectories);
  for (std::size_t i = 0; i < cfg.n_trajectories; ++i) out.push_back(gen_trajectory(net, router, cfg, static_cast<long long>(i)));
  return out;
}

// Label file: one "segment_id flag" line per segment.
inline void write_labels(std::ostream& os, const RoadNetwork& net, const std::vector<bool>& labels) {
  for (std::size_t i = 0; i < net.size(); ++i) os << net.segment(i).id << ' ' << (labels.at(i) ? 1 : 0) << '\n';
}

inline std::vector<bool> read_labels(std::istream& is, const RoadNetwork& net) {
  std::vector<bool> out(net.size(), false);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = roadnet::io_detail::strip(raw);
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long id = 0;
    int flag = 0;
    if (!(ss >> id >> flag) || (flag != 0 && flag != 1)) {
      throw FormatError("labels line " + std::to_string(lineno) + ": expected 'segment_id 0|1'");
    }
    out[net.require(id)] = flag == 1;
  }
  return out;
}

}  // namespace rntraj::synthgen
