#pragma once

// Shared fixtures for the unit tests.

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rntraj/numcore/tensor.hpp"
#include "rntraj/roadnet/network.hpp"
#include "rntraj/synthgen/synthgen.hpp"

namespace rntraj::testing {

inline nc::Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (double& x : v) x = u(rng);
  return nc::Tensor({r, c}, std::move(v), requires_grad);
}

// Segment along a straight line from `a` to `b`.
inline roadnet::RoadSegment straight(long long id, geo::LatLon a, geo::LatLon b, int level = 0) {
  roadnet::RoadSegment s;
  s.id = id;
  s.level = level;
  s.polyline = {a, b};
  return s;
}

inline synthgen::SynthNetwork lattice(int cols = 6, int rows = 6, double elevated = 0.0) {
  synthgen::SynthConfig c;
  c.cols = cols;
  c.rows = rows;
  c.elevated_fraction = elevated;
  return synthgen::gen_network(c);
}

// Random point inside (or slightly beyond) the bounding box of a network.
inline geo::LatLon random_point(const roadnet::RoadNetwork& net, std::mt19937_64& rng, double pad = 150.0) {
  double lo_lat = 1e9, hi_lat = -1e9, lo_lon = 1e9, hi_lon = -1e9;
  for (const auto& s : net.segments()) {
    for (const auto& p : s.polyline) {
      lo_lat = std::min(lo_lat, p.lat);
      hi_lat = std::max(hi_lat, p.lat);
      lo_lon = std::min(lo_lon, p.lon);
      hi_lon = std::max(hi_lon, p.lon);
    }
  }
  const double dlat = pad / 111195.0;
  const double dlon = pad / (111195.0 * std::cos(lo_lat * geo::kDegToRad));
  std::uniform_real_distribution<double> ulat(lo_lat - dlat, hi_lat + dlat), ulon(lo_lon - dlon, hi_lon + dlon);
  return {ulat(rng), ulon(rng)};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("rntraj_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace rntraj::testing
