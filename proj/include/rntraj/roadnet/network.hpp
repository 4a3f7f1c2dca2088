#pragma once

// Road network: directed graph whose nodes are road segments, plus the grid
// partition and a bucketed radius index over segment geometry.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/roadnet/geo.hpp"

namespace rntraj::roadnet {

using geo::LatLon;

// Dense position of a segment in RoadNetwork::segments().
using SegIndex = std::size_t;

inline constexpr int kLevelCount = 8;
inline constexpr std::size_t kStaticFeatureWidth = kLevelCount + 3;
// Largest representable moving ratio; ratios live in [0, 1).
inline constexpr double kMaxRatio = 1.0 - 1e-9;

struct RoadSegment {
  long long id = 0;
  int level = 0;
  std::vector<LatLon> polyline;
  double length = 0.0;
};

struct GridCell {
  int x = 0;
  int y = 0;

  bool operator==(const GridCell&) const = default;
};

// m x n square cells; x grows east from `origin`, y grows north.
struct GridSpec {
  LatLon origin{};
  double cell_size = 50.0;
  int m = 0;
  int n = 0;

  std::size_t cell_count() const { return static_cast<std::size_t>(m) * n; }
  std::size_t flat(GridCell c) const { return static_cast<std::size_t>(c.y) * m + c.x; }

  // Cell containing `p`; throws RangeError outside the extent.
  GridCell cell_of(LatLon p) const {
    const geo::XY q = geo::LocalProjection(origin).to_xy(p);
    const auto c = cell_of_xy(q);
    if (!c) {
      throw RangeError("point (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) +
                       ") outside grid extent");
    }
    return *c;
  }

  // Cell containing `p`, clamped into the extent (for noisy GPS points).
  GridCell clamped_cell_of(LatLon p) const {
    const geo::XY q = geo::LocalProjection(origin).to_xy(p);
    return {std::clamp(static_cast<int>(std::floor(q.x / cell_size)), 0, m - 1),
            std::clamp(static_cast<int>(std::floor(q.y / cell_size)), 0, n - 1)};
  }

  std::optional<GridCell> cell_of_xy(geo::XY q) const {
    constexpr double kSnap = 1e-6;
    const double ex = m * cell_size, ey = n * cell_size;
    if (q.x < -kSnap || q.y < -kSnap || q.x > ex + kSnap || q.y > ey + kSnap) return std::nullopt;
    const int cx = std::clamp(static_cast<int>(std::floor(std::max(q.x, 0.0) / cell_size)), 0, m - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(std::max(q.y, 0.0) / cell_size)), 0, n - 1);
    return GridCell{cx, cy};
  }
};

// Cells crossed by a polyline in travel order, consecutive duplicates removed.
inline std::vector<GridCell> grid_sequence(const RoadSegment& seg, const GridSpec& spec) {
  const geo::LocalProjection proj(spec.origin);
  std::vector<GridCell> out;
  auto push = [&](GridCell c) {
    if (out.empty() || !(out.back() == c)) out.push_back(c);
  };
  for (std::size_t i = 0; i + 1 < seg.polyline.size(); ++i) {
    const geo::XY a = proj.to_xy(seg.polyline[i]);
    const geo::XY b = proj.to_xy(seg.polyline[i + 1]);
    const auto ca = spec.cell_of_xy(a);
    const auto cb = spec.cell_of_xy(b);
    if (!ca || !cb) throw RangeError("segment " + std::to_string(seg.id) + " leaves the grid extent");
    // Voxel traversal with an exact step budget so rounding cannot loop.
    GridCell cur = *ca;
    push(cur);
    const double dx = b.x - a.x, dy = b.y - a.y;
    const int sx = dx > 0 ? 1 : -1, sy = dy > 0 ? 1 : -1;
    const double cs = spec.cell_size;
    double tmx = dx != 0 ? ((cur.x + (sx > 0 ? 1 : 0)) * cs - a.x) / dx : INFINITY;
    double tmy = dy != 0 ? ((cur.y + (sy > 0 ? 1 : 0)) * cs - a.y) / dy : INFINITY;
    const double tdx = dx != 0 ? cs / std::abs(dx) : INFINITY;
    const double tdy = dy != 0 ? cs / std::abs(dy) : INFINITY;
    int steps = std::abs(cb->x - cur.x) + std::abs(cb->y - cur.y);
    while (steps-- > 0) {
      const bool x_left = cur.x != cb->x, y_left = cur.y != cb->y;
      if (x_left && (!y_left || tmx <= tmy)) {
        cur.x += sx;
        tmx += tdx;
      } else {
        cur.y += sy;
        tmy += tdy;
      }
      push(cur);
    }
  }
  return out;
}

struct SegmentHit {
  double distance = 0.0;  // meters
  double ratio = 0.0;     // moving ratio of the projection, in [0, 1)
};

inline SegmentHit point_to_segment_distance(LatLon p, const RoadSegment& seg) {
  const geo::Projection pr = geo::project_onto_polyline(p, seg.polyline);
  const double r = seg.length > 0 ? pr.offset / seg.length : 0.0;
  return {pr.distance, std::clamp(r, 0.0, kMaxRatio)};
}

// Position at moving ratio r on a segment.
inline LatLon point_at_ratio(const RoadSegment& seg, double r) {
  return geo::point_at_offset(seg.polyline, r * seg.length);
}

class RoadNetwork {
 public:
  RoadNetwork() = default;

  // Validates and indexes. Edges use external segment ids. When `grid` is
  // empty a grid padded by one cell around the bounding box is derived.
  RoadNetwork(std::vector<RoadSegment> segments, const std::vector<std::pair<long long, long long>>& edges,
              double cell_size = 50.0, std::optional<GridSpec> grid = std::nullopt)
      : segments_(std::move(segments)) {
    if (segments_.empty()) throw FormatError("road network has no segments");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      auto& s = segments_[i];
      if (s.polyline.size() < 2) {
        throw FormatError("segment " + std::to_string(s.id) + " has fewer than 2 polyline points");
      }
      if (s.level < 0 || s.level >= kLevelCount) {
        throw FormatError("segment " + std::to_string(s.id) + " level " + std::to_string(s.level) +
                          " outside [0," + std::to_string(kLevelCount) + ")");
      }
      s.length = geo::polyline_length(s.polyline);
      if (!(s.length > 0)) throw FormatError("segment " + std::to_string(s.id) + " has zero length");
      if (!index_of_.emplace(s.id, i).second) {
        throw FormatError("duplicate segment id " + std::to_string(s.id));
      }
    }
    out_.resize(segments_.size());
    in_.resize(segments_.size());
    for (const auto& [from, to] : edges) {
      const SegIndex a = require(from), b = require(to);
      if (std::find(out_[a].begin(), out_[a].end(), b) != out_[a].end()) continue;
      out_[a].push_back(b);
      in_[b].push_back(a);
      edges_.emplace_back(a, b);
    }
    grid_ = grid ? *grid : derive_grid(cell_size);
    if (!(grid_.cell_size > 0)) throw FormatError("grid cell size must be positive");
    grid_seq_.reserve(segments_.size());
    for (const auto& s : segments_) grid_seq_.push_back(grid_sequence(s, grid_));
    build_index();
  }

  std::size_t size() const { return segments_.size(); }
  const std::vector<RoadSegment>& segments() const { return segments_; }
  const RoadSegment& segment(SegIndex i) const { return segments_.at(i); }
  const std::vector<std::pair<SegIndex, SegIndex>>& edges() const { return edges_; }
  const std::vector<SegIndex>& successors(SegIndex i) const { return out_.at(i); }
  const std::vector<SegIndex>& predecessors(SegIndex i) const { return in_.at(i); }
  const GridSpec& grid() const { return grid_; }
  const std::vector<GridCell>& grid_cells(SegIndex i) const { return grid_seq_.at(i); }

  bool has_edge(SegIndex a, SegIndex b) const {
    const auto& o = out_.at(a);
    return std::find(o.begin(), o.end(), b) != o.end();
  }

  std::optional<SegIndex> find(long long id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end()) return std::nullopt;
    return it->second;
  }

  SegIndex require(long long id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end()) throw FormatError("unknown segment id " + std::to_string(id));
    return it->second;
  }

  // Segments whose distance to p is at most delta, ascending by index.
  std::vector<SegIndex> radius_query(LatLon p, double delta) const {
    if (!(delta > 0)) throw ContractError("radius_query: delta must be positive");
    const geo::XY q = proj_.to_xy(p);
    const double reach = delta * 1.01 + 1.0;
    const int bx0 = bucket_coord(q.x - reach - bx_origin_), bx1 = bucket_coord(q.x + reach - bx_origin_);
    const int by0 = bucket_coord(q.y - reach - by_origin_), by1 = bucket_coord(q.y + reach - by_origin_);
    std::vector<SegIndex> cand;
    for (int by = std::max(by0, 0); by <= std::min(by1, bny_ - 1); ++by)
      for (int bx = std::max(bx0, 0); bx <= std::min(bx1, bnx_ - 1); ++bx)
        for (SegIndex s : buckets_[static_cast<std::size_t>(by) * bnx_ + bx]) cand.push_back(s);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    std::vector<SegIndex> out;
    for (SegIndex s : cand)
      if (point_to_segment_distance(p, segments_[s]).distance <= delta) out.push_back(s);
    return out;
  }

  // |V| x 11 row-major: one-hot level (8), length / max length, in-degree,
  // out-degree.
  std::vector<double> static_features() const {
    double lmax = 0.0;
    for (const auto& s : segments_) lmax = std::max(lmax, s.length);
    std::vector<double> f(size() * kStaticFeatureWidth, 0.0);
    for (SegIndex i = 0; i < size(); ++i) {
      double* row = f.data() + i * kStaticFeatureWidth;
      row[segments_[i].level] = 1.0;
      row[kLevelCount] = segments_[i].length / lmax;
      row[kLevelCount + 1] = static_cast<double>(in_[i].size());
      row[kLevelCount + 2] = static_cast<double>(out_[i].size());
    }
    return f;
  }

 private:
  static constexpr double kBucket = 200.0;

  int bucket_coord(double v) const { return static_cast<int>(std::floor(v / kBucket)); }

  GridSpec derive_grid(double cell_size) const {
    double lat0 = INFINITY, lon0 = INFINITY, lat1 = -INFINITY, lon1 = -INFINITY;
    for (const auto& s : segments_)
      for (const auto& p : s.polyline) {
        lat0 = std::min(lat0, p.lat);
        lat1 = std::max(lat1, p.lat);
        lon0 = std::min(lon0, p.lon);
        lon1 = std::max(lon1, p.lon);
      }
    const geo::LocalProjection probe(LatLon{lat0, lon0});
    const geo::XY far = probe.to_xy({lat1, lon1});
    const geo::LatLon origin = probe.to_latlon({-cell_size, -cell_size});
    GridSpec g;
    g.origin = origin;
    g.cell_size = cell_size;
    g.m = static_cast<int>(std::ceil(far.x / cell_size)) + 2;
    g.n = static_cast<int>(std::ceil(far.y / cell_size)) + 2;
    return g;
  }

  void build_index() {
    proj_ = geo::LocalProjection(grid_.origin);
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    std::vector<std::array<double, 4>> boxes;
    for (const auto& s : segments_) {
      std::array<double, 4> b{INFINITY, INFINITY, -INFINITY, -INFINITY};
      for (const auto& p : s.polyline) {
        const geo::XY q = proj_.to_xy(p);
        b[0] = std::min(b[0], q.x);
        b[1] = std::min(b[1], q.y);
        b[2] = std::max(b[2], q.x);
        b[3] = std::max(b[3], q.y);
      }
      x0 = std::min(x0, b[0]);
      y0 = std::min(y0, b[1]);
      x1 = std::max(x1, b[2]);
      y1 = std::max(y1, b[3]);
      boxes.push_back(b);
    }
    bx_origin_ = x0;
    by_origin_ = y0;
    bnx_ = bucket_coord(x1 - x0) + 1;
    bny_ = bucket_coord(y1 - y0) + 1;
    buckets_.assign(static_cast<std::size_t>(bnx_) * bny_, {});
    for (SegIndex i = 0; i < boxes.size(); ++i) {
      const auto& b = boxes[i];
      for (int by = bucket_coord(b[1] - y0); by <= bucket_coord(b[3] - y0); ++by)
        for (int bx = bucket_coord(b[0] - x0); bx <= bucket_coord(b[2] - x0); ++bx)
          buckets_[static_cast<std::size_t>(by) * bnx_ + bx].push_back(i);
    }
  }

  std::vector<RoadSegment> segments_;
  std::unordered_map<long long, SegIndex> index_of_;
  std::vector<std::pair<SegIndex, SegIndex>> edges_;
  std::vector<std::vector<SegIndex>> out_;
  std::vector<std::vector<SegIndex>> in_;
  GridSpec grid_;
  std::vector<std::vector<GridCell>> grid_seq_;
  geo::LocalProjection proj_;
  double bx_origin_ = 0.0, by_origin_ = 0.0;
  int bnx_ = 0, bny_ = 0;
  std::vector<std::vector<SegIndex>> buckets_;
};

}  // namespace rntraj::roadnet
