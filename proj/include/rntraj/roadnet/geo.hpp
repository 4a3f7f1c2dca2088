#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace rntraj::geo {

inline constexpr double kEarthRadius = 6371000.0;
inline constexpr double kDegToRad = M_PI / 180.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const LatLon&) const = default;
};

// Great-circle distance in meters.
inline double haversine(LatLon a, LatLon b) {
  const double p1 = a.lat * kDegToRad, p2 = b.lat * kDegToRad;
  const double dphi = p2 - p1;
  const double dlam = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2), s2 = std::sin(dlam / 2);
  const double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  return 2.0 * kEarthRadius * std::asin(std::min(1.0, std::sqrt(h)));
}

inline LatLon lerp(LatLon a, LatLon b, double t) {
  return {a.lat + (b.lat - a.lat) * t, a.lon + (b.lon - a.lon) * t};
}

struct XY {
  double x = 0.0;
  double y = 0.0;
};

// Equirectangular projection about a reference point; x east, y north, meters.
class LocalProjection {
 public:
  LocalProjection() = default;
  explicit LocalProjection(LatLon ref) : ref_(ref), coslat_(std::cos(ref.lat * kDegToRad)) {}

  XY to_xy(LatLon p) const {
    return {kEarthRadius * (p.lon - ref_.lon) * kDegToRad * coslat_,
            kEarthRadius * (p.lat - ref_.lat) * kDegToRad};
  }

  LatLon to_latlon(XY q) const {
    return {ref_.lat + q.y / (kEarthRadius * kDegToRad),
            ref_.lon + q.x / (kEarthRadius * kDegToRad * coslat_)};
  }

  LatLon reference() const { return ref_; }

 private:
  LatLon ref_{};
  double coslat_ = 1.0;
};

inline double polyline_length(std::span<const LatLon> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += haversine(pts[i - 1], pts[i]);
  return len;
}

struct Projection {
  double distance = 0.0;  // meters from the query point
  double offset = 0.0;    // arc length from the polyline start, meters
  LatLon point{};
};

// Closest point of a polyline to `p`. Each piece is projected in the tangent
// plane at `p`; distances are haversine to the foot point.
inline Projection project_onto_polyline(LatLon p, std::span<const LatLon> pts) {
  Projection best;
  best.distance = INFINITY;
  const LocalProjection local(p);
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const XY a = local.to_xy(pts[i - 1]);
    const XY b = local.to_xy(pts[i]);
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double l2 = dx * dx + dy * dy;
    double t = l2 > 0 ? -(a.x * dx + a.y * dy) / l2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const LatLon q = lerp(pts[i - 1], pts[i], t);
    const double d = haversine(p, q);
    const double piece = haversine(pts[i - 1], pts[i]);
    if (d < best.distance) best = {d, acc + t * piece, q};
    acc += piece;
  }
  return best;
}

// Point at arc length `offset` along a polyline (clamped to the ends).
inline LatLon point_at_offset(std::span<const LatLon> pts, double offset) {
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double piece = haversine(pts[i - 1], pts[i]);
    if (offset <= acc + piece || i + 1 == pts.size()) {
      const double t = piece > 0 ? std::clamp((offset - acc) / piece, 0.0, 1.0) : 0.0;
      return lerp(pts[i - 1], pts[i], t);
    }
    acc += piece;
  }
  return pts.back();
}

}  // namespace rntraj::geo
