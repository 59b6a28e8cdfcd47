#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace lanecraft {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
  Point2 operator+(Point2 o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(Point2 o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

// Rigid transform of the ego pose: world -> ego frame (forward = +x, left = +y).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Point2 to_local(Point2 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x - x, dy = p.y - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }
  Point2 to_world(Point2 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
  }
};

namespace detail {
inline int orientation(Point2 a, Point2 b, Point2 c) {
  const double v = cross(b - a, c - a);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}
inline bool on_segment(Point2 a, Point2 b, Point2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}
}  // namespace detail

// Closed segments, collinear overlaps included.
inline bool segments_intersect(Point2 p1, Point2 p2, Point2 q1, Point2 q2) {
  using detail::on_segment;
  using detail::orientation;
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

inline bool point_in_polygon(Point2 p, std::span<const Point2> poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xi = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < xi) inside = !inside;
    }
  }
  return inside;
}

// True when two simple polygons share any point (edge crossing or containment).
inline bool polygons_intersect(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.empty() || b.empty()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point2 a0 = a[i], a1 = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (segments_intersect(a0, a1, b[j], b[(j + 1) % b.size()])) return true;
    }
  }
  return point_in_polygon(a[0], b) || point_in_polygon(b[0], a);
}

// Rectangle footprint centred at `center`, long side along `yaw`.
inline std::vector<Point2> oriented_box(Point2 center, double yaw, double length, double width) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hl = 0.5 * length, hw = 0.5 * width;
  const Point2 f{c * hl, s * hl}, l{-s * hw, c * hw};
  return {center + f + l, center - f + l, center - f - l, center + f - l};
}

struct PolylineProjection {
  double distance = 0.0;   // unsigned distance to the polyline
  double arc = 0.0;        // arc length of the foot point
  std::size_t segment = 0;
  double heading = 0.0;    // heading of the segment holding the foot point
};

// Nearest point on a polyline with >= 2 vertices. When `extend_ends` is set the
// first and last segments behave as rays, so points before the start or past the
// end project onto the extensions.
inline PolylineProjection project_onto_polyline(Point2 p, std::span<const Point2> line,
                                                bool extend_ends = false) {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  double arc0 = 0.0;
  const std::size_t nseg = line.size() - 1;
  for (std::size_t i = 0; i < nseg; ++i) {
    const Point2 a = line[i], b = line[i + 1];
    const Point2 d = b - a;
    const double len2 = dot(d, d);
    const double len = std::sqrt(len2);
    double t = len2 > 0 ? dot(p - a, d) / len2 : 0.0;
    const double lo = (extend_ends && i == 0) ? -std::numeric_limits<double>::infinity() : 0.0;
    const double hi = (extend_ends && i + 1 == nseg) ? std::numeric_limits<double>::infinity() : 1.0;
    t = std::clamp(t, lo, hi);
    const Point2 foot = a + d * t;
    const double dist = distance(p, foot);
    if (dist < best.distance) {
      best.distance = dist;
      best.arc = arc0 + t * len;
      best.segment = i;
      best.heading = std::atan2(d.y, d.x);
    }
    arc0 += len;
  }
  return best;
}

inline double polyline_length(std::span<const Point2> line) {
  double s = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) s += distance(line[i - 1], line[i]);
  return s;
}

// Point and heading at arc length `s` (clamped to the polyline).
inline std::pair<Point2, double> sample_polyline(std::span<const Point2> line, double s) {
  if (line.size() == 1) return {line[0], 0.0};
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Point2 a = line[i], b = line[i + 1];
    const double len = distance(a, b);
    const bool last = i + 2 == line.size();
    if (s <= acc + len || last) {
      const double t = len > 0 ? std::clamp((s - acc) / len, 0.0, 1.0) : 0.0;
      return {a + (b - a) * t, std::atan2(b.y - a.y, b.x - a.x)};
    }
    acc += len;
  }
  return {line.back(), 0.0};
}

}  // namespace lanecraft
