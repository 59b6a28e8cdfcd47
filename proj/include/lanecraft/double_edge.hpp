#pragma once

// Lane representation: each lane is a pair of left/right edges sampled at the
// same arc positions. Lane-level attributes (intersection, direction) live on
// the DoubleEdge; point-level attributes (occupancy, plan) on each EdgePoint.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanecraft/geometry.hpp"

namespace lanecraft {

// occ == 1: the lane cross-section at this point is free of agents.
// plan == 1: the point belongs to the planned corridor.
struct EdgePoint {
  double x = 0.0;
  double y = 0.0;
  int occ = 1;
  int plan = 0;

  friend bool operator==(const EdgePoint&, const EdgePoint&) = default;
  Point2 position() const { return {x, y}; }
};

// Ordered by increasing arc position; index j pairs with index j of the opposite edge.
using Edge = std::vector<EdgePoint>;

struct DoubleEdge {
  Edge left;
  Edge right;
  int intersection = 0;  // 1 iff the lane lies in an intersection region
  int direction = 1;     // 1 iff the lane runs with the ego travel direction

  friend bool operator==(const DoubleEdge&, const DoubleEdge&) = default;
};

enum class Signal { green, red, yellow, none };

inline const char* to_string(Signal s) {
  switch (s) {
    case Signal::green: return "green";
    case Signal::red: return "red";
    case Signal::yellow: return "yellow";
    case Signal::none: return "none";
  }
  return "none";
}

inline Signal signal_from_string(const std::string& s) {
  if (s == "green") return Signal::green;
  if (s == "red") return Signal::red;
  if (s == "yellow") return Signal::yellow;
  if (s == "none") return Signal::none;
  throw std::invalid_argument("unknown signal '" + s + "'");
}

inline int signal_index(Signal s) { return static_cast<int>(s); }
inline constexpr int kSignalClasses = 4;

struct SceneAnnotation {
  std::vector<DoubleEdge> lanes;  // real lanes only; slot padding is a mask downstream
  double speed = 0.0;             // m/s
  Signal signal = Signal::none;

  friend bool operator==(const SceneAnnotation&, const SceneAnnotation&) = default;
};

struct TargetPoint {
  double x = 0.0;
  double y = 0.0;
};

struct SchemaConfig {
  int lane_slots = 30;         // N_d
  int points_per_lane = 20;    // N_p (both edges together)
  double bev_range_x = 32.0;
  double bev_range_y = 32.0;

  int points_per_edge() const { return points_per_lane / 2; }
};

struct Violation {
  int lane = -1;  // -1 for scene-level rules
  std::string field;
  std::string rule;
};

inline std::vector<Violation> validate(const SceneAnnotation& scene, const SchemaConfig& cfg = {}) {
  std::vector<Violation> out;
  auto add = [&](int lane, std::string field, std::string rule) {
    out.push_back({lane, std::move(field), std::move(rule)});
  };
  if (static_cast<int>(scene.lanes.size()) > cfg.lane_slots) add(-1, "lanes", "too many lanes");
  if (!(scene.speed >= 0.0) || !std::isfinite(scene.speed)) add(-1, "speed", "speed must be finite and >= 0");

  const auto per_edge = static_cast<std::size_t>(cfg.points_per_edge());
  for (std::size_t i = 0; i < scene.lanes.size(); ++i) {
    const auto& lane = scene.lanes[i];
    const int li = static_cast<int>(i);
    if (lane.left.size() != lane.right.size()) add(li, "left/right", "edge length mismatch");
    if (lane.left.size() != per_edge) add(li, "left", "edge length != N_p/2");
    if (lane.right.size() != per_edge) add(li, "right", "edge length != N_p/2");
    if (lane.intersection != 0 && lane.intersection != 1) add(li, "int", "attribute not binary");
    if (lane.direction != 0 && lane.direction != 1) add(li, "dir", "attribute not binary");
    for (const auto* edge : {&lane.left, &lane.right}) {
      const std::string side = edge == &lane.left ? "left" : "right";
      for (std::size_t j = 0; j < edge->size(); ++j) {
        const auto& p = (*edge)[j];
        const std::string where = side + "[" + std::to_string(j) + "]";
        if (p.occ != 0 && p.occ != 1) add(li, where + ".occ", "attribute not binary");
        if (p.plan != 0 && p.plan != 1) add(li, where + ".plan", "attribute not binary");
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
          add(li, where, "non-finite coordinate");
        } else if (std::abs(p.x) > cfg.bev_range_x || std::abs(p.y) > cfg.bev_range_y) {
          add(li, where, "point outside BEV extent");
        }
      }
    }
  }
  return out;
}

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed ring: left edge in order, then right edge reversed.
inline std::vector<Point2> lane_polygon(const DoubleEdge& lane) {
  if (lane.left.size() != lane.right.size()) throw GeometryError("edge length mismatch");
  if (lane.left.empty()) throw GeometryError("degenerate geometry");
  std::vector<Point2> ring;
  ring.reserve(2 * lane.left.size());
  for (const auto& p : lane.left) ring.push_back(p.position());
  for (auto it = lane.right.rbegin(); it != lane.right.rend(); ++it) ring.push_back(it->position());
  bool all_same = true;
  for (const auto& p : ring) all_same = all_same && p == ring.front();
  if (all_same || lane.left.size() < 2) throw GeometryError("degenerate geometry");
  return ring;
}

inline Point2 lane_midpoint(const DoubleEdge& lane, std::size_t j) {
  return (lane.left[j].position() + lane.right[j].position()) * 0.5;
}

}  // namespace lanecraft
