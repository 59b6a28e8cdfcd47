#pragma once

// Closed-loop synthetic world: scenario generation, privileged double-edge
// annotation, world stepping and episode metrics. World frame: the ego starts
// at the origin facing +x; right-hand traffic.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanecraft/controller.hpp"
#include "lanecraft/double_edge.hpp"
#include "lanecraft/geometry.hpp"
#include "lanecraft/interpreter.hpp"
#include "lanecraft/rng.hpp"
#include "lanecraft/scene_io.hpp"

namespace lanecraft {

enum class ScenarioKind { straight, curve, intersection, multi_lane, blocked_lane, red_light };

inline const std::vector<ScenarioKind>& all_scenario_kinds() {
  static const std::vector<ScenarioKind> k{ScenarioKind::straight,   ScenarioKind::curve,
                                           ScenarioKind::intersection, ScenarioKind::multi_lane,
                                           ScenarioKind::blocked_lane, ScenarioKind::red_light};
  return k;
}

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::straight: return "straight";
    case ScenarioKind::curve: return "curve";
    case ScenarioKind::intersection: return "intersection";
    case ScenarioKind::multi_lane: return "multi_lane";
    case ScenarioKind::blocked_lane: return "blocked_lane";
    case ScenarioKind::red_light: return "red_light";
  }
  return "straight";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  for (auto k : all_scenario_kinds()) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown scenario kind '" + s + "'");
}

struct WorldLane {
  int id = 0;
  std::vector<Point2> centerline;  // >= 2 points, ~1 m spacing
  double width = 3.5;
  bool intersection = false;
  std::vector<int> successors;
};

// Follows `path` from `start_arc`; holds still until `wait_until`, then moves at `speed`.
struct AgentSpec {
  double length = 4.5;
  double width = 2.0;
  std::vector<Point2> path;
  double start_arc = 0.0;
  double wait_until = 0.0;
  double speed = 0.0;
  int lane = -1;

  Pose2 pose(double t) const {
    const double s = start_arc + speed * std::max(0.0, t - wait_until);
    const auto [p, heading] = sample_polyline(path, s);
    return {p.x, p.y, heading};
  }
  std::vector<Point2> footprint(double t) const {
    const Pose2 p = pose(t);
    return oriented_box({p.x, p.y}, p.yaw, length, width);
  }
};

struct SignalChange {
  double t = 0.0;
  Signal state = Signal::none;
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  ScenarioKind kind = ScenarioKind::straight;
  double speed_limit = 8.0;
  std::vector<WorldLane> lanes;
  std::vector<int> route;          // lane ids, in driving order
  double route_start = 0.0;        // arc along the route chain where the route begins
  double route_end = 0.0;          // ... and where the goal sits
  std::vector<AgentSpec> agents;
  std::vector<SignalChange> signal_schedule;
  std::vector<std::vector<Point2>> intersection_regions;
  VehicleState ego_start;

  const WorldLane& lane(int id) const {
    for (const auto& l : lanes) {
      if (l.id == id) return l;
    }
    throw std::out_of_range("no lane with id " + std::to_string(id));
  }

  Signal signal_at(double t) const {
    Signal s = Signal::none;
    for (const auto& c : signal_schedule) {
      if (c.t <= t) s = c.state;
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Polyline helpers

inline std::vector<Point2> line_points(Point2 a, Point2 b, double step = 1.0) {
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  std::vector<Point2> out;
  for (int k = 0; k <= n; ++k) out.push_back(a + (b - a) * (static_cast<double>(k) / n));
  return out;
}

// Arc around `c` from angle a0 to a1 (radians, either direction).
inline std::vector<Point2> arc_points(Point2 c, double r, double a0, double a1, double step = 1.0) {
  const int n = std::max(2, static_cast<int>(std::ceil(std::abs(a1 - a0) * r / step)));
  std::vector<Point2> out;
  for (int k = 0; k <= n; ++k) {
    const double a = a0 + (a1 - a0) * k / n;
    out.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return out;
}

inline void append_polyline(std::vector<Point2>& dst, const std::vector<Point2>& src) {
  for (const auto& p : src) {
    if (dst.empty() || distance(dst.back(), p) > 1e-9) dst.push_back(p);
  }
}

inline std::vector<Point2> slice_polyline(const std::vector<Point2>& line, double s0, double s1) {
  std::vector<Point2> out{sample_polyline(line, s0).first};
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    acc += distance(line[i - 1], line[i]);
    if (acc > s0 && acc < s1) out.push_back(line[i]);
  }
  out.push_back(sample_polyline(line, s1).first);
  return out;
}

// Concatenated centerlines of a lane chain and the arc offset of each lane.
struct LaneChain {
  std::vector<int> ids;
  std::vector<double> offsets;
  std::vector<Point2> line;

  std::optional<double> offset_of(int id) const {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (ids[k] == id) return offsets[k];
    }
    return std::nullopt;
  }
};

inline LaneChain make_chain(const ScenarioSpec& spec, const std::vector<int>& ids) {
  LaneChain c;
  c.ids = ids;
  double acc = 0.0;
  for (int id : ids) {
    const auto& cl = spec.lane(id).centerline;
    c.offsets.push_back(acc);
    append_polyline(c.line, cl);
    acc += polyline_length(cl);
  }
  return c;
}

inline std::vector<Point2> route_polyline(const ScenarioSpec& spec) {
  return slice_polyline(make_chain(spec, spec.route).line, spec.route_start, spec.route_end);
}

inline double lane_heading_at(const WorldLane& lane, double s) { return sample_polyline(lane.centerline, s).second; }

// ---------------------------------------------------------------------------
// Scenario generation

namespace detail {

struct IntersectionLayout {
  int approach = 0, straight = 1, left = 2, right = 3, exit_straight = 4, exit_left = 5, exit_right = 6;
};

// Four-way junction whose west edge is at x = entry. Ego road runs along +x
// with its lane on y = 0 and the opposing lane on y = 3.5.
inline IntersectionLayout build_intersection(ScenarioSpec& spec, double entry) {
  const double w = 3.5, x0 = entry, x1 = entry + 16.0, yn = 9.75, ys = -6.25;
  const double xnb = entry + 9.75, xsb = entry + 6.25;
  auto add = [&](int id, std::vector<Point2> pts, bool inter, std::vector<int> succ) {
    spec.lanes.push_back({id, std::move(pts), w, inter, std::move(succ)});
  };
  IntersectionLayout L;
  const double pi = std::numbers::pi;
  add(L.approach, line_points({-20, 0}, {x0, 0}), false, {L.straight, L.left, L.right});
  add(L.straight, line_points({x0, 0}, {x1, 0}), true, {L.exit_straight});
  add(L.left, arc_points({x0, yn}, yn, -pi / 2, 0), true, {L.exit_left});
  add(L.right, arc_points({x0, ys}, -ys, pi / 2, 0), true, {L.exit_right});
  add(L.exit_straight, line_points({x1, 0}, {x1 + 70, 0}), false, {});
  add(L.exit_left, line_points({xnb, yn}, {xnb, yn + 70}), false, {});
  add(L.exit_right, line_points({xsb, ys}, {xsb, ys - 70}), false, {});
  // opposing and crossing traffic
  add(7, line_points({x1 + 70, w}, {x1, w}), false, {8});
  add(8, line_points({x1, w}, {x0, w}), true, {9});
  add(9, line_points({x0, w}, {-20, w}), false, {});
  add(10, line_points({xnb, ys - 70}, {xnb, ys}), false, {11});
  add(11, line_points({xnb, ys}, {xnb, yn}), true, {5});
  add(12, line_points({xsb, yn + 70}, {xsb, yn}), false, {13});
  add(13, line_points({xsb, yn}, {xsb, ys}), true, {6});
  spec.intersection_regions.push_back({{x0, ys}, {x1, ys}, {x1, yn}, {x0, yn}});
  return L;
}

inline void finish_route(ScenarioSpec& spec, std::vector<int> route, double start, double goal_after_start) {
  spec.route = std::move(route);
  spec.route_start = start;
  spec.route_end = start + goal_after_start;
  const double chain_len = polyline_length(make_chain(spec, spec.route).line);
  if (spec.route_end + 30.0 > chain_len + 1e-6) throw std::logic_error("route chain too short for its goal");
}

}  // namespace detail

inline ScenarioSpec gen_scenario(std::uint64_t seed, ScenarioKind kind) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.kind = kind;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind) + 1));
  const double pi = std::numbers::pi;

  switch (kind) {
    case ScenarioKind::straight: {
      const double len = rng.uniform(80, 110);
      spec.lanes.push_back({0, line_points({-20, 0}, {len + 30, 0}), 3.5, false, {}});
      detail::finish_route(spec, {0}, 20.0, len);
      break;
    }
    case ScenarioKind::curve: {
      const double r = rng.uniform(25, 40);
      const double sgn = rng.bernoulli(0.5) ? 1.0 : -1.0;  // +1 turns left
      std::vector<Point2> cl = line_points({-20, 0}, {30, 0});
      const Point2 c{30, sgn * r};
      append_polyline(cl, arc_points(c, r, -sgn * pi / 2, 0.0));
      const Point2 end = cl.back();
      append_polyline(cl, line_points(end, {end.x, end.y + sgn * 72}));
      spec.lanes.push_back({0, cl, 3.5, false, {}});
      detail::finish_route(spec, {0}, 20.0, 30.0 + r * pi / 2 + 40.0);
      break;
    }
    case ScenarioKind::intersection:
    case ScenarioKind::red_light: {
      const bool red = kind == ScenarioKind::red_light;
      const double entry = red ? rng.uniform(28, 34) : rng.uniform(36, 44);
      const auto L = detail::build_intersection(spec, entry);
      int turn = red ? 0 : static_cast<int>(seed % 3);
      const int connector = turn == 0 ? L.straight : (turn == 1 ? L.left : L.right);
      const int exit = turn == 0 ? L.exit_straight : (turn == 1 ? L.exit_left : L.exit_right);
      const double conn_len = polyline_length(spec.lane(connector).centerline);
      detail::finish_route(spec, {L.approach, connector, exit}, 20.0, entry + conn_len + 35.0);
      if (red) {
        spec.signal_schedule = {{0.0, Signal::red}, {rng.uniform(7.5, 9.0), Signal::green}};
      } else {
        spec.signal_schedule = {{0.0, Signal::green}};
      }
      break;
    }
    case ScenarioKind::multi_lane: {
      const double len = rng.uniform(90, 110);
      const int route_lane = static_cast<int>(seed % 2);
      spec.lanes.push_back({0, line_points({-20, 0}, {len + 40, 0}), 3.5, false, {}});
      spec.lanes.push_back({1, line_points({-20, 3.5}, {len + 40, 3.5}), 3.5, false, {}});
      spec.lanes.push_back({2, line_points({len + 40, 7.0}, {-20, 7.0}), 3.5, false, {}});
      detail::finish_route(spec, {route_lane}, 20.0, len);
      AgentSpec a;
      a.lane = 1 - route_lane;
      a.path = spec.lane(a.lane).centerline;
      a.start_arc = 20.0 + rng.uniform(12, 20);
      a.speed = rng.uniform(4, 6);
      spec.agents.push_back(a);
      AgentSpec b;
      b.lane = 2;
      b.path = spec.lane(2).centerline;
      b.start_arc = rng.uniform(10, 40);
      b.speed = rng.uniform(5, 8);
      spec.agents.push_back(b);
      spec.ego_start.y = 3.5 * route_lane;
      break;
    }
    case ScenarioKind::blocked_lane: {
      const double len = rng.uniform(90, 110);
      spec.lanes.push_back({0, line_points({-20, 0}, {len + 40, 0}), 3.5, false, {}});
      spec.lanes.push_back({1, line_points({len + 40, 3.5}, {-20, 3.5}), 3.5, false, {}});
      detail::finish_route(spec, {0}, 20.0, len);
      AgentSpec a;
      a.lane = 0;
      a.path = spec.lane(0).centerline;
      a.start_arc = 20.0 + rng.uniform(38, 48);
      a.wait_until = 12.0;
      a.speed = 10.0;
      spec.agents.push_back(a);
      break;
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// World state and annotation

struct WorldState {
  double t = 0.0;
  VehicleState ego;
  std::vector<Pose2> agents;
  Signal signal = Signal::none;
};

inline WorldState initial_world(const ScenarioSpec& spec) {
  WorldState w;
  w.ego = spec.ego_start;
  for (const auto& a : spec.agents) w.agents.push_back(a.pose(0.0));
  w.signal = spec.signal_at(0.0);
  return w;
}

inline WorldState step(const WorldState& world, const ControlCommand& cmd, double dt, const ScenarioSpec& spec,
                       const VehicleParams& vp = {}) {
  WorldState n = world;
  n.ego = bicycle_step(world.ego, cmd, dt, vp);
  n.t = world.t + dt;
  for (std::size_t i = 0; i < spec.agents.size(); ++i) n.agents[i] = spec.agents[i].pose(n.t);
  n.signal = spec.signal_at(n.t);
  return n;
}

struct AnnotateConfig {
  SchemaConfig schema;
  double chunk_length = 20.0;
  double corridor_length = 24.0;
  double target_distance = 20.0;
  double bev_margin = 0.5;
  double corridor_capture = 8.0;  // max ego distance from the corridor chain for plan bits to be set
  bool target_guided = true;  // false: corridor follows the straightest successors, ignoring the route
};

struct Annotation {
  SceneAnnotation scene;
  TargetPoint target;
  std::vector<int> lane_ids;  // world lane behind each scene lane
};

namespace detail {

inline double heading_change(const WorldLane& lane) {
  const auto& c = lane.centerline;
  const double h0 = std::atan2(c[1].y - c[0].y, c[1].x - c[0].x);
  const auto n = c.size();
  const double h1 = std::atan2(c[n - 1].y - c[n - 2].y, c[n - 1].x - c[n - 2].x);
  return std::abs(wrap_angle(h1 - h0));
}

// Nearest lane running with the ego heading, then its straightest successors.
inline std::vector<int> straightest_chain(const ScenarioSpec& spec, const VehicleState& ego, double min_length) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& lane : spec.lanes) {
    const auto proj = project_onto_polyline({ego.x, ego.y}, lane.centerline);
    if (std::cos(proj.heading - ego.yaw) <= 0) continue;
    if (proj.distance < best_d) {
      best_d = proj.distance;
      best = lane.id;
    }
  }
  std::vector<int> chain;
  if (best < 0) return chain;
  chain.push_back(best);
  double len = polyline_length(spec.lane(best).centerline);
  while (len < min_length) {
    const auto& succ = spec.lane(chain.back()).successors;
    if (succ.empty()) break;
    int pick = succ.front();
    for (int id : succ) {
      if (heading_change(spec.lane(id)) < heading_change(spec.lane(pick)) - 1e-9) pick = id;
    }
    chain.push_back(pick);
    len += polyline_length(spec.lane(pick).centerline);
  }
  return chain;
}

struct Chunk {
  int lane = 0;
  std::vector<double> arcs;  // lane arc of each point
  double distance = 0.0;     // nearest centre point to the ego
};

}  // namespace detail

inline Annotation annotate(const WorldState& world, const ScenarioSpec& spec, const AnnotateConfig& cfg = {}) {
  const Pose2 ego{world.ego.x, world.ego.y, world.ego.yaw};
  const std::size_t per_edge = static_cast<std::size_t>(cfg.schema.points_per_edge());
  const double rx = cfg.schema.bev_range_x - cfg.bev_margin, ry = cfg.schema.bev_range_y - cfg.bev_margin;

  auto edge_points = [&](const WorldLane& lane, double s) {
    const auto [c, h] = sample_polyline(lane.centerline, s);
    const Point2 n{-std::sin(h) * lane.width / 2, std::cos(h) * lane.width / 2};
    return std::pair{c + n, c - n};
  };
  auto inside = [&](Point2 world_p) {
    const Point2 p = ego.to_local(world_p);
    return std::abs(p.x) <= rx && std::abs(p.y) <= ry;
  };

  // Clip every lane to the BEV window and cut the visible runs into chunks.
  std::vector<detail::Chunk> chunks;
  for (const auto& lane : spec.lanes) {
    const double len = polyline_length(lane.centerline);
    const int n = static_cast<int>(std::floor(len / 0.5));
    double run_start = -1.0, last_in = -1.0;
    auto flush = [&] {
      if (run_start < 0) return;
      const double run = last_in - run_start;
      if (run >= 1.0) {
        const int pieces = static_cast<int>(std::ceil(run / cfg.chunk_length - 1e-9));
        for (int k = 0; k < pieces; ++k) {
          detail::Chunk ch;
          ch.lane = lane.id;
          const double a = run_start + run * k / pieces, b = run_start + run * (k + 1) / pieces;
          ch.distance = std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < per_edge; ++j) {
            const double s = a + (b - a) * static_cast<double>(j) / static_cast<double>(per_edge - 1);
            ch.arcs.push_back(s);
            ch.distance = std::min(ch.distance, norm(ego.to_local(sample_polyline(lane.centerline, s).first)));
          }
          chunks.push_back(std::move(ch));
        }
      }
      run_start = -1.0;
    };
    for (int k = 0; k <= n; ++k) {
      const double s = std::min(len, 0.5 * k);
      const auto [l, r] = edge_points(lane, s);
      if (inside(l) && inside(r)) {
        if (run_start < 0) run_start = s;
        last_in = s;
      } else {
        flush();
      }
    }
    flush();
  }
  std::stable_sort(chunks.begin(), chunks.end(),
                   [](const detail::Chunk& a, const detail::Chunk& b) { return a.distance < b.distance; });
  if (chunks.size() > static_cast<std::size_t>(cfg.schema.lane_slots)) {
    chunks.resize(static_cast<std::size_t>(cfg.schema.lane_slots));
  }

  // Corridor chain and the ego's arc along it.
  const LaneChain route = make_chain(spec, spec.route);
  const LaneChain chain = cfg.target_guided
                              ? route
                              : make_chain(spec, detail::straightest_chain(spec, world.ego, 80.0));
  double s_ego = 0.0;
  bool on_chain = false;
  if (chain.line.size() >= 2) {
    const auto proj = project_onto_polyline({world.ego.x, world.ego.y}, chain.line);
    s_ego = proj.arc;
    on_chain = proj.distance <= cfg.corridor_capture;
  }

  std::vector<std::vector<Point2>> footprints;
  for (const auto& a : spec.agents) footprints.push_back(a.footprint(world.t));

  Annotation out;
  for (const auto& ch : chunks) {
    const WorldLane& lane = spec.lane(ch.lane);
    DoubleEdge de;
    de.intersection = lane.intersection ? 1 : 0;

    // Direction: lane heading vs the route heading next to the chunk centre.
    const double mid_s = ch.arcs[per_edge / 2];
    const auto [mid_p, mid_h] = sample_polyline(lane.centerline, mid_s);
    const auto rproj = project_onto_polyline(mid_p, route.line);
    de.direction = std::cos(mid_h - rproj.heading) > 0 ? 1 : 0;

    const auto chain_offset = chain.offset_of(lane.id);
    std::vector<std::pair<Point2, Point2>> world_edges;
    for (double s : ch.arcs) world_edges.push_back(edge_points(lane, s));
    for (std::size_t j = 0; j < per_edge; ++j) {
      // Cell of point j: halfway to each neighbour along the chunk.
      const double s = ch.arcs[j];
      const double s_lo = j == 0 ? s : 0.5 * (ch.arcs[j - 1] + s);
      const double s_hi = j + 1 == per_edge ? s : 0.5 * (s + ch.arcs[j + 1]);
      const auto [l0, r0] = edge_points(lane, s_lo);
      const auto [l1, r1] = edge_points(lane, s_hi);
      const std::vector<Point2> cell{l0, l1, r1, r0};
      int occ = 1;
      for (const auto& fp : footprints) {
        if (polygons_intersect(cell, fp)) occ = 0;
      }
      int plan = 0;
      if (on_chain && chain_offset) {
        const double a = *chain_offset + s;
        plan = (a >= s_ego && a <= s_ego + cfg.corridor_length) ? 1 : 0;
      }
      const Point2 l = ego.to_local(world_edges[j].first), r = ego.to_local(world_edges[j].second);
      de.left.push_back({l.x, l.y, occ, plan});
      de.right.push_back({r.x, r.y, occ, plan});
    }
    out.scene.lanes.push_back(std::move(de));
    out.lane_ids.push_back(lane.id);
  }
  out.scene.speed = spec.speed_limit;
  out.scene.signal = world.signal;

  const auto rp = project_onto_polyline({world.ego.x, world.ego.y}, route.line);
  const Point2 tgt = ego.to_local(sample_polyline(route.line, rp.arc + cfg.target_distance).first);
  out.target = {tgt.x, tgt.y};
  return out;
}

// Flips each occupancy bit independently with probability p.
inline void inject_occ_noise(SceneAnnotation& scene, double p, Rng& rng) {
  for (auto& lane : scene.lanes) {
    for (auto* edge : {&lane.left, &lane.right}) {
      for (auto& pt : *edge) {
        if (rng.bernoulli(p)) pt.occ = 1 - pt.occ;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Episodes

struct Infraction {
  double t = 0.0;
  std::string type;  // collision | wrong_direction | red_light | route_deviation

  friend bool operator==(const Infraction&, const Infraction&) = default;
};

inline double infraction_penalty(const std::string& type) {
  if (type == "collision") return 0.5;
  if (type == "red_light") return 0.7;
  if (type == "wrong_direction") return 0.7;
  if (type == "route_deviation") return 0.8;
  throw std::invalid_argument("unknown infraction type '" + type + "'");
}

inline double infraction_score(const std::vector<Infraction>& inf) {
  double s = 1.0;
  for (const auto& i : inf) s *= infraction_penalty(i.type);
  return s;
}

struct EpisodeResult {
  std::string kind;
  std::uint64_t seed = 0;
  double rc = 0.0;
  std::vector<Infraction> infractions;
  double is_score = 1.0;
  double ds = 0.0;
  std::size_t ticks = 0;
  std::string termination;  // completed | collision | route_deviation | timeout
  std::vector<double> wall_ms_per_tick;
};

inline json episode_to_json(const EpisodeResult& r, bool with_timing = true) {
  json inf = json::array();
  for (const auto& i : r.infractions) inf.push_back({{"t", i.t}, {"type", i.type}});
  json j{{"kind", r.kind},         {"seed", r.seed},   {"rc", r.rc},       {"infractions", inf},
         {"is_score", r.is_score}, {"ds", r.ds},       {"ticks", r.ticks}, {"termination", r.termination}};
  if (with_timing) j["wall_ms_per_tick"] = r.wall_ms_per_tick;
  return j;
}

inline EpisodeResult episode_from_json(const json& j) {
  EpisodeResult r;
  r.kind = j.at("kind").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rc = j.at("rc").get<double>();
  for (const auto& i : j.at("infractions")) r.infractions.push_back({i.at("t").get<double>(), i.at("type").get<std::string>()});
  r.is_score = j.at("is_score").get<double>();
  r.ds = j.at("ds").get<double>();
  r.ticks = j.at("ticks").get<std::size_t>();
  r.termination = j.at("termination").get<std::string>();
  if (j.contains("wall_ms_per_tick")) r.wall_ms_per_tick = j.at("wall_ms_per_tick").get<std::vector<double>>();
  return r;
}

struct AblationFlags {
  bool tgp = true;  // target-guided planning
  bool hef = true;  // hierarchical early fusion
  bool dlf = true;  // double-edge late fusion (stop logic)
};

struct EpisodeConfig {
  AblationFlags flags;
  double occ_noise = 0.0;      // per-bit flip probability applied to the annotation
  double timeout = 120.0;      // s
  double control_dt = 0.1;     // 10 Hz
  int plan_every = 5;          // planning at 2 Hz
  double route_sample = 0.5;   // m
  double completion_radius = 3.0;
  double deviation_limit = 8.0;
  double ego_length = 4.5;
  double ego_width = 2.0;
  MpcConfig mpc;
  AnnotateConfig annotate;
};

// Produces a trajectory in the ego frame from the current world; the oracle
// planner is the default, the network pipeline plugs in here too.
using Planner = std::function<Trajectory(const WorldState&, const ScenarioSpec&, const EpisodeConfig&, std::size_t)>;

inline Trajectory oracle_plan(const WorldState& world, const ScenarioSpec& spec, const EpisodeConfig& cfg,
                              std::size_t plan_tick) {
  AnnotateConfig ac = cfg.annotate;
  ac.target_guided = cfg.flags.tgp;
  Annotation a = annotate(world, spec, ac);
  if (cfg.occ_noise > 0) {
    Rng rng(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.kind)), plan_tick));
    inject_occ_noise(a.scene, cfg.occ_noise, rng);
  }
  return interpret(a.scene, StopOptions{cfg.flags.dlf, cfg.flags.hef, true});
}

namespace detail {
inline json trace_record(const WorldState& w, const ControlCommand& c, bool stop, const std::vector<std::string>& inf) {
  return {{"t", w.t},
          {"ego", {{"x", w.ego.x}, {"y", w.ego.y}, {"yaw", w.ego.yaw}, {"v", w.ego.v}}},
          {"command", {{"steer", c.steer}, {"throttle", c.throttle}, {"brake", c.brake}}},
          {"stop", stop},
          {"infractions", inf}};
}
}  // namespace detail

inline EpisodeResult run_episode(const ScenarioSpec& spec, const EpisodeConfig& cfg = {},
                                 const Planner& planner = oracle_plan, std::ostream* trace = nullptr) {
  EpisodeResult res;
  res.kind = to_string(spec.kind);
  res.seed = spec.seed;

  const auto route = route_polyline(spec);
  const double route_len = polyline_length(route);
  std::vector<Point2> samples;
  for (double s = 0.0; s < route_len; s += cfg.route_sample) samples.push_back(sample_polyline(route, s).first);
  samples.push_back(route.back());
  std::vector<char> covered(samples.size(), 0);
  std::size_t n_covered = 0;

  WorldState world = initial_world(spec);
  Trajectory traj_world;  // path in world coordinates
  double prev_steer = 0.0;
  bool in_junction = false, wrong_way = false;
  std::size_t plan_tick = 0;
  res.termination = "timeout";

  auto cover = [&](Point2 p) {
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (!covered[k] && distance(samples[k], p) <= cfg.completion_radius) {
        covered[k] = 1;
        ++n_covered;
      }
    }
  };
  cover({world.ego.x, world.ego.y});

  const auto max_ticks = static_cast<std::size_t>(std::llround(cfg.timeout / cfg.control_dt));
  for (std::size_t tick = 0; tick < max_ticks; ++tick) {
    if (tick % static_cast<std::size_t>(cfg.plan_every) == 0) {
      const auto t0 = std::chrono::steady_clock::now();
      const Trajectory local = planner(world, spec, cfg, plan_tick++);
      const Pose2 pose{world.ego.x, world.ego.y, world.ego.yaw};
      traj_world = local;
      for (auto& p : traj_world.path) p = pose.to_world(p);
      const auto t1 = std::chrono::steady_clock::now();
      res.wall_ms_per_tick.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    ControlCommand cmd;
    if (!traj_world.stop && traj_world.path.empty()) {
      cmd = {0.0, 0.0, 1.0};  // nothing to follow: hold
    } else {
      cmd = track(traj_world, world.ego, cfg.mpc, prev_steer);
    }
    prev_steer = cmd.steer;
    world = step(world, cmd, cfg.control_dt, spec, cfg.mpc.vehicle);
    ++res.ticks;

    std::vector<std::string> events;
    bool terminate = false;
    const Point2 ego_p{world.ego.x, world.ego.y};
    const auto ego_box = oriented_box(ego_p, world.ego.yaw, cfg.ego_length, cfg.ego_width);
    for (const auto& a : spec.agents) {
      if (polygons_intersect(ego_box, a.footprint(world.t))) {
        events.push_back("collision");
        res.termination = "collision";
        terminate = true;
        break;
      }
    }
    bool now_in_junction = false;
    for (const auto& region : spec.intersection_regions) now_in_junction = now_in_junction || point_in_polygon(ego_p, region);
    if (now_in_junction && !in_junction && world.signal == Signal::red) events.push_back("red_light");
    in_junction = now_in_junction;

    bool on_aligned = false, on_any = false;
    for (const auto& lane : spec.lanes) {
      const auto proj = project_onto_polyline(ego_p, lane.centerline);
      if (proj.distance <= lane.width / 2) {
        on_any = true;
        on_aligned = on_aligned || std::cos(proj.heading - world.ego.yaw) > 0;
      }
    }
    const bool now_wrong = on_any && !on_aligned && world.ego.v > 0.1;
    if (now_wrong && !wrong_way) events.push_back("wrong_direction");
    wrong_way = now_wrong;

    if (!terminate && project_onto_polyline(ego_p, route).distance > cfg.deviation_limit) {
      events.push_back("route_deviation");
      res.termination = "route_deviation";
      terminate = true;
    }
    for (const auto& e : events) res.infractions.push_back({world.t, e});

    cover(ego_p);
    if (trace) *trace << detail::trace_record(world, cmd, traj_world.stop, events).dump() << '\n';
    if (terminate) break;
    if (n_covered == samples.size()) {
      res.termination = "completed";
      break;
    }
  }
  res.rc = static_cast<double>(n_covered) / static_cast<double>(samples.size());
  res.is_score = infraction_score(res.infractions);
  res.ds = res.rc * res.is_score;
  return res;
}

// ---------------------------------------------------------------------------
// Scenario JSON

inline json polyline_to_json(const std::vector<Point2>& line) {
  json a = json::array();
  for (const auto& p : line) a.push_back({p.x, p.y});
  return a;
}

inline std::vector<Point2> polyline_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected array of [x, y]");
  std::vector<Point2> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string w = path + "[" + std::to_string(k) + "]";
    if (!j[k].is_array() || j[k].size() != 2) throw SchemaError(w, "expected [x, y]");
    out.push_back({detail::get_finite(j[k][0], w), detail::get_finite(j[k][1], w)});
  }
  return out;
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json lanes = json::array();
  for (const auto& l : s.lanes) {
    lanes.push_back({{"id", l.id},
                     {"centerline", polyline_to_json(l.centerline)},
                     {"width", l.width},
                     {"intersection", l.intersection},
                     {"successors", l.successors}});
  }
  json agents = json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"length", a.length},
                      {"width", a.width},
                      {"path", polyline_to_json(a.path)},
                      {"start_arc", a.start_arc},
                      {"wait_until", a.wait_until},
                      {"speed", a.speed},
                      {"lane", a.lane}});
  }
  json sched = json::array();
  for (const auto& c : s.signal_schedule) sched.push_back({{"t", c.t}, {"state", to_string(c.state)}});
  json regions = json::array();
  for (const auto& r : s.intersection_regions) regions.push_back(polyline_to_json(r));
  return {{"seed", s.seed},
          {"kind", to_string(s.kind)},
          {"speed_limit", s.speed_limit},
          {"lanes", lanes},
          {"route", s.route},
          {"route_start", s.route_start},
          {"route_end", s.route_end},
          {"agents", agents},
          {"signal_schedule", sched},
          {"intersection_regions", regions},
          {"ego_start", {{"x", s.ego_start.x}, {"y", s.ego_start.y}, {"yaw", s.ego_start.yaw}, {"v", s.ego_start.v}}}};
}

inline ScenarioSpec scenario_from_json(const json& j) {
  detail::expect_keys(j, "", {"seed", "kind", "speed_limit", "lanes", "route", "route_start", "route_end", "agents",
                              "signal_schedule", "intersection_regions", "ego_start"});
  ScenarioSpec s;
  if (!j["seed"].is_number_unsigned()) throw SchemaError("seed", "expected unsigned integer");
  s.seed = j["seed"].get<std::uint64_t>();
  try {
    s.kind = scenario_kind_from_string(j["kind"].get<std::string>());
  } catch (const std::exception& e) {
    throw SchemaError("kind", e.what());
  }
  s.speed_limit = detail::get_finite(j["speed_limit"], "speed_limit");
  for (std::size_t k = 0; k < j["lanes"].size(); ++k) {
    const std::string p = "lanes[" + std::to_string(k) + "]";
    const auto& l = j["lanes"][k];
    detail::expect_keys(l, p, {"id", "centerline", "width", "intersection", "successors"});
    WorldLane lane;
    lane.id = l["id"].get<int>();
    lane.centerline = polyline_from_json(l["centerline"], p + ".centerline");
    if (lane.centerline.size() < 2) throw SchemaError(p + ".centerline", "needs at least 2 points");
    lane.width = detail::get_finite(l["width"], p + ".width");
    lane.intersection = l["intersection"].get<bool>();
    lane.successors = l["successors"].get<std::vector<int>>();
    s.lanes.push_back(std::move(lane));
  }
  s.route = j["route"].get<std::vector<int>>();
  if (s.route.empty()) throw SchemaError("route", "route must name at least one lane");
  s.route_start = detail::get_finite(j["route_start"], "route_start");
  s.route_end = detail::get_finite(j["route_end"], "route_end");
  if (!(s.route_end > s.route_start)) throw SchemaError("route_end", "route length must be > 0");
  for (std::size_t k = 0; k < j["agents"].size(); ++k) {
    const std::string p = "agents[" + std::to_string(k) + "]";
    const auto& a = j["agents"][k];
    detail::expect_keys(a, p, {"length", "width", "path", "start_arc", "wait_until", "speed", "lane"});
    AgentSpec ag;
    ag.length = detail::get_finite(a["length"], p + ".length");
    ag.width = detail::get_finite(a["width"], p + ".width");
    ag.path = polyline_from_json(a["path"], p + ".path");
    ag.start_arc = detail::get_finite(a["start_arc"], p + ".start_arc");
    ag.wait_until = detail::get_finite(a["wait_until"], p + ".wait_until");
    ag.speed = detail::get_finite(a["speed"], p + ".speed");
    ag.lane = a["lane"].get<int>();
    s.agents.push_back(std::move(ag));
  }
  for (const auto& c : j["signal_schedule"]) {
    detail::expect_keys(c, "signal_schedule", {"t", "state"});
    s.signal_schedule.push_back({detail::get_finite(c["t"], "signal_schedule.t"),
                                 signal_from_string(c["state"].get<std::string>())});
  }
  for (const auto& r : j["intersection_regions"]) s.intersection_regions.push_back(polyline_from_json(r, "intersection_regions"));
  const auto& e = j["ego_start"];
  detail::expect_keys(e, "ego_start", {"x", "y", "yaw", "v"});
  s.ego_start = {detail::get_finite(e["x"], "ego_start.x"), detail::get_finite(e["y"], "ego_start.y"),
                 detail::get_finite(e["yaw"], "ego_start.yaw"), detail::get_finite(e["v"], "ego_start.v")};
  for (int id : s.route) s.lane(id);
  return s;
}

}  // namespace lanecraft
