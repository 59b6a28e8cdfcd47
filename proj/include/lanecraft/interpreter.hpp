#pragma once

// Double-edge interpreter: probabilities -> binary attributes -> path
// (midpoints of jointly planned point pairs) -> stop decision -> trajectory.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanecraft/double_edge.hpp"
#include "lanecraft/perception.hpp"
#include "lanecraft/scene_io.hpp"

namespace lanecraft {

struct Trajectory {
  std::vector<Point2> path;
  double speed = 0.0;
  bool stop = false;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline int binarize(double prob, double tau = 0.5) { return prob >= tau ? 1 : 0; }

// Every prediction slot becomes a lane; speed and signal are copied through
// (signal = argmax of the logits, first index on ties).
template <class Real>
SceneAnnotation binarize(const PerceptionOutput<Real>& out, const BasicTensor<Real>& p_plan, double tau = 0.5) {
  const std::size_t Nd = out.points.dim(0), Np = out.points.dim(1), half = Np / 2;
  if (p_plan.size() != Nd * Np || out.p_occ.size() != Nd * Np) {
    throw ShapeError("binarize: attribute maps do not match " + shape_string(out.points.shape()));
  }
  SceneAnnotation scene;
  for (std::size_t i = 0; i < Nd; ++i) {
    DoubleEdge lane;
    lane.intersection = binarize(static_cast<double>(out.p_int[i]), tau);
    lane.direction = binarize(static_cast<double>(out.p_dir[i]), tau);
    for (std::size_t k = 0; k < Np; ++k) {
      EdgePoint p{static_cast<double>(out.points(i, k, 0)), static_cast<double>(out.points(i, k, 1)),
                  binarize(static_cast<double>(out.p_occ[i * Np + k]), tau),
                  binarize(static_cast<double>(p_plan[i * Np + k]), tau)};
      (k < half ? lane.left : lane.right).push_back(p);
    }
    scene.lanes.push_back(std::move(lane));
  }
  scene.speed = std::max(0.0, out.speed);
  const auto& logits = out.signal_logits.storage();
  scene.signal = static_cast<Signal>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  return scene;
}

// Jointly planned pairs of one lane, in point order.
inline std::vector<Point2> planned_midpoints(const DoubleEdge& lane) {
  std::vector<Point2> out;
  const std::size_t n = std::min(lane.left.size(), lane.right.size());
  for (std::size_t j = 0; j < n; ++j) {
    if (lane.left[j].plan == 1 && lane.right[j].plan == 1) out.push_back(lane_midpoint(lane, j));
  }
  return out;
}

// Lanes are visited by increasing distance of their first planned midpoint
// from the ego (origin of the BEV frame), ties by lane index.
inline std::vector<Point2> generate_path(const SceneAnnotation& scene) {
  std::vector<std::vector<Point2>> per_lane;
  for (const auto& lane : scene.lanes) per_lane.push_back(planned_midpoints(lane));
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < per_lane.size(); ++i) {
    if (!per_lane[i].empty()) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return norm(per_lane[a].front()) < norm(per_lane[b].front());
  });
  std::vector<Point2> path;
  for (auto i : order) path.insert(path.end(), per_lane[i].begin(), per_lane[i].end());
  return path;
}

struct StopOptions {
  bool late_fusion = true;     // false: never stop
  bool edge_consensus = false; // a cross-section is occupied only if both edge points say so
  bool red_light_rule = true;
};

inline bool stop_decision(const SceneAnnotation& scene, const std::vector<Point2>& path,
                          const StopOptions& opt = {}) {
  if (!opt.late_fusion) return false;
  if (path.size() == 1) return true;
  for (const auto& lane : scene.lanes) {
    if (lane.direction != 1) continue;
    const std::size_t n = std::min(lane.left.size(), lane.right.size());
    if (opt.edge_consensus) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto& l = lane.left[j];
        const auto& r = lane.right[j];
        if ((l.plan == 1 || r.plan == 1) && l.occ == 0 && r.occ == 0) return true;
      }
    } else {
      for (const auto* edge : {&lane.left, &lane.right}) {
        for (const auto& p : *edge) {
          if (p.plan == 1 && p.occ == 0) return true;
        }
      }
    }
  }
  if (opt.red_light_rule && scene.signal == Signal::red) {
    for (const auto& lane : scene.lanes) {
      if (lane.intersection == 1 && !planned_midpoints(lane).empty()) return true;
    }
  }
  return false;
}

inline Trajectory assemble_trajectory(std::vector<Point2> path, double speed, bool stop) {
  if (!(speed >= 0.0) || !std::isfinite(speed)) {
    throw std::invalid_argument("trajectory speed must be finite and >= 0, got " + std::to_string(speed));
  }
  for (const auto& p : path) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("trajectory path point not finite");
  }
  return {std::move(path), speed, stop};
}

inline Trajectory interpret(const SceneAnnotation& scene, const StopOptions& opt = {}) {
  auto path = generate_path(scene);
  const bool stop = stop_decision(scene, path, opt);
  return assemble_trajectory(std::move(path), scene.speed, stop);
}

inline json trajectory_to_json(const Trajectory& t) {
  json path = json::array();
  for (const auto& p : t.path) path.push_back({p.x, p.y});
  return {{"path", path}, {"speed", t.speed}, {"stop", t.stop}};
}

inline Trajectory trajectory_from_json(const json& j) {
  detail::expect_keys(j, "", {"path", "speed", "stop"});
  if (!j["path"].is_array()) throw SchemaError("path", "expected array");
  std::vector<Point2> path;
  for (std::size_t k = 0; k < j["path"].size(); ++k) {
    const auto& p = j["path"][k];
    const std::string where = "path[" + std::to_string(k) + "]";
    if (!p.is_array() || p.size() != 2) throw SchemaError(where, "expected [x, y]");
    path.push_back({detail::get_finite(p[0], where), detail::get_finite(p[1], where)});
  }
  if (!j["stop"].is_boolean()) throw SchemaError("stop", "expected boolean");
  const double speed = detail::get_finite(j["speed"], "speed");
  if (speed < 0) throw SchemaError("speed", "must be >= 0");
  return {std::move(path), speed, j["stop"].get<bool>()};
}

}  // namespace lanecraft
