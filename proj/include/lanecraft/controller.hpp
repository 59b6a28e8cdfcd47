#pragma once

// Kinematic bicycle model and a lattice-search receding-horizon tracker.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "lanecraft/geometry.hpp"
#include "lanecraft/interpreter.hpp"

namespace lanecraft {

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlCommand {
  double steer = 0.0;     // [-1, 1], positive turns left
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]

  friend bool operator==(const ControlCommand&, const ControlCommand&) = default;
};

struct VehicleParams {
  double wheelbase = 2.8;
  double max_steer = 35.0 * std::numbers::pi / 180.0;
  double max_accel = 3.0;
  double max_decel = 8.0;
  double drag = 0.05;  // 1/s, deceleration per unit speed
};

inline ControlCommand clamp_command(ControlCommand c) {
  c.steer = std::clamp(c.steer, -1.0, 1.0);
  c.throttle = std::clamp(c.throttle, 0.0, 1.0);
  c.brake = std::clamp(c.brake, 0.0, 1.0);
  if (c.brake > 0) c.throttle = 0.0;
  return c;
}

inline VehicleState bicycle_step(const VehicleState& s, const ControlCommand& cmd, double dt,
                                 const VehicleParams& p = {}) {
  const ControlCommand c = clamp_command(cmd);
  VehicleState n = s;
  n.x += s.v * std::cos(s.yaw) * dt;
  n.y += s.v * std::sin(s.yaw) * dt;
  n.yaw = wrap_angle(s.yaw + s.v / p.wheelbase * std::tan(p.max_steer * c.steer) * dt);
  n.v = std::max(0.0, s.v + (p.max_accel * c.throttle - p.max_decel * c.brake - p.drag * s.v) * dt);
  return n;
}

struct MpcConfig {
  int horizon = 8;
  double dt = 0.1;
  VehicleParams vehicle;
  double w_crosstrack = 1.0;
  double w_heading = 2.0;
  double w_speed = 0.2;
  double w_steer_rate = 0.5;
  int sweeps = 3;

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("mpc horizon must be >= 1");
    if (!(dt > 0)) throw std::invalid_argument("mpc dt must be > 0");
    if (sweeps < 1) throw std::invalid_argument("mpc sweeps must be >= 1");
  }
};

// Symmetric under steer -> -steer so mirrored problems get mirrored answers.
inline constexpr std::array<double, 7> kSteerLattice{0.0, 0.08, -0.08, 0.25, -0.25, 0.6, -0.6};
inline constexpr std::array<double, 5> kAccelLattice{0.0, 0.5, -0.5, 1.0, -1.0};

inline ControlCommand accel_to_command(double steer, double accel) {
  return {steer, accel > 0 ? accel : 0.0, accel < 0 ? -accel : 0.0};
}

namespace detail {

inline std::vector<Point2> tracking_line(const std::vector<Point2>& path, const VehicleState& s) {
  std::vector<Point2> line;
  for (const auto& p : path) {
    if (line.empty() || distance(line.back(), p) > 1e-3) line.push_back(p);
  }
  if (line.size() == 1) line.insert(line.begin(), Point2{s.x, s.y});
  if (line.size() == 2 && distance(line[0], line[1]) <= 1e-3) line.pop_back();
  return line;
}

inline double rollout_cost(const std::vector<Point2>& line, const VehicleState& start, double target_speed,
                           const std::vector<double>& steer, const std::vector<double>& accel, double prev_steer,
                           const MpcConfig& cfg) {
  VehicleState s = start;
  double cost = 0.0, last = prev_steer;
  for (std::size_t k = 0; k < steer.size(); ++k) {
    s = bicycle_step(s, accel_to_command(steer[k], accel[k]), cfg.dt, cfg.vehicle);
    const auto proj = project_onto_polyline({s.x, s.y}, line, true);
    const double he = wrap_angle(s.yaw - proj.heading);
    const double dv = s.v - target_speed;
    const double ds = steer[k] - last;
    cost += cfg.w_crosstrack * proj.distance * proj.distance + cfg.w_heading * he * he + cfg.w_speed * dv * dv +
            cfg.w_steer_rate * ds * ds;
    last = steer[k];
  }
  return cost;
}

}  // namespace detail

// First command of the best lattice sequence found by coordinate descent
// (each step in turn re-optimised with the others held fixed).
inline ControlCommand track(const Trajectory& traj, const VehicleState& state, const MpcConfig& cfg = {},
                            double prev_steer = 0.0) {
  cfg.validate();
  if (traj.stop) return {0.0, 0.0, 1.0};
  if (traj.path.empty()) throw std::invalid_argument("no path to track");
  const auto line = detail::tracking_line(traj.path, state);
  if (line.size() < 2) return {0.0, 0.0, 1.0};  // already at the only point

  const auto H = static_cast<std::size_t>(cfg.horizon);
  std::vector<double> steer(H, 0.0), accel(H, 0.0);
  double best = detail::rollout_cost(line, state, traj.speed, steer, accel, prev_steer, cfg);
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    bool improved = false;
    for (std::size_t k = 0; k < H; ++k) {
      const double s0 = steer[k], a0 = accel[k];
      double bs = s0, ba = a0;
      for (double sv : kSteerLattice) {
        for (double av : kAccelLattice) {
          steer[k] = sv;
          accel[k] = av;
          const double c = detail::rollout_cost(line, state, traj.speed, steer, accel, prev_steer, cfg);
          if (c < best) {
            best = c;
            bs = sv;
            ba = av;
            improved = true;
          }
        }
      }
      steer[k] = bs;
      accel[k] = ba;
    }
    if (!improved) break;
  }
  return clamp_command(accel_to_command(steer[0], accel[0]));
}

}  // namespace lanecraft
