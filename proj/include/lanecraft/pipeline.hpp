#pragma once

// Network-driven planning tick: features -> perception -> early fusion ->
// target-guided planner -> binarize -> interpreter. Also the latency bench.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

#include "lanecraft/controller.hpp"
#include "lanecraft/fusion.hpp"
#include "lanecraft/interpreter.hpp"
#include "lanecraft/perception.hpp"
#include "lanecraft/sim.hpp"
#include "lanecraft/target_planner.hpp"

namespace lanecraft {

inline PlannerConfig planner_config_for(const NetConfig& net) {
  PlannerConfig p;
  p.embed = net.embed;
  p.heads = net.heads;
  p.attn_width = std::min<std::size_t>(128, net.embed);
  p.attn_width -= p.attn_width % p.heads;
  if (p.attn_width == 0) p.attn_width = p.heads;
  p.mlp_hidden = net.ffn_hidden;
  p.coord_scale = net.bev_range;
  return p;
}

template <class Real>
class NetworkPipeline {
 public:
  NetworkPipeline(const NetConfig& cfg, std::uint64_t seed)
      : net(cfg, mix_seed(seed, 1)), planner(planner_config_for(cfg), mix_seed(seed, 2)) {}

  PerceptionNet<Real> net;
  TargetPlanner<Real> planner;
  FusionParams fusion;

  struct Tick {
    SceneAnnotation scene;
    Trajectory trajectory;
  };

  Tick plan(const std::vector<BasicTensor<Real>>& grids, const TargetPoint& target, const AblationFlags& flags,
            nn::AttentionStats* stats = nullptr) const {
    const auto fwd = net.forward(grids, stats);
    const auto& b = fwd.decoded.bundle;
    // With HEF off gamma is forced to 0, which leaves f_double_edge untouched.
    const auto f_plan = flags.hef ? fuse(b.double_edge, b.intersection, b.direction, b.occupancy, fusion)
                                  : b.double_edge;
    const auto F_plan = flags.tgp ? planner.plan_decode(planner.encode_target(target), f_plan, stats) : f_plan;
    const auto p_plan = planner.plan_head(F_plan);
    Tick t;
    t.scene = binarize(fwd.output, p_plan);
    t.trajectory = interpret(t.scene, StopOptions{flags.dlf, false, true});
    return t;
  }

  // Planner hook for run_episode: renders the privileged annotation into
  // synthetic features and plans from the network output.
  Planner as_planner(std::uint64_t feature_seed) const {
    return [this, feature_seed](const WorldState& w, const ScenarioSpec& spec, const EpisodeConfig& cfg,
                                std::size_t plan_tick) {
      const Annotation a = annotate(w, spec, cfg.annotate);
      const auto grids = synthetic_features<Real>(a.scene, net.config(), mix_seed(feature_seed, plan_tick));
      return plan(grids, a.target, cfg.flags).trajectory;
    };
  }
};

struct BenchReport {
  std::size_t ticks = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
  double fps = 0.0;
};

inline BenchReport summarize_latencies(std::vector<double> ms) {
  BenchReport r;
  if (ms.empty()) return r;
  std::sort(ms.begin(), ms.end());
  r.ticks = ms.size();
  const std::size_t n = ms.size();
  r.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  r.p95_ms = ms[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1)];
  double s = 0.0;
  for (double v : ms) s += v;
  r.mean_ms = s / static_cast<double>(n);
  r.fps = 1000.0 / r.median_ms;
  return r;
}

// Times full ticks (forward, fusion, planner, interpreter, controller) on
// precomputed feature grids; the feature rasterizer stands in for the camera
// backbone and is not timed.
template <class Real>
BenchReport bench_pipeline(const NetConfig& cfg, std::size_t ticks, std::uint64_t seed, std::size_t warmup = 3) {
  NetworkPipeline<Real> pipe(cfg, seed);
  const ScenarioSpec spec = gen_scenario(seed, ScenarioKind::intersection);
  const WorldState world = initial_world(spec);
  AnnotateConfig ac;
  ac.schema.lane_slots = static_cast<int>(cfg.lane_slots);
  ac.schema.points_per_lane = static_cast<int>(cfg.points_per_lane);
  const Annotation a = annotate(world, spec, ac);
  const auto grids = synthetic_features<Real>(a.scene, cfg, seed);
  const AblationFlags flags;
  const MpcConfig mpc;

  std::vector<double> ms;
  for (std::size_t k = 0; k < warmup + ticks; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto tick = pipe.plan(grids, a.target, flags);
    ControlCommand cmd{0.0, 0.0, 1.0};
    if (tick.trajectory.stop || !tick.trajectory.path.empty()) cmd = track(tick.trajectory, world.ego, mpc);
    const auto t1 = std::chrono::steady_clock::now();
    volatile double sink = cmd.steer + cmd.throttle + cmd.brake;
    (void)sink;
    if (k >= warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return summarize_latencies(std::move(ms));
}

}  // namespace lanecraft
