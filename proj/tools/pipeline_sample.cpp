// One planning tick end to end on the small network: scene -> synthetic
// features -> perception -> fusion -> target planner -> interpreter -> MPC.
// Weights are random, so the trajectory is not meaningful; the oracle path is
// printed alongside for comparison.

#include <iostream>

#include "lanecraft/lanecraft.hpp"

using namespace lanecraft;

int main() {
  const ScenarioSpec spec = gen_scenario(7, ScenarioKind::intersection);
  const WorldState world = initial_world(spec);

  const NetConfig cfg = NetConfig::small();
  AnnotateConfig ac;
  ac.schema.lane_slots = static_cast<int>(cfg.lane_slots);
  ac.schema.points_per_lane = static_cast<int>(cfg.points_per_lane);
  const Annotation a = annotate(world, spec, ac);

  NetworkPipeline<double> pipe(cfg, 7);
  pipe.fusion.gamma = 0.5;
  nn::AttentionStats stats;
  const auto grids = synthetic_features<double>(a.scene, cfg, 7);
  const auto tick = pipe.plan(grids, a.target, AblationFlags{}, &stats);

  std::cout << "target: (" << a.target.x << ", " << a.target.y << ")\n";
  std::cout << "network trajectory: " << trajectory_to_json(tick.trajectory).dump() << "\n";
  std::cout << "attention rows checked: " << stats.rows << ", worst |sum - 1| = " << stats.max_row_error << "\n";

  const Trajectory oracle = interpret(annotate(world, spec).scene);
  std::cout << "oracle path points: " << oracle.path.size() << ", stop: " << std::boolalpha << oracle.stop << "\n";
  const ControlCommand cmd = track(oracle, VehicleState{0.0, 0.0, 0.0, world.ego.v});
  std::cout << "first command: steer " << cmd.steer << " throttle " << cmd.throttle << " brake " << cmd.brake << "\n";
}
