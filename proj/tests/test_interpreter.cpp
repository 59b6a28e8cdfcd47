#include <gtest/gtest.h>

#include "lanecraft/controller.hpp"
#include "lanecraft/interpreter.hpp"
#include "lanecraft/sim.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace lanecraft;

namespace {

SceneAnnotation planned_straight(std::size_t n = 10) {
  SceneAnnotation s;
  s.lanes.push_back(scenes::straight_lane(2, 0, n));
  s.lanes[0].direction = 1;
  for (auto* e : {&s.lanes[0].left, &s.lanes[0].right}) {
    for (auto& p : *e) p.plan = 1;
  }
  s.speed = 8;
  return s;
}

PerceptionOutput<double> output_with(double prob) {
  PerceptionOutput<double> out;
  out.points = Tensor({2, 4, 2});
  out.p_int = Tensor({2, 1});
  out.p_dir = Tensor({2, 1});
  out.p_occ = Tensor({2, 4, 1});
  out.signal_logits = Tensor({4});
  for (auto* t : {&out.p_int, &out.p_dir, &out.p_occ}) {
    for (auto& v : t->storage()) v = prob;
  }
  for (std::size_t k = 0; k < out.points.size(); ++k) out.points[k] = static_cast<double>(k);
  return out;
}

}  // namespace

TEST(Binarize, ThresholdAndTieRule) {
  EXPECT_EQ(binarize(0.49), 0);
  EXPECT_EQ(binarize(0.51), 1);
  EXPECT_EQ(binarize(0.5), 1);
  auto out = output_with(0.5);
  out.speed = 4;
  out.signal_logits[1] = 3.0;
  const auto s = binarize(out, Tensor({2, 4, 1}, 0.5));
  ASSERT_EQ(s.lanes.size(), 2u);
  for (const auto& lane : s.lanes) {
    EXPECT_EQ(lane.intersection, 1);
    EXPECT_EQ(lane.direction, 1);
    ASSERT_EQ(lane.left.size(), 2u);
    for (const auto* e : {&lane.left, &lane.right}) {
      for (const auto& p : *e) {
        EXPECT_EQ(p.occ, 1);
        EXPECT_EQ(p.plan, 1);
      }
    }
  }
  EXPECT_EQ(s.lanes[0].left[1].x, 2.0);
  EXPECT_EQ(s.lanes[0].right[0].y, 5.0);
  EXPECT_EQ(s.speed, 4.0);
  EXPECT_EQ(s.signal, Signal::red);
  SchemaConfig schema;
  schema.lane_slots = 2;
  schema.points_per_lane = 4;
  EXPECT_TRUE(validate(s, schema).empty());
  EXPECT_THROW(binarize(out, Tensor({2, 3, 1})), ShapeError);
}

TEST(Binarize, IdempotentOnBinaryInput) {
  auto out = output_with(0.0);
  out.p_occ[3] = 1.0;
  out.p_int[1] = 1.0;
  Tensor plan({2, 4, 1});
  plan[2] = 1.0;
  const auto once = binarize(out, plan);
  auto again_out = out;
  for (std::size_t i = 0; i < 2; ++i) {
    again_out.p_int[i] = once.lanes[i].intersection;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& p = k < 2 ? once.lanes[i].left[k] : once.lanes[i].right[k - 2];
      again_out.p_occ[i * 4 + k] = p.occ;
      plan[i * 4 + k] = p.plan;
    }
  }
  EXPECT_EQ(binarize(again_out, plan), once);
}

TEST(GeneratePath, MidpointsOnlyWhereBothEdgesPlanned) {
  SceneAnnotation s;
  DoubleEdge l;
  l.left = {{0, 2, 1, 1}, {2, 2, 1, 1}};
  l.right = {{0, 0, 1, 1}, {2, 0, 1, 0}};
  s.lanes.push_back(l);
  const auto path = generate_path(s);
  ASSERT_EQ(path.size(), 1u);
  EXPECT_EQ(path[0], (Point2{0, 1}));
}

TEST(GeneratePath, StraightLaneGivesCollinearMidpoints) {
  const auto path = generate_path(planned_straight());
  ASSERT_EQ(path.size(), 10u);
  for (std::size_t j = 0; j < 10; ++j) {
    EXPECT_EQ(path[j].y, 0.0);
    EXPECT_EQ(path[j].x, 2.0 + 2.0 * static_cast<double>(j));
  }
  // Same via the simulator's annotator on a straight road.
  const auto spec = gen_scenario(1, ScenarioKind::straight);
  const auto a = annotate(initial_world(spec), spec);
  const auto p = generate_path(a.scene);
  ASSERT_GE(p.size(), 10u);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(p[j].y, 0.0, 1e-9);
  // Chunk boundaries repeat their shared cross-section.
  for (std::size_t j = 1; j < 10; ++j) EXPECT_GE(p[j].x, p[j - 1].x);
}

TEST(GeneratePath, MatchesDoubleLoopOracle) {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const auto s = scenes::random_scene(rng);
    EXPECT_EQ(generate_path(s), oracle::path(s)) << "scene " << t;
  }
}

TEST(GeneratePath, TranslationEquivariant) {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    SceneAnnotation s;
    // Lanes chained ahead of the ego so a forward shift keeps their order.
    for (int i = 0; i < 3; ++i) {
      auto l = scenes::straight_lane(5.0 + 20.0 * i, 0.0, 10);
      for (auto* e : {&l.left, &l.right}) {
        for (auto& p : *e) p.plan = rng.bernoulli(0.8) ? 1 : 0;
      }
      s.lanes.push_back(l);
    }
    const double dx = rng.uniform(0, 10), dy = rng.uniform(-1, 1);
    auto moved = s;
    for (auto& l : moved.lanes) {
      for (auto* e : {&l.left, &l.right}) {
        for (auto& p : *e) {
          p.x += dx;
          p.y += dy;
        }
      }
    }
    const auto a = generate_path(s), b = generate_path(moved);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_NEAR(b[k].x, a[k].x + dx, 1e-9);
      EXPECT_NEAR(b[k].y, a[k].y + dy, 1e-9);
    }
  }
}

TEST(StopDecision, Clauses) {
  auto s = planned_straight();
  EXPECT_FALSE(stop_decision(s, generate_path(s)));

  auto blocked = s;
  blocked.lanes[0].left[4].occ = 0;
  EXPECT_TRUE(stop_decision(blocked, generate_path(blocked)));

  // Direction filter: the same gap on a dir=0 lane is ignored.
  blocked.lanes[0].direction = 0;
  EXPECT_FALSE(stop_decision(blocked, generate_path(blocked)));

  auto one = planned_straight(1);
  EXPECT_EQ(generate_path(one).size(), 1u);
  EXPECT_TRUE(stop_decision(one, generate_path(one)));

  EXPECT_FALSE(stop_decision(blocked, generate_path(blocked), StopOptions{false}));
  EXPECT_FALSE(stop_decision(one, generate_path(one), StopOptions{false}));
}

TEST(StopDecision, RedLightOnIntersectionLane) {
  auto s = planned_straight();
  s.signal = Signal::red;
  EXPECT_FALSE(stop_decision(s, generate_path(s)));
  s.lanes[0].intersection = 1;
  EXPECT_TRUE(stop_decision(s, generate_path(s)));
  StopOptions no_red;
  no_red.red_light_rule = false;
  EXPECT_FALSE(stop_decision(s, generate_path(s), no_red));
  s.signal = Signal::green;
  EXPECT_FALSE(stop_decision(s, generate_path(s)));
}

TEST(StopDecision, EdgeConsensusNeedsBothEdgesFree) {
  auto s = planned_straight();
  s.lanes[0].left[3].occ = 0;
  StopOptions hef;
  hef.edge_consensus = true;
  EXPECT_FALSE(stop_decision(s, generate_path(s), hef));
  s.lanes[0].right[3].occ = 0;
  EXPECT_TRUE(stop_decision(s, generate_path(s), hef));
}

TEST(StopDecision, MonotoneInFreedOccupancy) {
  Rng rng(44);
  for (int t = 0; t < 200; ++t) {
    auto s = scenes::random_scene(rng);
    if (s.lanes.empty()) continue;
    const bool before = stop_decision(s, generate_path(s));
    auto& lane = s.lanes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(s.lanes.size()) - 1))];
    auto& edge = rng.bernoulli(0.5) ? lane.left : lane.right;
    edge[static_cast<std::size_t>(rng.uniform_int(0, 9))].occ = 0;
    if (before) {
      EXPECT_TRUE(stop_decision(s, generate_path(s)));
    }
  }
}

TEST(AssembleTrajectory, ValidationAndJson) {
  const auto path = generate_path(planned_straight());
  const auto t = assemble_trajectory(path, 8.0, false);
  EXPECT_EQ(t.path.size(), 10u);
  EXPECT_EQ(trajectory_from_json(trajectory_to_json(t)), t);
  EXPECT_THROW(assemble_trajectory(path, -1.0, false), std::invalid_argument);
  EXPECT_THROW(assemble_trajectory({{std::nan(""), 0}}, 1.0, false), std::invalid_argument);

  const auto stop = assemble_trajectory({}, 5.0, true);
  EXPECT_TRUE(stop.stop);
  EXPECT_EQ(stop.speed, 5.0);
  EXPECT_EQ(trajectory_from_json(trajectory_to_json(stop)), stop);
  EXPECT_EQ(track(stop, VehicleState{0, 0, 0, 9}), (ControlCommand{0, 0, 1}));
  EXPECT_EQ(track(assemble_trajectory(path, 8.0, true), VehicleState{0, 0, 0, 9}), (ControlCommand{0, 0, 1}));

  EXPECT_THROW(trajectory_from_json(json{{"path", json::array()}, {"speed", 1}}), SchemaError);
  EXPECT_THROW(trajectory_from_json(json{{"path", json::array()}, {"speed", -1}, {"stop", false}}), SchemaError);
}

TEST(Interpret, EndToEndOnPlannedLane) {
  const auto t = interpret(planned_straight());
  EXPECT_EQ(t.path.size(), 10u);
  EXPECT_EQ(t.speed, 8.0);
  EXPECT_FALSE(t.stop);
}
