#pragma once

#include "lanecraft/assignment.hpp"
#include "lanecraft/checks.hpp"
#include "lanecraft/controller.hpp"
#include "lanecraft/double_edge.hpp"
#include "lanecraft/fusion.hpp"
#include "lanecraft/geometry.hpp"
#include "lanecraft/grad_check.hpp"
#include "lanecraft/interpreter.hpp"
#include "lanecraft/losses.hpp"
#include "lanecraft/nn.hpp"
#include "lanecraft/perception.hpp"
#include "lanecraft/pipeline.hpp"
#include "lanecraft/rng.hpp"
#include "lanecraft/scene_io.hpp"
#include "lanecraft/sim.hpp"
#include "lanecraft/target_planner.hpp"
#include "lanecraft/tensor.hpp"
#include "lanecraft/weights_io.hpp"
