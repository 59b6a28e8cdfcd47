#pragma once

// Central finite-difference check of the analytic loss gradients on small
// random instances. Instances keep every L1 / smooth-L1 argument well away
// from its kink so the central difference never straddles one.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanecraft/losses.hpp"
#include "lanecraft/rng.hpp"

namespace lanecraft {

struct GradCheckReport {
  std::string loss;
  double max_rel_err = 0.0;
  double epsilon = 1e-5;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& grad_check_losses() {
  static const std::vector<std::string> names{"lane_cost", "point_cost", "edge_bev", "plan",
                                              "focal",     "smooth_l1",  "ce_signal", "total"};
  return names;
}

// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

// Perturbs each scalar of `x` in turn and compares against `grad`.
inline double max_gradient_error(std::vector<double>& x, const std::vector<double>& grad,
                                 const std::function<double()>& f, double eps) {
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + eps;
    const double up = f();
    x[k] = keep - eps;
    const double down = f();
    x[k] = keep;
    worst = std::max(worst, relative_error(grad[k], (up - down) / (2 * eps)));
  }
  return worst;
}

struct GradInstance {
  Predictions pred;
  SceneAnnotation gt;
  TargetPoint target;
  Assignment assignment;
};

// N_d = 3 slots, N_p = 4 points, 1..3 ground-truth lanes. Predicted points
// sit 0.05..1 m from their ground truth on every axis, probabilities in
// [0.05, 0.95], speed error in 0.1..0.8 or 1.2..3 m/s.
inline GradInstance make_grad_instance(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t Nd = 3, Np = 4;
  GradInstance g;
  g.pred = Predictions(Nd, Np);
  const auto n_gt = static_cast<std::size_t>(rng.uniform_int(1, 3));
  for (std::size_t i = 0; i < n_gt; ++i) {
    DoubleEdge lane;
    const double y0 = rng.uniform(-6, 6);
    for (std::size_t k = 0; k < Np / 2; ++k) {
      const double x = rng.uniform(-10, 10);
      lane.left.push_back({x, y0 + 1.75, rng.bernoulli(0.7) ? 1 : 0, rng.bernoulli(0.5) ? 1 : 0});
      lane.right.push_back({x, y0 - 1.75, rng.bernoulli(0.7) ? 1 : 0, rng.bernoulli(0.5) ? 1 : 0});
    }
    lane.intersection = rng.bernoulli(0.5) ? 1 : 0;
    lane.direction = rng.bernoulli(0.5) ? 1 : 0;
    g.gt.lanes.push_back(lane);
  }
  g.gt.speed = rng.uniform(0, 12);
  g.gt.signal = static_cast<Signal>(rng.uniform_int(0, kSignalClasses - 1));
  g.target = {rng.uniform(-20, 20), rng.uniform(-20, 20)};

  auto offset = [&] { return (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0); };
  // Slot j copies gt lane (j % n_gt) with offsets so every slot is kink-free
  // against every gt lane it could be matched with.
  for (std::size_t j = 0; j < Nd; ++j) {
    const auto& lane = g.gt.lanes[j % n_gt];
    for (std::size_t k = 0; k < Np; ++k) {
      const auto& p = detail::gt_point(lane, k);
      g.pred.slot_xy(j)[2 * k] = p.x + offset();
      g.pred.slot_xy(j)[2 * k + 1] = p.y + offset();
    }
  }
  for (auto* v : {&g.pred.p_int, &g.pred.p_dir, &g.pred.p_occ, &g.pred.p_plan}) {
    for (auto& p : *v) p = rng.uniform(0.05, 0.95);
  }
  const double ds = rng.bernoulli(0.5) ? rng.uniform(0.1, 0.8) : rng.uniform(1.2, 3.0);
  g.pred.speed = g.gt.speed + (rng.bernoulli(0.5) ? ds : -ds);
  for (auto& l : g.pred.signal_logits) l = rng.uniform(-2, 2);
  g.assignment = align(g.pred, g.gt);
  return g;
}

inline double min_kink_distance(const GradInstance& g) {
  double m = std::abs(std::abs(g.pred.speed - g.gt.speed) - 1.0);
  for (std::size_t j = 0; j < g.pred.lanes; ++j) {
    for (const auto& lane : g.gt.lanes) {
      for (std::size_t k = 0; k < g.pred.points; ++k) {
        const auto& p = detail::gt_point(lane, k);
        m = std::min({m, std::abs(g.pred.slot_xy(j)[2 * k] - p.x), std::abs(g.pred.slot_xy(j)[2 * k + 1] - p.y)});
      }
    }
  }
  return m;
}

inline GradCheckReport grad_check(const std::string& loss, std::uint64_t seed, double eps = 1e-5) {
  GradInstance g = make_grad_instance(seed);
  const LossWeights w;
  GradCheckReport rep{loss, 0.0, eps, seed};

  if (loss == "lane_cost") {
    for (std::size_t j = 0; j < g.pred.lanes; ++j) {
      const int gt = g.gt.lanes[j % g.gt.lanes.size()].intersection;
      std::vector<double> x{g.pred.p_int[j]}, grad(1);
      lane_cost(x[0], gt, &grad[0]);
      rep.max_rel_err = std::max(rep.max_rel_err, max_gradient_error(x, grad, [&] { return lane_cost(x[0], gt); }, eps));
    }
  } else if (loss == "point_cost") {
    for (std::size_t j = 0; j < g.pred.lanes; ++j) {
      const auto& lane = g.gt.lanes[j % g.gt.lanes.size()];
      std::vector<double> x(g.pred.slot_xy(j), g.pred.slot_xy(j) + 2 * g.pred.points), grad(x.size());
      point_cost(x.data(), lane, grad.data());
      rep.max_rel_err = std::max(
          rep.max_rel_err, max_gradient_error(x, grad, [&] { return point_cost(x.data(), lane); }, eps));
    }
  } else if (loss == "edge_bev") {
    std::vector<double> grad(g.pred.xy.size(), 0.0);
    edge_bev_loss(g.pred, g.gt, g.assignment, grad.data());
    rep.max_rel_err =
        max_gradient_error(g.pred.xy, grad, [&] { return edge_bev_loss(g.pred, g.gt, g.assignment); }, eps);
  } else if (loss == "plan") {
    std::vector<double> grad(g.pred.p_plan.size(), 0.0);
    plan_loss(g.pred, g.gt, g.assignment, g.target, w.rho, grad.data());
    rep.max_rel_err = max_gradient_error(
        g.pred.p_plan, grad, [&] { return plan_loss(g.pred, g.gt, g.assignment, g.target, w.rho); }, eps);
  } else if (loss == "focal") {
    std::vector<int> gts;
    for (std::size_t k = 0; k < g.pred.p_occ.size(); ++k) gts.push_back(static_cast<int>(k % 3 == 0));
    std::vector<double> grad;
    focal_loss(g.pred.p_occ, gts, w.focal_alpha, w.focal_gamma, &grad);
    rep.max_rel_err = max_gradient_error(
        g.pred.p_occ, grad, [&] { return focal_loss(g.pred.p_occ, gts, w.focal_alpha, w.focal_gamma); }, eps);
  } else if (loss == "smooth_l1") {
    std::vector<double> x{g.pred.speed}, grad(1);
    smooth_l1(x[0], g.gt.speed, &grad[0]);
    rep.max_rel_err = max_gradient_error(x, grad, [&] { return smooth_l1(x[0], g.gt.speed); }, eps);
  } else if (loss == "ce_signal") {
    const int c = signal_index(g.gt.signal);
    std::vector<double> grad;
    ce_signal(g.pred.signal_logits, c, &grad);
    rep.max_rel_err =
        max_gradient_error(g.pred.signal_logits, grad, [&] { return ce_signal(g.pred.signal_logits, c); }, eps);
  } else if (loss == "total") {
    Predictions grad;
    total_loss(g.pred, g.gt, g.target, w, &g.assignment, &grad);
    std::vector<double> x, gv;
    g.pred.for_each_scalar([&](double& v) { x.push_back(v); });
    grad.for_each_scalar([&](double& v) { gv.push_back(v); });
    auto f = [&] {
      std::size_t n = 0;
      g.pred.for_each_scalar([&](double& v) { v = x[n++]; });
      return total_loss(g.pred, g.gt, g.target, w, &g.assignment).total;
    };
    rep.max_rel_err = max_gradient_error(x, gv, f, eps);
  } else {
    throw std::invalid_argument("unknown loss '" + loss + "'");
  }
  return rep;
}

}  // namespace lanecraft
