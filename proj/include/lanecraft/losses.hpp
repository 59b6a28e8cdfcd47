#pragma once

// Lane alignment cost, matching, and the training losses with hand-derived
// gradients w.r.t. the prediction tensors (probabilities, points, speed,
// signal logits).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lanecraft/assignment.hpp"
#include "lanecraft/double_edge.hpp"
#include "lanecraft/perception.hpp"

namespace lanecraft {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kMinTargetDistance = 0.5;

struct LossWeights {
  // matching
  double alpha = 5.0;
  double beta = 2.0;
  // loss terms: edge_bev, int, dir, occ, plan, speed, signal
  double gamma = 5.0;
  double delta = 2.0;
  double epsilon = 1.0;
  double varepsilon = 3.0;
  double zeta = 4.0;
  double eta = 1.0;
  double theta = 0.1;
  // plan-loss focusing
  double rho = 0.25;
  // focal loss
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  LossWeights scaled(double k) const {
    LossWeights w = *this;
    for (double* v : {&w.gamma, &w.delta, &w.epsilon, &w.varepsilon, &w.zeta, &w.eta, &w.theta}) *v *= k;
    return w;
  }
};

// Flat prediction set. Point k of slot i: k < N_p/2 left edge, else right edge.
struct Predictions {
  std::size_t lanes = 0;   // N_d
  std::size_t points = 0;  // N_p
  std::vector<double> xy;       // [N_d * N_p * 2]
  std::vector<double> p_int;    // [N_d]
  std::vector<double> p_dir;    // [N_d]
  std::vector<double> p_occ;    // [N_d * N_p]
  std::vector<double> p_plan;   // [N_d * N_p]
  double speed = 0.0;
  std::vector<double> signal_logits = std::vector<double>(kSignalClasses, 0.0);

  Predictions() = default;
  Predictions(std::size_t n_lanes, std::size_t n_points)
      : lanes(n_lanes), points(n_points), xy(n_lanes * n_points * 2), p_int(n_lanes), p_dir(n_lanes),
        p_occ(n_lanes * n_points), p_plan(n_lanes * n_points) {}

  // Same layout, all zero (used as a gradient accumulator).
  Predictions zeros_like() const { return Predictions(lanes, points); }

  const double* slot_xy(std::size_t i) const { return xy.data() + i * points * 2; }
  double* slot_xy(std::size_t i) { return xy.data() + i * points * 2; }

  // Visits every scalar in a fixed order; used by the finite-difference harness.
  template <class F>
  void for_each_scalar(F&& f) {
    for (auto& v : xy) f(v);
    for (auto& v : p_int) f(v);
    for (auto& v : p_dir) f(v);
    for (auto& v : p_occ) f(v);
    for (auto& v : p_plan) f(v);
    f(speed);
    for (auto& v : signal_logits) f(v);
  }
};

template <class Real>
Predictions to_predictions(const PerceptionOutput<Real>& out, const BasicTensor<Real>& p_plan) {
  const std::size_t Nd = out.points.dim(0), Np = out.points.dim(1);
  Predictions p(Nd, Np);
  std::copy(out.points.storage().begin(), out.points.storage().end(), p.xy.begin());
  std::copy(out.p_int.storage().begin(), out.p_int.storage().end(), p.p_int.begin());
  std::copy(out.p_dir.storage().begin(), out.p_dir.storage().end(), p.p_dir.begin());
  std::copy(out.p_occ.storage().begin(), out.p_occ.storage().end(), p.p_occ.begin());
  if (p_plan.size() != Nd * Np) throw ShapeError("plan probabilities do not match the point layout");
  std::copy(p_plan.storage().begin(), p_plan.storage().end(), p.p_plan.begin());
  p.speed = out.speed;
  std::copy(out.signal_logits.storage().begin(), out.signal_logits.storage().end(), p.signal_logits.begin());
  return p;
}

namespace detail {

inline double clamp_prob(double p, bool* clamped = nullptr) {
  const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  if (clamped) *clamped = c != p;
  return c;
}

inline double sign(double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); }

inline const EdgePoint& gt_point(const DoubleEdge& lane, std::size_t k) {
  const std::size_t half = lane.left.size();
  return k < half ? lane.left[k] : lane.right[k - half];
}

inline void check_lane_layout(const DoubleEdge& gt, std::size_t points) {
  if (gt.left.size() != gt.right.size() || 2 * gt.left.size() != points) {
    throw ShapeError("ground-truth lane has " + std::to_string(gt.left.size()) + "+" +
                     std::to_string(gt.right.size()) + " points, predictions carry " + std::to_string(points));
  }
}

}  // namespace detail

// Bernoulli negative log-likelihood of the ground-truth intersection class.
inline double lane_cost(double p_int, int gt_int, double* grad = nullptr) {
  bool clamped = false;
  const double p = detail::clamp_prob(p_int, &clamped);
  const double v = gt_int ? -std::log(p) : -std::log(1.0 - p);
  if (grad) *grad = clamped ? 0.0 : (gt_int ? -1.0 / p : 1.0 / (1.0 - p));
  return v;
}

// L1 distance over both edges; pred points [N_p x 2].
inline double point_cost(const double* pred, const DoubleEdge& gt, double* grad = nullptr) {
  const std::size_t n = 2 * gt.left.size();
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& g = detail::gt_point(gt, k);
    const double dx = pred[2 * k] - g.x, dy = pred[2 * k + 1] - g.y;
    s += std::abs(dx) + std::abs(dy);
    if (grad) {
      grad[2 * k] = detail::sign(dx);
      grad[2 * k + 1] = detail::sign(dy);
    }
  }
  return s;
}

inline std::vector<std::vector<double>> alignment_costs(const Predictions& pred, const SceneAnnotation& gt,
                                                        double alpha, double beta) {
  std::vector<std::vector<double>> cost(gt.lanes.size(), std::vector<double>(pred.lanes));
  for (std::size_t i = 0; i < gt.lanes.size(); ++i) {
    detail::check_lane_layout(gt.lanes[i], pred.points);
    for (std::size_t j = 0; j < pred.lanes; ++j) {
      cost[i][j] = alpha * lane_cost(pred.p_int[j], gt.lanes[i].intersection) +
                   beta * point_cost(pred.slot_xy(j), gt.lanes[i]);
    }
  }
  return cost;
}

inline Assignment align(const Predictions& pred, const SceneAnnotation& gt, double alpha = 5.0, double beta = 2.0) {
  if (gt.lanes.size() > pred.lanes) {
    throw std::invalid_argument("align: " + std::to_string(gt.lanes.size()) + " ground-truth lanes exceed " +
                                std::to_string(pred.lanes) + " prediction slots");
  }
  return solve_assignment(alignment_costs(pred, gt, alpha, beta));
}

// Mean over ground-truth lanes of the matched point cost; grad is [N_d*N_p*2].
inline double edge_bev_loss(const Predictions& pred, const SceneAnnotation& gt, const Assignment& a,
                            double* grad = nullptr) {
  if (a.pairs.empty()) return 0.0;
  const double n = static_cast<double>(a.pairs.size());
  std::vector<double> g(pred.points * 2);
  double s = 0.0;
  for (auto [i, j] : a.pairs) {
    s += point_cost(pred.slot_xy(j), gt.lanes[i], grad ? g.data() : nullptr);
    if (grad) {
      for (std::size_t k = 0; k < g.size(); ++k) grad[j * pred.points * 2 + k] += g[k] / n;
    }
  }
  return s / n;
}

// Per-sample focal term -alpha (1 - p_t)^gamma log p_t.
inline double focal_term(double prob, int gt, double alpha, double gamma, double* grad = nullptr) {
  bool clamped = false;
  const double p = detail::clamp_prob(prob, &clamped);
  const double pt = gt ? p : 1.0 - p;
  const double q = 1.0 - pt;
  const double v = -alpha * std::pow(q, gamma) * std::log(pt);
  if (grad) {
    if (clamped) {
      *grad = 0.0;
    } else {
      const double dpt = -alpha * (-gamma * std::pow(q, gamma - 1.0) * std::log(pt) + std::pow(q, gamma) / pt);
      *grad = gt ? dpt : -dpt;
    }
  }
  return v;
}

// Mean focal loss over a set of probabilities.
inline double focal_loss(const std::vector<double>& probs, const std::vector<int>& gts, double alpha = 0.25,
                         double gamma = 2.0, std::vector<double>* grad = nullptr) {
  if (probs.size() != gts.size()) throw std::invalid_argument("focal_loss: size mismatch");
  if (grad) grad->assign(probs.size(), 0.0);
  if (probs.empty()) return 0.0;
  const double n = static_cast<double>(probs.size());
  double s = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    double g = 0.0;
    s += focal_term(probs[k], gts[k], alpha, gamma, grad ? &g : nullptr);
    if (grad) (*grad)[k] = g / n;
  }
  return s / n;
}

inline double smooth_l1(double pred, double gt, double* grad = nullptr) {
  const double d = pred - gt;
  if (std::abs(d) < 1.0) {
    if (grad) *grad = d;
    return 0.5 * d * d;
  }
  if (grad) *grad = detail::sign(d);
  return std::abs(d) - 0.5;
}

inline double ce_signal(const std::vector<double>& logits, int gt_class, std::vector<double>* grad = nullptr) {
  if (gt_class < 0 || static_cast<std::size_t>(gt_class) >= logits.size()) {
    throw std::invalid_argument("ce_signal: class index out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  if (grad) {
    grad->resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
      (*grad)[c] = std::exp(logits[c] - lse) - (static_cast<int>(c) == gt_class ? 1.0 : 0.0);
    }
  }
  return lse - logits[gt_class];
}

// Focal-modulated plan cross-entropy weighted by inverse distance to the target:
//   sum over matched points of (rho (1 - e^-CE))^2 * CE / D, D >= 0.5 m.
inline double plan_term(double prob, int gt, double distance, double rho, double* grad = nullptr) {
  bool clamped = false;
  const double p = detail::clamp_prob(prob, &clamped);
  const double ce = gt ? -std::log(p) : -std::log(1.0 - p);
  const double d = std::max(distance, kMinTargetDistance);
  const double e = std::exp(-ce);
  const double m = rho * (1.0 - e);
  if (grad) {
    if (clamped) {
      *grad = 0.0;
    } else {
      const double dce = (2.0 * m * rho * e * ce + m * m) / d;
      *grad = dce * (gt ? -1.0 / p : 1.0 / (1.0 - p));
    }
  }
  return m * m * ce / d;
}

inline double plan_loss(const Predictions& pred, const SceneAnnotation& gt, const Assignment& a,
                        const TargetPoint& target, double rho = 0.25, double* grad = nullptr) {
  double s = 0.0;
  for (auto [i, j] : a.pairs) {
    const auto& lane = gt.lanes[i];
    detail::check_lane_layout(lane, pred.points);
    for (std::size_t k = 0; k < pred.points; ++k) {
      const auto& g = detail::gt_point(lane, k);
      const double dist = std::hypot(g.x - target.x, g.y - target.y);
      double gk = 0.0;
      s += plan_term(pred.p_plan[j * pred.points + k], g.plan, dist, rho, grad ? &gk : nullptr);
      if (grad) grad[j * pred.points + k] += gk;
    }
  }
  return s;
}

struct LossReport {
  double edge_bev = 0.0;
  double intersection = 0.0;
  double direction = 0.0;
  double occupancy = 0.0;
  double plan = 0.0;
  double speed = 0.0;
  double signal = 0.0;
  double total = 0.0;
};

inline double weighted_total(const LossReport& r, const LossWeights& w) {
  return w.gamma * r.edge_bev + w.delta * r.intersection + w.epsilon * r.direction + w.varepsilon * r.occupancy +
         w.zeta * r.plan + w.eta * r.speed + w.theta * r.signal;
}

// Terms:
//   int:  focal over every slot; matched slots target the gt intersection bit,
//         unmatched slots the background class 0. Mean over N_d.
//   dir:  focal over matched slots, mean over N_gt.
//   occ:  focal over matched points, mean over N_gt * N_p.
// When `grad` is given it receives d total / d prediction (same layout).
inline LossReport total_loss(const Predictions& pred, const SceneAnnotation& gt, const TargetPoint& target,
                             const LossWeights& w, const Assignment* assignment = nullptr,
                             Predictions* grad = nullptr) {
  const Assignment a = assignment ? *assignment : align(pred, gt, w.alpha, w.beta);
  for (auto [i, j] : a.pairs) {
    if (i >= gt.lanes.size() || j >= pred.lanes) throw std::invalid_argument("total_loss: assignment out of range");
    detail::check_lane_layout(gt.lanes[i], pred.points);
  }
  if (grad) *grad = pred.zeros_like();

  LossReport r;
  r.edge_bev = edge_bev_loss(pred, gt, a, grad ? grad->xy.data() : nullptr);
  if (grad) {
    for (auto& v : grad->xy) v *= w.gamma;
  }

  std::vector<int> slot_gt(pred.lanes, 0);
  for (auto [i, j] : a.pairs) slot_gt[j] = gt.lanes[i].intersection;
  std::vector<double> g;
  r.intersection = focal_loss(pred.p_int, slot_gt, w.focal_alpha, w.focal_gamma, grad ? &g : nullptr);
  if (grad) {
    for (std::size_t j = 0; j < pred.lanes; ++j) grad->p_int[j] = w.delta * g[j];
  }

  std::vector<double> dir_p, occ_p;
  std::vector<int> dir_gt, occ_gt;
  for (auto [i, j] : a.pairs) {
    dir_p.push_back(pred.p_dir[j]);
    dir_gt.push_back(gt.lanes[i].direction);
    for (std::size_t k = 0; k < pred.points; ++k) {
      occ_p.push_back(pred.p_occ[j * pred.points + k]);
      occ_gt.push_back(detail::gt_point(gt.lanes[i], k).occ);
    }
  }
  r.direction = focal_loss(dir_p, dir_gt, w.focal_alpha, w.focal_gamma, grad ? &g : nullptr);
  if (grad) {
    for (std::size_t n = 0; n < a.pairs.size(); ++n) grad->p_dir[a.pairs[n].second] = w.epsilon * g[n];
  }
  r.occupancy = focal_loss(occ_p, occ_gt, w.focal_alpha, w.focal_gamma, grad ? &g : nullptr);
  if (grad) {
    for (std::size_t n = 0; n < a.pairs.size(); ++n) {
      for (std::size_t k = 0; k < pred.points; ++k) {
        grad->p_occ[a.pairs[n].second * pred.points + k] = w.varepsilon * g[n * pred.points + k];
      }
    }
  }

  r.plan = plan_loss(pred, gt, a, target, w.rho, grad ? grad->p_plan.data() : nullptr);
  if (grad) {
    for (auto& v : grad->p_plan) v *= w.zeta;
  }

  double gs = 0.0;
  r.speed = smooth_l1(pred.speed, gt.speed, grad ? &gs : nullptr);
  if (grad) grad->speed = w.eta * gs;

  r.signal = ce_signal(pred.signal_logits, signal_index(gt.signal), grad ? &g : nullptr);
  if (grad) {
    for (std::size_t c = 0; c < g.size(); ++c) grad->signal_logits[c] = w.theta * g[c];
  }

  r.total = weighted_total(r, w);
  return r;
}

}  // namespace lanecraft
