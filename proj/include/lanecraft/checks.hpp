#pragma once

// Property suites behind `lanecraft check`: fusion against a loop-only
// reference, matching against exhaustive permutation search, and the loss
// gradient checks. Each returns a JSON report with "pass" and, on failure,
// the first failing case.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanecraft/assignment.hpp"
#include "lanecraft/fusion.hpp"
#include "lanecraft/grad_check.hpp"
#include "lanecraft/losses.hpp"
#include "lanecraft/rng.hpp"
#include "lanecraft/scene_io.hpp"

namespace lanecraft {

inline constexpr double kFusionTolerance = 1e-9;
inline constexpr double kGradTolerance = 1e-4;

struct FusionInstance {
  BasicTensor<double> f_de, f_int, f_dir, f_occ;
  double gamma = 0.0;
};

inline FusionInstance random_fusion_instance(Rng& rng, std::size_t E, std::size_t Nd, std::size_t Np) {
  FusionInstance f{BasicTensor<double>({E, Nd, Np}), BasicTensor<double>({E, Nd}), BasicTensor<double>({E, Nd}),
                   BasicTensor<double>({E, Nd, Np}), rng.uniform(-2, 2)};
  for (auto* t : {&f.f_de, &f.f_int, &f.f_dir, &f.f_occ}) {
    for (auto& v : t->storage()) v = rng.uniform(-1, 1);
  }
  return f;
}

// Loops straight off the definitions: no reshape, no matmul, no softmax helper.
inline BasicTensor<double> reference_fusion(const FusionInstance& in) {
  const std::size_t E = in.f_de.dim(0), Nd = in.f_de.dim(1), Np = in.f_de.dim(2), n = Nd * Np;
  std::vector<double> att(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    double mx = -1e300;
    for (std::size_t b = 0; b < n; ++b) {
      double dot = 0.0;
      for (std::size_t e = 0; e < E; ++e) dot += in.f_int(e, a / Np) * in.f_dir(e, b / Np);
      att[a * n + b] = dot;
      mx = std::max(mx, dot);
    }
    double z = 0.0;
    for (std::size_t b = 0; b < n; ++b) z += (att[a * n + b] = std::exp(att[a * n + b] - mx));
    for (std::size_t b = 0; b < n; ++b) att[a * n + b] /= z;
  }
  BasicTensor<double> out({E, Nd, Np});
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t a = 0; a < n; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) s += att[a * n + b] * in.f_occ(e, b / Np, b % Np);
      out(e, a / Np, a % Np) = in.gamma * s + in.f_de(e, a / Np, a % Np);
    }
  }
  return out;
}

inline json check_fusion(std::uint64_t seed, int trials = 20) {
  Rng rng(seed);
  double worst = 0.0;
  json failing;
  for (int t = 0; t < trials; ++t) {
    const auto E = static_cast<std::size_t>(4 * rng.uniform_int(1, 2));
    const auto Nd = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto Np = static_cast<std::size_t>(2 * rng.uniform_int(1, 2));
    const auto in = random_fusion_instance(rng, E, Nd, Np);
    const auto got = fuse(in.f_de, in.f_int, in.f_dir, in.f_occ, FusionParams{in.gamma});
    const auto ref = reference_fusion(in);
    double diff = 0.0;
    for (std::size_t k = 0; k < got.size(); ++k) diff = std::max(diff, std::abs(got[k] - ref[k]));
    worst = std::max(worst, diff);
    if (diff >= kFusionTolerance && failing.is_null()) {
      failing = {{"trial", t}, {"E", E}, {"N_d", Nd}, {"N_p", Np}, {"gamma", in.gamma}, {"max_abs_diff", diff}};
    }
  }
  json r{{"check", "fusion"},  {"seed", seed}, {"trials", trials}, {"max_abs_diff", worst},
         {"tolerance", kFusionTolerance}, {"pass", failing.is_null()}};
  if (!failing.is_null()) r["failing_case"] = failing;
  return r;
}

// Minimum over all injective row -> column maps, each summed in row order.
inline double brute_force_assignment_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return 0.0;
  const std::size_t m = cost[0].size();
  std::vector<std::size_t> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Permutations of all columns; the first n entries give the map. Duplicated
  // prefixes are harmless for the minimum.
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i][cols[i]];
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

struct MatchInstance {
  Predictions pred;
  SceneAnnotation gt;
};

inline MatchInstance random_match_instance(Rng& rng, std::size_t n_gt, std::size_t slots, std::size_t points = 4) {
  MatchInstance m{Predictions(slots, points), {}};
  for (std::size_t i = 0; i < n_gt; ++i) {
    DoubleEdge lane;
    for (std::size_t k = 0; k < points / 2; ++k) {
      lane.left.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20), 1, 0});
      lane.right.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20), 1, 0});
    }
    lane.intersection = rng.bernoulli(0.5) ? 1 : 0;
    lane.direction = 1;
    m.gt.lanes.push_back(lane);
  }
  for (auto& v : m.pred.xy) v = rng.uniform(-20, 20);
  for (auto& v : m.pred.p_int) v = rng.uniform(0.01, 0.99);
  return m;
}

inline json check_match(std::uint64_t seed, int trials = 100) {
  Rng rng(seed);
  int agree = 0;
  json failing;
  for (int t = 0; t < trials; ++t) {
    const auto n_gt = static_cast<std::size_t>(1 + t % 6);
    const auto slots = n_gt + static_cast<std::size_t>(rng.uniform_int(0, 2));
    const auto inst = random_match_instance(rng, n_gt, slots);
    const LossWeights w;
    const auto a = align(inst.pred, inst.gt, w.alpha, w.beta);
    const double oracle = brute_force_assignment_cost(alignment_costs(inst.pred, inst.gt, w.alpha, w.beta));
    if (a.total_cost == oracle && a.pairs.size() == n_gt) {
      ++agree;
    } else if (failing.is_null()) {
      failing = {{"trial", t}, {"n_gt", n_gt}, {"slots", slots}, {"align_cost", a.total_cost}, {"oracle_cost", oracle}};
    }
  }
  json r{{"check", "match"}, {"seed", seed}, {"trials", trials}, {"agreements", agree}, {"pass", agree == trials}};
  if (!failing.is_null()) r["failing_case"] = failing;
  return r;
}

inline json check_grad(std::uint64_t seed, int instances = 20, double eps = 1e-5) {
  json losses = json::array();
  json failing;
  bool pass = true;
  for (const auto& name : grad_check_losses()) {
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
      const auto s = mix_seed(seed, static_cast<std::uint64_t>(k));
      const auto rep = grad_check(name, s, eps);
      worst = std::max(worst, rep.max_rel_err);
      if (rep.max_rel_err >= kGradTolerance && failing.is_null()) {
        failing = {{"loss", name}, {"max_rel_err", rep.max_rel_err}, {"epsilon", eps}, {"seed", s}};
      }
    }
    pass = pass && worst < kGradTolerance;
    losses.push_back({{"loss", name}, {"max_rel_err", worst}, {"epsilon", eps}, {"seed", seed}});
  }
  json r{{"check", "grad"}, {"instances", instances}, {"tolerance", kGradTolerance}, {"losses", losses}, {"pass", pass}};
  if (!failing.is_null()) r["failing_case"] = failing;
  return r;
}

}  // namespace lanecraft
