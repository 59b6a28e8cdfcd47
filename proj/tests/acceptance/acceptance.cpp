// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance            run all
//   acceptance --only 7   run one
// Exit 0 iff every criterion that ran passed.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lanecraft/lanecraft.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace lanecraft;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0: none
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

Tensor random_tensor(Rng& rng, Shape s) {
  Tensor t(std::move(s));
  for (auto& v : t.storage()) v = rng.uniform(-1, 1);
  return t;
}

// 1 -------------------------------------------------------------------------
Outcome fusion_identity() {
  Rng rng(101);
  int bitwise = 0;
  for (int t = 0; t < 50; ++t) {
    const auto fde = random_tensor(rng, {16, 3, 4});
    const auto out = fuse(fde, random_tensor(rng, {16, 3}), random_tensor(rng, {16, 3}), random_tensor(rng, {16, 3, 4}),
                          FusionParams{0.0});
    bitwise += out.shape() == fde.shape() && std::memcmp(out.ptr(), fde.ptr(), fde.size() * sizeof(double)) == 0;
  }
  return {bitwise == 50, std::to_string(bitwise) + "/50 bundles bitwise equal at gamma=0"};
}

// 2 -------------------------------------------------------------------------
Outcome fusion_oracle() {
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto E = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto Nd = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto Np = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto fde = random_tensor(rng, {E, Nd, Np}), focc = random_tensor(rng, {E, Nd, Np});
    const auto fi = random_tensor(rng, {E, Nd}), fd = random_tensor(rng, {E, Nd});
    const double gamma = rng.uniform(-2, 2);
    worst = std::max(worst, max_abs_diff(fuse(fde, fi, fd, focc, FusionParams{gamma}), oracle::fusion(fde, fi, fd, focc, gamma)));
  }
  return {worst < 1e-9, "max abs diff " + fmt(worst) + " (tol 1e-9, 20 instances)"};
}

// 3 -------------------------------------------------------------------------
Outcome matching_optimality() {
  Rng rng(303);
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    const auto n_gt = static_cast<std::size_t>(1 + t % 6);
    const auto inst = random_match_instance(rng, n_gt, n_gt + static_cast<std::size_t>(rng.uniform_int(0, 2)));
    const LossWeights w;
    const auto a = align(inst.pred, inst.gt, w.alpha, w.beta);
    const auto costs = alignment_costs(inst.pred, inst.gt, w.alpha, w.beta);
    agree += a.pairs.size() == n_gt && a.total_cost == oracle::min_assignment(costs);
  }
  return {agree == 100, std::to_string(agree) + "/100 exact cost agreements (N_gt 1..6)"};
}

// 4 -------------------------------------------------------------------------
// Independent central differences on the total loss, on top of the per-loss
// harness.
double total_loss_fd_error(std::uint64_t seed) {
  auto g = make_grad_instance(seed);
  const LossWeights w;
  Predictions grad;
  total_loss(g.pred, g.gt, g.target, w, &g.assignment, &grad);
  std::vector<double*> xs, gs;
  g.pred.for_each_scalar([&](double& v) { xs.push_back(&v); });
  grad.for_each_scalar([&](double& v) { gs.push_back(&v); });
  double worst = 0.0;
  const double eps = 1e-5;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double keep = *xs[k];
    *xs[k] = keep + eps;
    const double up = total_loss(g.pred, g.gt, g.target, w, &g.assignment).total;
    *xs[k] = keep - eps;
    const double down = total_loss(g.pred, g.gt, g.target, w, &g.assignment).total;
    *xs[k] = keep;
    const double num = (up - down) / (2 * eps);
    worst = std::max(worst, std::abs(num - *gs[k]) / std::max({std::abs(num), std::abs(*gs[k]), 1e-8}));
  }
  return worst;
}

Outcome gradient_checks() {
  double worst = 0.0;
  std::string worst_name;
  for (const auto& name : grad_check_losses()) {
    for (std::uint64_t k = 0; k < 20; ++k) {
      const auto rep = grad_check(name, mix_seed(404, k));
      if (rep.max_rel_err > worst) {
        worst = rep.max_rel_err;
        worst_name = name;
      }
    }
  }
  double total_fd = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) total_fd = std::max(total_fd, total_loss_fd_error(mix_seed(405, k)));
  return {worst < 1e-4 && total_fd < 1e-4,
          "max rel err " + fmt(worst) + " (" + worst_name + "), total-loss fd " + fmt(total_fd) + " (tol 1e-4, " +
              std::to_string(grad_check_losses().size()) + " losses x 20)"};
}

// 5 -------------------------------------------------------------------------
Outcome loss_weights() {
  const LossWeights w;
  const std::vector<double> terms{w.gamma, w.delta, w.epsilon, w.varepsilon, w.zeta, w.eta, w.theta};
  const std::vector<double> ratio{5, 2, 1, 3, 4, 1, 0.1};
  bool ratios = w.alpha * 2 == w.beta * 5 && w.rho == 0.25;
  for (std::size_t k = 0; k < terms.size(); ++k) ratios = ratios && terms[k] * ratio[2] == ratio[k] * terms[2];

  Rng rng(505);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto g = make_grad_instance(mix_seed(505, static_cast<std::uint64_t>(t)));
    const auto r = total_loss(g.pred, g.gt, g.target, w);
    const double hand = 5 * r.edge_bev + 2 * r.intersection + 1 * r.direction + 3 * r.occupancy + 4 * r.plan +
                        1 * r.speed + 0.1 * r.signal;
    worst = std::max(worst, std::abs(r.total - hand));
  }
  return {ratios && worst <= 1e-12, std::string("ratios ") + (ratios ? "exact" : "WRONG") +
                                        ", |total - hand sum| max " + fmt(worst) + " (tol 1e-12)"};
}

// 6 -------------------------------------------------------------------------
Outcome interpreter_laws() {
  Rng rng(606);
  int path_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const auto s = scenes::random_scene(rng);
    path_ok += generate_path(s) == oracle::path(s);
  }

  bool table = true;
  {
    SceneAnnotation s;
    s.lanes.push_back(scenes::straight_lane(2, 0, 10));
    s.lanes[0].direction = 1;
    for (auto* e : {&s.lanes[0].left, &s.lanes[0].right}) {
      for (auto& p : *e) p.plan = 1;
    }
    table = table && !stop_decision(s, generate_path(s));
    auto gap = s;
    gap.lanes[0].right[6].occ = 0;
    table = table && stop_decision(gap, generate_path(gap));
    SceneAnnotation one;
    one.lanes.push_back(scenes::straight_lane(2, 0, 1));
    one.lanes[0].direction = 1;
    one.lanes[0].left[0].plan = one.lanes[0].right[0].plan = 1;
    table = table && generate_path(one).size() == 1 && stop_decision(one, generate_path(one));
  }

  int flips = 0, violations = 0;
  while (flips < 1000) {
    auto s = scenes::random_scene(rng);
    if (s.lanes.empty()) continue;
    const bool before = stop_decision(s, generate_path(s));
    auto& lane = s.lanes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(s.lanes.size()) - 1))];
    auto& edge = rng.bernoulli(0.5) ? lane.left : lane.right;
    auto& p = edge[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(edge.size()) - 1))];
    if (p.occ != 1) continue;
    p.occ = 0;
    ++flips;
    violations += before && !stop_decision(s, generate_path(s));
  }
  return {path_ok == 100 && table && violations == 0,
          "path " + std::to_string(path_ok) + "/100 exact, stop table " + (table ? "ok" : "WRONG") +
              ", monotonicity violations " + std::to_string(violations) + "/1000"};
}

// 7 -------------------------------------------------------------------------
Outcome oracle_suite() {
  int clean = 0, unblocked = 0, blocked_safe = 0, blocked_off_collide = 0, blocked = 0;
  std::string first_bad;
  for (auto kind : all_scenario_kinds()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto spec = gen_scenario(seed, kind);
      const auto r = run_episode(spec);
      auto collided = [](const EpisodeResult& e) {
        return std::any_of(e.infractions.begin(), e.infractions.end(),
                           [](const Infraction& i) { return i.type == "collision"; });
      };
      if (kind == ScenarioKind::blocked_lane) {
        ++blocked;
        blocked_safe += !collided(r);
        EpisodeConfig off;
        off.flags.dlf = false;
        blocked_off_collide += collided(run_episode(spec, off));
      } else {
        ++unblocked;
        const bool ok = r.rc == 1.0 && r.infractions.empty();
        clean += ok;
        if (!ok && first_bad.empty()) first_bad = std::string(to_string(kind)) + "#" + std::to_string(seed);
      }
    }
  }
  return {clean == unblocked && blocked_safe == blocked && blocked_off_collide == blocked,
          "unblocked clean " + std::to_string(clean) + "/" + std::to_string(unblocked) + ", blocked dlf-on safe " +
              std::to_string(blocked_safe) + "/" + std::to_string(blocked) + ", blocked dlf-off collided " +
              std::to_string(blocked_off_collide) + "/" + std::to_string(blocked) +
              (first_bad.empty() ? "" : ", first failure " + first_bad)};
}

// 8 -------------------------------------------------------------------------
Outcome ablation_order() {
  const AblationFlags configs[4] = {{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
  double mean[4] = {0, 0, 0, 0};
  for (int c = 0; c < 4; ++c) {
    EpisodeConfig cfg;
    cfg.flags = configs[c];
    cfg.occ_noise = 0.1;
    for (auto kind : all_scenario_kinds()) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) mean[c] += run_episode(gen_scenario(seed, kind), cfg).ds / 18.0;
    }
  }
  const double tol = 0.02;
  const bool ok = mean[0] <= mean[1] + tol && mean[1] <= mean[2] + tol && mean[2] <= mean[3] + tol;
  return {ok, "mean DS A " + fmt(mean[0]) + " B " + fmt(mean[1]) + " C " + fmt(mean[2]) + " D " + fmt(mean[3]) +
                  " (18 episodes each, noise 0.1, tol 0.02)"};
}

// 9 -------------------------------------------------------------------------
Outcome latency_budget() {
  const NetConfig cfg;  // E=256, K=6, N_d=30, N_p=20, 4 views of 7x7
  const auto b = bench_pipeline<float>(cfg, 200, 1);
  const double budget = 44.30;
  return {b.median_ms <= budget, "median " + fmt(b.median_ms) + " ms, p95 " + fmt(b.p95_ms) + " ms, " + fmt(b.fps) +
                                     " FPS (budget 44.30 ms / 22.57 FPS, 200 ticks)"};
}

// 10 ------------------------------------------------------------------------
Outcome controller_props() {
  Trajectory t;
  t.speed = 6;
  for (int k = 1; k <= 25; ++k) t.path.push_back({1.0 * k, 0.03 * k * k});
  Rng rng(1010);
  int mirror_ok = 0;
  for (int n = 0; n < 20; ++n) {
    const VehicleState s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3), rng.uniform(0, 10)};
    const double prev = rng.uniform(-0.5, 0.5);
    Trajectory m = t;
    for (auto& p : m.path) p.y = -p.y;
    const auto a = track(t, s, {}, prev);
    const auto b = track(m, {s.x, -s.y, -s.yaw, s.v}, {}, -prev);
    mirror_ok += b.steer == -a.steer && b.throttle == a.throttle && b.brake == a.brake;
  }

  int brake_ok = 0;
  for (int n = 0; n < 20; ++n) {
    Trajectory st = t;
    st.stop = true;
    st.speed = rng.uniform(0, 15);
    if (n % 2) st.path.clear();
    brake_ok += track(st, {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(0, 15)}) ==
                ControlCommand{0, 0, 1};
  }

  Trajectory line;
  line.speed = 5;
  for (double x = 1; x <= 50; x += 1) line.path.push_back({x, 0});
  VehicleState s{0, 0.1, 0.03, 5};  // slightly off the line to start
  double worst = 0.0, prev = 0.0;
  for (int k = 0; k < 120 && s.x < 49; ++k) {
    const auto c = track(line, s, {}, prev);
    prev = c.steer;
    s = bicycle_step(s, c, 0.1);
    worst = std::max(worst, std::abs(s.y));
  }
  const bool ok = mirror_ok == 20 && brake_ok == 20 && worst < 0.3 && s.x > 45;
  return {ok, "mirror " + std::to_string(mirror_ok) + "/20 exact, stop brake " + std::to_string(brake_ok) +
                  "/20, max cross-track " + fmt(worst) + " m over " + fmt(s.x) + " m (tol 0.3)"};
}

// 11 ------------------------------------------------------------------------
Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lanecraft_acceptance_c11";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  int same = 0, total = 0;
  for (auto kind : all_scenario_kinds()) {
    for (const double noise : {0.0, 0.1}) {
      EpisodeConfig cfg;
      cfg.occ_noise = noise;
      const auto spec = gen_scenario(2, kind);
      std::string texts[2];
      for (int rep = 0; rep < 2; ++rep) {
        const auto p = dir / (std::string(to_string(kind)) + "_" + std::to_string(rep) + ".jsonl");
        {
          std::ofstream f(p, std::ios::binary);
          const auto r = run_episode(spec, cfg, oracle_plan, &f);
          f << episode_to_json(r, false).dump() << '\n';
        }
        texts[rep] = slurp(p);
      }
      ++total;
      same += !texts[0].empty() && texts[0] == texts[1];
    }
  }
  fs::remove_all(dir);
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " trace files byte-identical on rerun"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-11)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "fusion identity at gamma=0", 1.0, fusion_identity},
      {2, "fusion matches loop oracle", 5.0, fusion_oracle},
      {3, "matching optimality", 10.0, matching_optimality},
      {4, "gradient checks", 30.0, gradient_checks},
      {5, "loss weight contract", 0.0, loss_weights},
      {6, "interpreter laws", 0.0, interpreter_laws},
      {7, "closed-loop oracle suite", 120.0, oracle_suite},
      {8, "ablation monotonicity", 0.0, ablation_order},
      {9, "latency budget", 0.0, latency_budget},
      {10, "controller properties", 0.0, controller_props},
      {11, "determinism", 0.0, determinism},
  };
  if (only != 0 && (only < 1 || only > 11)) {
    std::cerr << "--only expects 1..11\n";
    return 2;
  }

  bool all_pass = true;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string timing = fmt(secs) + " s";
    if (c.time_limit_s > 0) {
      timing += " (limit " + fmt(c.time_limit_s) + " s)";
      pass = pass && secs < c.time_limit_s;
    }
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << "; " << timing
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
