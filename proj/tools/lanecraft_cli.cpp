// lanecraft: scenario generation, closed-loop runs, property checks, latency bench.
//
// Exit codes: 0 pass, 1 property failure, 2 usage error, 3 invariant breach.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lanecraft/lanecraft.hpp"

namespace fs = std::filesystem;
using namespace lanecraft;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantBreach : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("LANECRAFT_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("LANECRAFT_SEED is not an unsigned integer: ") + s);
  }
}

// "3", "1..5" or "1,4,9"
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  try {
    if (const auto dots = text.find(".."); dots != std::string::npos) {
      const auto lo = std::stoull(text.substr(0, dots)), hi = std::stoull(text.substr(dots + 2));
      if (hi < lo || hi - lo > 100000) throw UsageError("bad seed range '" + text + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
      return out;
    }
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("bad seed list '" + text + "'");
  }
  if (out.empty()) throw UsageError("empty seed list");
  return out;
}

ScenarioKind parse_kind(const std::string& s) {
  try {
    return scenario_kind_from_string(s);
  } catch (const std::exception&) {
    std::string names;
    for (auto k : all_scenario_kinds()) names += std::string(names.empty() ? "" : ", ") + to_string(k);
    throw UsageError("unknown scenario kind '" + s + "' (expected one of: " + names + ")");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return detail::parse_json(ss.str());
  } catch (const std::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text) || !f.flush()) throw UsageError("cannot write " + path.string());
}

NetConfig net_config_from_json(const json& j, NetConfig c) {
  static const std::vector<std::string> keys{"embed", "layers", "heads", "lane_slots", "points_per_lane",
                                             "grid_h", "grid_w", "views", "ffn_hidden", "bev_range"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw UsageError("net: unknown field '" + k + "'");
    if (!v.is_number()) throw UsageError("net." + k + ": expected a number");
  }
  auto get = [&](const char* k, std::size_t& dst) {
    if (!j.contains(k)) return;
    if (!j[k].is_number_unsigned()) throw UsageError(std::string("net.") + k + ": expected a positive integer");
    dst = j[k].get<std::size_t>();
  };
  get("embed", c.embed);
  get("layers", c.layers);
  get("heads", c.heads);
  get("lane_slots", c.lane_slots);
  get("points_per_lane", c.points_per_lane);
  get("grid_h", c.grid_h);
  get("grid_w", c.grid_w);
  get("views", c.views);
  get("ffn_hidden", c.ffn_hidden);
  if (j.contains("bev_range")) c.bev_range = j["bev_range"].get<double>();
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return c;
}

struct RunOptions {
  std::string kind = "straight";
  std::string scenario;
  std::string seeds = "1";
  std::string mode = "oracle";
  std::string out;
  std::string config;
  std::string weights;
  double noise = 0.0;
  bool no_tgp = false, no_hef = false, no_dlf = false;
};

struct RunConfig {
  std::optional<ScenarioSpec> scenario;
  ScenarioKind kind = ScenarioKind::straight;
  std::vector<std::uint64_t> seeds{1};
  std::string mode = "oracle";
  AblationFlags flags;
  double noise = 0.0;
  std::string out;
  std::string weights;
  NetConfig net = NetConfig::small();
};

// Config file first, then any flag given on the command line, then the env seed.
RunConfig resolve_run_config(const RunOptions& o, const CLI::App& cmd) {
  RunConfig rc;
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  if (!o.config.empty()) {
    const json j = read_json_file(o.config);
    static const std::vector<std::string> keys{"kind", "seeds", "mode", "flags", "noise", "out", "net", "weights"};
    for (const auto& [k, v] : j.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw UsageError("config: unknown field '" + k + "'");
    }
    try {
      if (j.contains("kind")) rc.kind = parse_kind(j["kind"].get<std::string>());
      if (j.contains("seeds")) {
        rc.seeds.clear();
        if (j["seeds"].is_array()) {
          for (const auto& s : j["seeds"]) rc.seeds.push_back(s.get<std::uint64_t>());
        } else {
          rc.seeds = parse_seeds(j["seeds"].get<std::string>());
        }
      }
      if (j.contains("mode")) rc.mode = j["mode"].get<std::string>();
      if (j.contains("flags")) {
        for (const auto& [k, v] : j["flags"].items()) {
          if (k == "tgp") rc.flags.tgp = v.get<bool>();
          else if (k == "hef") rc.flags.hef = v.get<bool>();
          else if (k == "dlf") rc.flags.dlf = v.get<bool>();
          else throw UsageError("config.flags: unknown field '" + k + "'");
        }
      }
      if (j.contains("noise")) rc.noise = j["noise"].get<double>();
      if (j.contains("out")) rc.out = j["out"].get<std::string>();
      if (j.contains("weights")) rc.weights = j["weights"].get<std::string>();
      if (j.contains("net")) rc.net = net_config_from_json(j["net"], rc.net);
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  if (given("--kind")) rc.kind = parse_kind(o.kind);
  if (given("--seed") || given("--seeds")) rc.seeds = parse_seeds(o.seeds);
  if (given("--mode")) rc.mode = o.mode;
  if (given("--noise")) rc.noise = o.noise;
  if (given("--out")) rc.out = o.out;
  if (given("--weights")) rc.weights = o.weights;
  if (o.no_tgp) rc.flags.tgp = false;
  if (o.no_hef) rc.flags.hef = false;
  if (o.no_dlf) rc.flags.dlf = false;
  if (!o.scenario.empty()) {
    try {
      rc.scenario = scenario_from_json(read_json_file(o.scenario));
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError(o.scenario + ": " + e.what());
    }
  }
  if (const auto s = env_seed()) rc.seeds = {*s};
  if (rc.mode != "oracle" && rc.mode != "network") throw UsageError("mode must be oracle or network, got '" + rc.mode + "'");
  if (!(rc.noise >= 0.0 && rc.noise <= 1.0)) throw UsageError("noise must lie in [0, 1]");
  return rc;
}

void check_episode_invariants(const EpisodeResult& r) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(r.rc)) throw InvariantBreach("rc outside [0, 1]: " + std::to_string(r.rc));
  if (!in_unit(r.is_score)) throw InvariantBreach("is_score outside [0, 1]: " + std::to_string(r.is_score));
  if (std::abs(r.ds - r.rc * r.is_score) > 1e-9) throw InvariantBreach("ds != rc * is_score");
  if (std::abs(r.is_score - infraction_score(r.infractions)) > 1e-12) throw InvariantBreach("is_score disagrees with infractions");
}

int cmd_run(const RunOptions& o, const CLI::App& cmd) {
  const RunConfig rc = resolve_run_config(o, cmd);
  if (!rc.out.empty()) {
    std::error_code ec;
    fs::create_directories(rc.out, ec);
    if (ec) throw UsageError("cannot create " + rc.out + ": " + ec.message());
  }

  EpisodeConfig ec;
  ec.flags = rc.flags;
  ec.occ_noise = rc.noise;
  std::optional<NetworkPipeline<float>> pipe;
  if (rc.mode == "network") {
    pipe.emplace(rc.net, rc.seeds.front());
    if (!rc.weights.empty()) {
      try {
        load_weights(pipe->net, rc.weights);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }
    ec.annotate.schema.lane_slots = static_cast<int>(rc.net.lane_slots);
    ec.annotate.schema.points_per_lane = static_cast<int>(rc.net.points_per_lane);
  }

  for (const auto seed : rc.seeds) {
    const ScenarioSpec spec = rc.scenario ? *rc.scenario : gen_scenario(seed, rc.kind);
    const Planner planner = pipe ? pipe->as_planner(seed) : Planner(oracle_plan);
    std::ostringstream trace;
    const EpisodeResult r = run_episode(spec, ec, planner, rc.out.empty() ? nullptr : &trace);
    check_episode_invariants(r);
    const json j = episode_to_json(r);
    if (!rc.out.empty()) {
      const std::string stem = std::string(to_string(spec.kind)) + "_" + std::to_string(spec.seed);
      write_file(fs::path(rc.out) / (stem + ".trace.jsonl"), trace.str());
      write_file(fs::path(rc.out) / (stem + ".result.json"), j.dump(2) + "\n");
    }
    std::cout << j.dump() << "\n";
  }
  return kExitPass;
}

int cmd_gen(const std::string& kind, std::uint64_t seed, const std::string& out) {
  const ScenarioKind k = parse_kind(kind);
  if (const auto s = env_seed()) seed = *s;
  const std::string text = scenario_to_json(gen_scenario(seed, k)).dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return kExitPass;
}

int cmd_check(const std::string& what, std::uint64_t seed) {
  if (const auto s = env_seed()) seed = *s;
  json r;
  if (what == "grad") r = check_grad(seed);
  else if (what == "match") r = check_match(seed);
  else if (what == "fusion") r = check_fusion(seed);
  else throw UsageError("check: expected grad, match or fusion, got '" + what + "'");
  std::cout << r.dump(2) << "\n";
  return r["pass"].get<bool>() ? kExitPass : kExitFail;
}

constexpr double kLatencyBudgetMs = 44.30;

int cmd_bench(std::size_t ticks, std::uint64_t seed, const std::string& config) {
  if (const auto s = env_seed()) seed = *s;
  NetConfig net;
  if (!config.empty()) {
    const json j = read_json_file(config);
    net = net_config_from_json(j.contains("net") ? j["net"] : j, net);
  }
  if (ticks == 0) throw UsageError("bench: --ticks must be positive");
  const BenchReport b = bench_pipeline<float>(net, ticks, seed);
  const json r{{"ticks", b.ticks},
               {"median_ms", b.median_ms},
               {"p95_ms", b.p95_ms},
               {"mean_ms", b.mean_ms},
               {"fps", b.fps},
               {"budget_ms", kLatencyBudgetMs},
               {"within_budget", b.median_ms <= kLatencyBudgetMs},
               {"config",
                {{"embed", net.embed},
                 {"layers", net.layers},
                 {"lane_slots", net.lane_slots},
                 {"points_per_lane", net.points_per_lane},
                 {"views", net.views},
                 {"grid", {net.grid_h, net.grid_w}}}}};
  std::cout << r.dump(2) << "\n";
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanecraft: double-edge lane planning toolkit"};
  app.require_subcommand(1);

  std::string gen_kind = "straight", gen_out;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("gen", "Write a generated scenario as JSON");
  gen->add_option("--kind", gen_kind, "straight|curve|intersection|multi_lane|blocked_lane|red_light");
  gen->add_option("--seed", gen_seed, "Scenario seed");
  gen->add_option("--out", gen_out, "Output file (default: stdout)");

  RunOptions ro;
  auto* run = app.add_subcommand("run", "Run closed-loop episodes and print one result JSON per line");
  run->add_option("--kind", ro.kind, "Scenario kind");
  run->add_option("--scenario", ro.scenario, "Scenario JSON file (overrides --kind)");
  run->add_option("--seed", ro.seeds, "Single seed");
  run->add_option("--seeds", ro.seeds, "Seed list: 1..5 or 1,3,7");
  run->add_option("--mode", ro.mode, "oracle|network");
  run->add_option("--noise", ro.noise, "Occupancy bit-flip probability");
  run->add_option("--out", ro.out, "Directory for traces and result files");
  run->add_option("--config", ro.config, "Run config JSON");
  run->add_option("--weights", ro.weights, "Perception weight file (network mode)");
  run->add_flag("--no-tgp", ro.no_tgp, "Disable target-guided planning");
  run->add_flag("--no-hef", ro.no_hef, "Disable hierarchical early fusion");
  run->add_flag("--no-dlf", ro.no_dlf, "Disable double-edge late fusion (stop logic)");

  std::string check_what;
  std::uint64_t check_seed = 1;
  auto* check = app.add_subcommand("check", "Run a property suite: grad, match or fusion");
  check->add_option("what", check_what, "grad|match|fusion")->required();
  check->add_option("--seed", check_seed, "Suite seed");

  std::size_t bench_ticks = 200;
  std::uint64_t bench_seed = 1;
  std::string bench_config;
  auto* bench = app.add_subcommand("bench", "Time full pipeline ticks at the default network size");
  bench->add_option("--ticks", bench_ticks, "Timed ticks");
  bench->add_option("--seed", bench_seed, "Weight and scene seed");
  bench->add_option("--config", bench_config, "JSON with net size overrides");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_kind, gen_seed, gen_out);
    if (*run) return cmd_run(ro, *run);
    if (*check) return cmd_check(check_what, check_seed);
    if (*bench) return cmd_bench(bench_ticks, bench_seed, bench_config);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvariantBreach& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitUsage;
}
