#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lanecraft/sim.hpp"

namespace fs = std::filesystem;
using lanecraft::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" LANECRAFT_CLI "\" " + args;
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<json> lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lanecraft_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(CliGen, WritesParseableDeterministicFiles) {
  TempDir d;
  const auto a = d.path / "a.json", b = d.path / "b.json";
  ASSERT_EQ(cli("gen --kind straight --seed 1 --out " + a.string()).code, 0);
  ASSERT_EQ(cli("gen --kind straight --seed 1 --out " + b.string()).code, 0);
  ASSERT_TRUE(fs::exists(a));
  const auto spec = lanecraft::scenario_from_json(json::parse(slurp(a)));
  EXPECT_EQ(spec.kind, lanecraft::ScenarioKind::straight);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(CliGen, UsageErrors) {
  const auto r = cli("gen --kind roundabout --seed 1 2>&1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("unknown scenario kind"), std::string::npos);
  EXPECT_EQ(cli("gen --kind straight --out /nonexistent/dir/x.json 2>/dev/null").code, 2);
  EXPECT_EQ(cli("frobnicate 2>/dev/null").code, 2);
  EXPECT_EQ(cli("2>/dev/null").code, 2);
}

TEST(CliRun, StraightOracleCompletes) {
  const auto r = cli("run --kind straight --seed 1 --mode oracle");
  ASSERT_EQ(r.code, 0);
  const auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0]["rc"].get<double>(), 1.0);
  EXPECT_TRUE(recs[0]["infractions"].empty());
  EXPECT_NO_THROW(lanecraft::episode_from_json(recs[0]));
}

TEST(CliRun, NoLateFusionCollidesOnBlockedLane) {
  const auto r = cli("run --kind blocked_lane --seed 1 --no-dlf");
  ASSERT_EQ(r.code, 0);
  const auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_FALSE(recs[0]["infractions"].empty());
}

TEST(CliRun, SeedRangesAndLists) {
  auto r = cli("run --kind curve --seeds 1..5");
  ASSERT_EQ(r.code, 0);
  auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(recs[k]["seed"].get<std::uint64_t>(), k + 1);
  r = cli("run --kind curve --seeds 2,7");
  ASSERT_EQ(r.code, 0);
  recs = lines(r.out);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1]["seed"].get<int>(), 7);
  EXPECT_EQ(cli("run --kind curve --seeds 5..1 2>/dev/null").code, 2);
  EXPECT_EQ(cli("run --kind curve --seeds x 2>/dev/null").code, 2);
}

TEST(CliRun, EnvSeedOverrides) {
  const auto r = cli("run --kind straight --seeds 1..5", "LANECRAFT_SEED=3");
  ASSERT_EQ(r.code, 0);
  const auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0]["seed"].get<int>(), 3);
  EXPECT_EQ(cli("run --kind straight 2>/dev/null", "LANECRAFT_SEED=abc").code, 2);
}

TEST(CliRun, OutputFilesAreByteIdenticalAcrossReruns) {
  TempDir d;
  const auto a = d.path / "a", b = d.path / "b";
  ASSERT_EQ(cli("run --kind intersection --seed 2 --noise 0.1 --out " + a.string() + " >/dev/null").code, 0);
  ASSERT_EQ(cli("run --kind intersection --seed 2 --noise 0.1 --out " + b.string() + " >/dev/null").code, 0);
  const auto trace = "intersection_2.trace.jsonl";
  ASSERT_TRUE(fs::exists(a / trace));
  EXPECT_FALSE(slurp(a / trace).empty());
  EXPECT_EQ(slurp(a / trace), slurp(b / trace));
  const auto ra = json::parse(slurp(a / "intersection_2.result.json"));
  EXPECT_EQ(ra["kind"], "intersection");
}

TEST(CliRun, ConfigFileAndStrictKeys) {
  TempDir d;
  const auto cfg = d.path / "run.json";
  std::ofstream(cfg) << R"({"kind": "blocked_lane", "seeds": [2], "flags": {"dlf": false}})";
  auto r = cli("run --config " + cfg.string());
  ASSERT_EQ(r.code, 0);
  auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0]["kind"], "blocked_lane");
  EXPECT_EQ(recs[0]["termination"], "collision");

  // Flags on the command line win over the file.
  r = cli("run --config " + cfg.string() + " --kind straight");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(lines(r.out)[0]["kind"], "straight");

  std::ofstream(cfg) << R"({"kind": "straight", "colour": "red"})";
  EXPECT_EQ(cli("run --config " + cfg.string() + " 2>/dev/null").code, 2);
  std::ofstream(cfg) << "{not json";
  EXPECT_EQ(cli("run --config " + cfg.string() + " 2>/dev/null").code, 2);
  EXPECT_EQ(cli("run --config " + (d.path / "missing.json").string() + " 2>/dev/null").code, 2);
}

TEST(CliRun, ScenarioFileAndNetworkMode) {
  TempDir d;
  const auto spec = d.path / "s.json";
  ASSERT_EQ(cli("gen --kind curve --seed 4 --out " + spec.string()).code, 0);
  auto r = cli("run --scenario " + spec.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(lines(r.out)[0]["kind"], "curve");
  EXPECT_EQ(lines(r.out)[0]["seed"].get<int>(), 4);

  r = cli("run --kind straight --seed 1 --mode network");
  ASSERT_EQ(r.code, 0);
  const auto rec = lines(r.out).at(0);
  EXPECT_GE(rec["rc"].get<double>(), 0.0);
  EXPECT_LE(rec["rc"].get<double>(), 1.0);
  EXPECT_EQ(cli("run --kind straight --mode lidar 2>/dev/null").code, 2);
}

TEST(CliCheck, SuitesPassWithReports) {
  for (const char* what : {"grad", "match", "fusion"}) {
    const auto r = cli(std::string("check ") + what);
    EXPECT_EQ(r.code, 0) << what;
    const auto j = json::parse(r.out);
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_EQ(j["check"], what);
  }
  const auto m = json::parse(cli("check match --seed 9").out);
  EXPECT_EQ(m["agreements"].get<int>(), 100);
  const auto g = json::parse(cli("check grad").out);
  for (const auto& l : g["losses"]) {
    EXPECT_LT(l["max_rel_err"].get<double>(), 1e-4);
    EXPECT_TRUE(l.contains("epsilon"));
    EXPECT_TRUE(l.contains("seed"));
  }
  EXPECT_LT(json::parse(cli("check fusion").out)["max_abs_diff"].get<double>(), 1e-9);
  EXPECT_EQ(cli("check speed 2>/dev/null").code, 2);
}

TEST(CliBench, SchemaAndStability) {
  TempDir d;
  const auto cfg = d.path / "net.json";
  std::ofstream(cfg) << R"({"embed": 64, "layers": 2, "lane_slots": 10, "points_per_lane": 20})";
  const auto a = cli("bench --ticks 40 --config " + cfg.string());
  const auto b = cli("bench --ticks 40 --config " + cfg.string());
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  const auto ja = json::parse(a.out), jb = json::parse(b.out);
  for (const char* k : {"median_ms", "p95_ms", "fps", "ticks", "budget_ms", "within_budget"}) EXPECT_TRUE(ja.contains(k)) << k;
  EXPECT_EQ(ja["ticks"].get<int>(), 40);
  EXPECT_EQ(ja["config"]["embed"].get<int>(), 64);
  EXPECT_GE(ja["p95_ms"].get<double>(), ja["median_ms"].get<double>());
  EXPECT_NEAR(ja["fps"].get<double>(), 1000.0 / ja["median_ms"].get<double>(), 1e-6 * ja["fps"].get<double>());
  const double ma = ja["median_ms"].get<double>(), mb = jb["median_ms"].get<double>();
  EXPECT_LT(std::abs(ma - mb) / std::min(ma, mb), 0.30);

  std::ofstream(cfg) << R"({"embed": 64, "depth": 2})";
  EXPECT_EQ(cli("bench --ticks 5 --config " + cfg.string() + " 2>/dev/null").code, 2);
  EXPECT_EQ(cli("bench --ticks 0 2>/dev/null").code, 2);
}
