#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "interplan/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Result cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(INTERPLAN_CLI) + "' " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("interplan_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kData = INTERPLAN_DATA_DIR;

std::string config_arg(const char* name) { return "--config '" + (kData / "configs" / name).string() + "'"; }

}  // namespace

TEST_CASE("run writes one trace per seed") {
  const auto out = scratch("run");
  const auto r = cli("run " + config_arg("empty_road.json") + " --episodes 10 --seed 0 --mode interactive --out '" +
                     out.string() + "'");
  CHECK(r.status == 0);
  std::set<std::uint64_t> seeds;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    ++files;
    const auto traces = interplan::load_traces(e.path());
    REQUIRE(traces.size() == 1);
    seeds.insert(traces[0].seed);
    CHECK(read_file(e.path()).find(interplan::kTraceSchema) != std::string::npos);
  }
  CHECK(files == 10);
  CHECK(seeds.size() == 10);
}

TEST_CASE("config errors exit with status 1 and name the problem") {
  const auto dir = scratch("bad");
  write_file(dir / "missing.json",
             R"({"schema": "interplan.config/1", "scenario": "no_such_scenario.json"})");
  auto r = cli("run --config '" + (dir / "missing.json").string() + "'");
  CHECK(r.status == 1);
  CHECK(r.output.find("no_such_scenario.json") != std::string::npos);

  write_file(dir / "malformed.json", "{\"schema\": ");
  CHECK(cli("eval --config '" + (dir / "malformed.json").string() + "'").status == 1);
  CHECK(cli("run --mode sideways").status == 1);
  CHECK(cli("bogus-subcommand").status != 0);
}

TEST_CASE("config path comes from the environment when --config is absent") {
  const auto out = scratch("env");
  const auto r = cli("run --episodes 1 --mode interactive --out '" + out.string() + "'",
                     "INTERPLAN_CONFIG='" + (kData / "configs" / "boxed_in.json").string() + "'");
  CHECK(r.status == 0);
  CHECK(r.output.find("scenario=boxed_in") != std::string::npos);
  CHECK(cli("run", "INTERPLAN_CONFIG=/nonexistent.json").status == 1);
}

TEST_CASE("eval writes a CSV row per mode") {
  const auto out = scratch("eval");
  const auto r = cli("eval " + config_arg("empty_road.json") + " --episodes 1 --out '" + out.string() + "'");
  CHECK(r.status == 0);
  std::istringstream csv(read_file(out / "eval.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("mode,", 0) == 0) continue;
    ++rows;
    CHECK(line.find(",1.0000,") != std::string::npos);  // SR 1 on the empty road
  }
  CHECK(rows == 2);
}

TEST_CASE("infer compares LBP with exact marginals") {
  auto r = cli("infer '" + (kData / "fixtures" / "mrf_tree.json").string() + "'");
  CHECK(r.status == 0);
  const auto at = r.output.find("max_tv ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(r.output.substr(at + 7)) < 1e-9);
  r = cli("infer '" + (kData / "fixtures" / "mrf_oversized.json").string() + "'");
  CHECK(r.status == 0);
  CHECK(r.output.find("skipped") != std::string::npos);
  CHECK(cli("infer /nonexistent.json").status == 1);
}

TEST_CASE("fit on a toy corpus lowers the loss; zero steps keeps the weights") {
  const auto out = scratch("fit");
  const auto dir = scratch("fitcfg");
  write_file(dir / "fit.json", R"({"schema": "interplan.config/1", "optimizer": {"steps": 5}})");
  auto r = cli("fit --toy 6 --gradient-check --config '" + (dir / "fit.json").string() + "' --out '" +
               out.string() + "'");
  CHECK(r.status == 0);
  CHECK(r.output.find("gradient check") != std::string::npos);
  const auto curve = read_file(out / "loss_curve.csv");
  CHECK(curve.find("interplan.loss_curve/1") != std::string::npos);
  double first = 0, last = 0;
  REQUIRE(std::sscanf(r.output.substr(r.output.find("loss ")).c_str(), "loss %lf -> %lf", &first, &last) == 2);
  CHECK(last < first);

  write_file(dir / "zero.json", R"({"schema": "interplan.config/1", "optimizer": {"steps": 0},
                                    "weights": ")" + (kData / "weights" / "default.txt").string() + "\"}");
  r = cli("fit --toy 4 --config '" + (dir / "zero.json").string() + "' --out '" + out.string() + "'");
  CHECK(r.status == 0);
  const auto in = interplan::load_weights(kData / "weights" / "default.txt");
  const auto got = interplan::load_weights(out / "weights.txt");
  CHECK(got.w == in.w);
  CHECK(got.safety.margin == in.safety.margin);

  write_file(dir / "none.json", R"({"schema": "interplan.config/1"})");
  CHECK(cli("fit --config '" + (dir / "none.json").string() + "'").status == 1);
}

TEST_CASE("plot writes a frame per tick") {
  const auto runs = scratch("plotrun");
  REQUIRE(cli("run " + config_arg("dense_merge.json") + " --episodes 1 --mode interactive --out '" + runs.string() +
              "'").status == 0);
  const auto trace = fs::directory_iterator(runs)->path();
  const auto ticks = interplan::load_traces(trace).at(0).ticks.size();
  const auto frames = scratch("plot");
  auto r = cli("plot '" + trace.string() + "' --out '" + frames.string() + "'");
  CHECK(r.status == 0);
  CHECK(static_cast<std::size_t>(std::distance(fs::directory_iterator(frames), fs::directory_iterator{})) == ticks);

  const auto empty = scratch("plotempty");
  write_file(empty / "empty.jsonl", "");
  r = cli("plot '" + (empty / "empty.jsonl").string() + "' --out '" + (empty / "frames").string() + "'");
  CHECK(r.status == 0);
  CHECK(r.output.find("wrote 0 frames") != std::string::npos);

  write_file(empty / "junk.jsonl", "{\"schema\": \"nope\"}\n");
  CHECK(cli("plot '" + (empty / "junk.jsonl").string() + "' --out '" + (empty / "f2").string() + "'").status != 0);
}
