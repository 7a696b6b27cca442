// interplan: run, evaluate, fit and inspect the interactive planner.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "interplan/errors.hpp"
#include "interplan/io.hpp"
#include "interplan/plot.hpp"

namespace fs = std::filesystem;
using namespace interplan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct GlobalFlags {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> workers;
  std::string out;
};

RunConfig resolve_config(const GlobalFlags& g) {
  RunConfig cfg;
  if (!g.config.empty()) {
    cfg = load_config(g.config);
  } else if (const char* env = std::getenv(kConfigEnv); env && *env) {
    cfg = load_config(env);
  } else {
    cfg = default_config();
  }
  if (!g.mode.empty()) {
    if (g.mode == "both") {
      cfg.mode.reset();
    } else {
      cfg.mode = planning_mode_from_string(g.mode);
    }
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.episodes) cfg.episodes = *g.episodes;
  if (g.workers) cfg.workers = *g.workers;
  if (!g.out.empty()) cfg.out = g.out;
  cfg.validate();
  return cfg;
}

std::vector<ScenarioConfig> seeded(const RunConfig& cfg) {
  std::vector<ScenarioConfig> out = cfg.scenarios;
  for (auto& s : out) s.seed = cfg.seed;
  return out;
}

std::vector<PlanningMode> modes_of(const RunConfig& cfg, bool both_by_default) {
  if (cfg.mode) return {*cfg.mode};
  if (both_by_default) return {PlanningMode::interactive, PlanningMode::non_interactive};
  return {PlanningMode::interactive};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

int cmd_run(const RunConfig& cfg) {
  ensure_dir(cfg.out);
  const auto configs = seeded(cfg);
  for (PlanningMode mode : modes_of(cfg, false)) {
    const auto traces = run_episodes(configs, cfg.weights, mode, cfg.episodes, cfg.sim, cfg.workers);
    for (const auto& t : traces) {
      const fs::path path = cfg.out / (t.scenario + "_" + std::string(to_string(mode)) + "_seed" +
                                       std::to_string(t.seed) + ".jsonl");
      auto out = open_out(path);
      write_trace(out, t);
      std::printf("scenario=%s mode=%s seed=%llu outcome=%s ticks=%zu route_fraction=%.3f trace=%s\n",
                  t.scenario.c_str(), std::string(to_string(mode)).c_str(),
                  static_cast<unsigned long long>(t.seed), std::string(to_string(t.outcome)).c_str(),
                  t.ticks.size(), t.route_fraction(), path.string().c_str());
    }
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  ensure_dir(cfg.out);
  const auto configs = seeded(cfg);
  std::vector<EvalRow> rows;
  for (PlanningMode mode : modes_of(cfg, true)) {
    rows.push_back({mode, evaluate(configs, cfg.weights, mode, cfg.episodes, cfg.sim, cfg.workers)});
  }
  const fs::path csv = cfg.out / "eval.csv";
  auto out = open_out(csv);
  write_eval_csv(out, rows);
  write_eval_table(std::cout, rows);
  std::cout << "wrote " << csv.string() << "\n";
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg, const std::string& fixture, double max_states) {
  const PairwiseMRF mrf = load_mrf(fixture);
  write_marginal_table(std::cout, mrf, cfg.sim.lbp, max_states);
  return kExitOk;
}

std::vector<Scene> fit_corpus(const RunConfig& cfg, const std::vector<std::string>& extra, std::size_t toy) {
  if (toy > 0) return make_toy_corpus(cfg.seed, toy, cfg.sim.sampler);
  std::vector<fs::path> paths = cfg.fit.traces;
  for (const auto& e : extra) paths.emplace_back(e);
  if (paths.empty()) throw ConfigError("fit: no trace files given (fit.traces in the config or positional paths)");
  std::vector<Scene> scenes;
  for (const auto& p : paths) {
    for (const auto& t : load_traces(p)) {
      auto s = scenes_from_trace(t, cfg.sim, cfg.fit.stride);
      scenes.insert(scenes.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
  }
  if (scenes.empty()) throw ConfigError("fit: the traces hold no episode long enough to supervise");
  return scenes;
}

int cmd_fit(const RunConfig& cfg, const std::vector<std::string>& traces, std::size_t toy, bool gradient_check) {
  ensure_dir(cfg.out);
  const auto scenes = fit_corpus(cfg, traces, toy);
  std::printf("fitting on %zu scenes\n", scenes.size());
  if (gradient_check || cfg.fit.gradient_check) {
    const auto check = check_gradient(scenes, cfg.weights, cfg.optimizer, cfg.fit.gradient_step);
    std::printf("gradient check: max relative error %.3e\n", check.max_relative_error);
  }
  const FitResult fit = fit_weights(scenes, cfg.weights, cfg.optimizer);
  const fs::path wpath = cfg.out / "weights.txt";
  save_weights(wpath, fit.weights);
  auto curve = open_out(cfg.out / "loss_curve.csv");
  write_loss_curve(curve, fit.loss_history);
  if (!fit.loss_history.empty()) {
    std::printf("loss %.6f -> %.6f over %zu accepted steps\n", fit.loss_history.front(), fit.loss_history.back(),
                fit.loss_history.size() - 1);
  }
  std::printf("wrote %s\n", wpath.string().c_str());
  return kExitOk;
}

int cmd_distill(const RunConfig& cfg) {
  ensure_dir(cfg.out);
  const auto corpus = make_toy_corpus(cfg.distill.corpus_seed, cfg.distill.scenes, cfg.sim.sampler);
  DistillOptions opts{cfg.optimizer, cfg.lambdas};
  auto csv = open_out(cfg.out / "distill.csv");
  csv << "# schema interplan.distill/1\n";
  csv << "split,teacher_heldout,student_plain_heldout,student_distilled_heldout\n";
  std::size_t wins = 0;
  for (std::size_t s = 0; s < cfg.distill.splits; ++s) {
    const auto split = split_corpus(corpus, cfg.seed + s, cfg.distill.heldout_fraction);
    const DistillReport r = run_distillation(split.train, split.heldout, opts);
    const bool win = r.distilled_heldout <= r.plain_heldout;
    wins += win ? 1 : 0;
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%.9f,%.9f,%.9f\n", s, r.teacher_heldout, r.plain_heldout,
                  r.distilled_heldout);
    csv << line;
    std::printf("split %zu: teacher %.6f  student %.6f  distilled student %.6f%s\n", s, r.teacher_heldout,
                r.plain_heldout, r.distilled_heldout, win ? "" : "  (distillation did not help)");
  }
  std::printf("distilled student held-out loss <= undistilled in %zu of %zu splits\n", wins, cfg.distill.splits);
  return kExitOk;
}

int cmd_plot(const RunConfig& cfg, const std::string& trace_path) {
  const auto traces = load_traces(trace_path);
  ensure_dir(cfg.out);
  std::size_t frames = 0;
  for (std::size_t e = 0; e < traces.size(); ++e) {
    const auto& t = traces[e];
    std::string prefix = t.scenario + "_" + std::string(to_string(t.mode)) + "_seed" + std::to_string(t.seed);
    if (traces.size() > 1) prefix += "_ep" + std::to_string(e);
    frames += write_frames(t, cfg.out, prefix);
  }
  std::printf("wrote %zu frames to %s\n", frames, cfg.out.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive prediction and planning: simulate, evaluate, fit, inspect"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, std::string("Config file (default: $") + kConfigEnv + ")");
  app.add_option("--mode", g.mode, "interactive | non_interactive | both");
  app.add_option("--seed", g.seed, "First episode seed");
  app.add_option("--episodes", g.episodes, "Episodes per scenario");
  app.add_option("--workers", g.workers, "Parallel episode workers");
  app.add_option("--out", g.out, "Output directory");

  auto* run = app.add_subcommand("run", "Run episodes and write JSON-lines traces");
  auto* eval = app.add_subcommand("eval", "Evaluate SR/RL per planning mode");

  auto* infer = app.add_subcommand("infer", "Compare LBP and exact marginals of an MRF fixture");
  std::string fixture;
  double max_states = kMaxEnumerationStates;
  infer->add_option("fixture", fixture, "MRF fixture (JSON)")->required();
  infer->add_option("--max-states", max_states, "Joint-state cap for exact enumeration");

  auto* fit = app.add_subcommand("fit", "Fit energy weights on logged traces");
  std::vector<std::string> fit_traces;
  std::size_t toy = 0;
  bool gradient_check = false;
  fit->add_option("traces", fit_traces, "Trace files (added to fit.traces)");
  fit->add_option("--toy", toy, "Fit on this many synthetic scenes instead of traces");
  fit->add_flag("--gradient-check", gradient_check, "Report the finite-difference gradient error first");

  auto* distill = app.add_subcommand("distill", "Teacher/student distillation on the toy corpus");

  auto* plot = app.add_subcommand("plot", "Render a trace as SVG frames");
  std::string trace_path;
  plot->add_option("trace", trace_path, "Trace file (JSON lines)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const RunConfig cfg = resolve_config(g);
    if (*run) return cmd_run(cfg);
    if (*eval) return cmd_eval(cfg);
    if (*infer) return cmd_infer(cfg, fixture, max_states);
    if (*fit) return cmd_fit(cfg, fit_traces, toy, gradient_check);
    if (*distill) return cmd_distill(cfg);
    if (*plot) return cmd_plot(cfg, trace_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "interplan: configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "interplan: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
