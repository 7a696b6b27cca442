#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "interplan/energy.hpp"
#include "interplan/inference.hpp"
#include "interplan/learning.hpp"
#include "interplan/losses.hpp"
#include "interplan/planner.hpp"
#include "interplan/simworld.hpp"

namespace interplan {

// Schema tags written into (and checked against) every file header.
inline constexpr std::string_view kConfigSchema = "interplan.config/1";
inline constexpr std::string_view kScenarioSchema = "interplan.scenario/1";
inline constexpr std::string_view kTraceSchema = "interplan.trace/1";
inline constexpr std::string_view kWeightsSchema = "interplan.weights/1";
inline constexpr std::string_view kEvalSchema = "interplan.eval/1";
inline constexpr std::string_view kLossCurveSchema = "interplan.loss_curve/1";
inline constexpr std::string_view kMrfSchema = "interplan.mrf/1";

// Environment variable naming the config used when --config is absent.
inline constexpr const char* kConfigEnv = "INTERPLAN_CONFIG";

struct FitSettings {
  std::vector<std::filesystem::path> traces;
  std::size_t stride = 2;
  bool gradient_check = false;
  double gradient_step = 1e-5;
};

struct DistillSettings {
  std::uint64_t corpus_seed = 0;
  std::size_t scenes = 40;
  std::size_t splits = 10;
  double heldout_fraction = 0.5;
};

struct RunConfig {
  std::vector<ScenarioConfig> scenarios;
  std::optional<PlanningMode> mode;  // unset: both modes where that makes sense
  std::uint64_t seed = 0;
  std::size_t episodes = 1;
  std::size_t workers = 1;
  std::filesystem::path weights_path;  // empty: built-in defaults
  EnergyWeights weights = EnergyWeights::defaults();
  SimOptions sim;
  OptimizerOptions optimizer;
  LossWeights lambdas;
  FitSettings fit;
  DistillSettings distill;
  std::filesystem::path out = "out";

  void validate() const;
};

// Parses a config file; relative paths inside it resolve against its directory.
// Throws ConfigError naming the offending file or key.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = ".");
RunConfig default_config();

ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario(std::string_view json_text);
std::string scenario_to_json(const Scenario& scenario);

// Weights file: `schema interplan.weights/1`, then `name value` lines;
// `#` starts a comment.
EnergyWeights read_weights(std::istream& in);
EnergyWeights load_weights(const std::filesystem::path& path);
void write_weights(std::ostream& out, const EnergyWeights& weights);
void save_weights(const std::filesystem::path& path, const EnergyWeights& weights);

// EpisodeTrace as JSON lines: a header record, one record per tick and a
// closing outcome record. A file may hold several episodes back to back.
void write_trace(std::ostream& out, const EpisodeTrace& trace);
std::vector<EpisodeTrace> read_traces(std::istream& in);
std::vector<EpisodeTrace> load_traces(const std::filesystem::path& path);

// Pairwise MRF fixtures for the inference debugger.
PairwiseMRF parse_mrf(std::string_view json_text);
PairwiseMRF load_mrf(const std::filesystem::path& path);
std::string mrf_to_json(const PairwiseMRF& mrf);

// Side-by-side LBP/exact table with per-node total variation. Exact columns
// are replaced by a notice when enumeration would exceed `max_states`.
void write_marginal_table(std::ostream& out, const PairwiseMRF& mrf, const LbpOptions& opts,
                          double max_states = kMaxEnumerationStates);

struct EvalRow {
  PlanningMode mode;
  Metrics metrics;
};
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);
void write_eval_table(std::ostream& out, const std::vector<EvalRow>& rows);

void write_loss_curve(std::ostream& out, const std::vector<double>& losses);

}  // namespace interplan
