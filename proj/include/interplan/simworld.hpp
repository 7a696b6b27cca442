#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "interplan/energy.hpp"
#include "interplan/inference.hpp"
#include "interplan/learning.hpp"
#include "interplan/planner.hpp"
#include "interplan/trajectory.hpp"

namespace interplan {

// Headway-based longitudinal controller parameters (intelligent-driver form).
struct AgentBehavior {
  double desired_speed = 7.0;
  double time_headway = 1.5;
  double max_accel = 2.0;
  double comfort_decel = 2.0;
  double max_decel = 4.0;
  double standstill_gap = 2.0;
  bool yields_to_merging = true;
};

struct Neighbor {
  KinematicState state;
  BoundingBox box;
  bool is_ego = false;
};

// Commanded acceleration of a lane-following agent. A neighbor is a leader
// when it is ahead and its center or either front corner lies inside this
// agent's lane corridor; an ego that noses in ahead is therefore yielded to.
double scripted_acceleration(const KinematicState& state, const BoundingBox& box, const AgentBehavior& behavior,
                             const Lane& lane, std::span<const Neighbor> neighbors);

// Advances the agent by dt along its lane centerline.
KinematicState step_scripted_agent(const KinematicState& state, const BoundingBox& box,
                                   const AgentBehavior& behavior, const Lane& lane,
                                   std::span<const Neighbor> neighbors, double dt);

struct Goal {
  Vec2 center;
  double radius = 5.0;
};

struct AgentSpec {
  KinematicState init;
  BoundingBox box;
  AgentBehavior behavior;
  std::size_t lane = 0;
  bool parked = false;  // never moves; planners see it as a static obstacle
};

struct Scenario {
  std::string name = "custom";
  std::vector<Lane> lanes;
  Polyline route;
  Goal goal;
  KinematicState ego_init;
  BoundingBox ego_box;
  std::vector<AgentSpec> agents;
  double time_budget = 30.0;
  double speed_limit = 8.0;
  std::uint64_t seed = 0;

  void validate() const;
  double route_half_width() const;
};

struct DenseMergeParams {
  double lane_length = 150.0;
  double lane_width = 3.5;
  std::size_t agent_count = 6;
  double gap_min = 12.0;
  double gap_max = 18.0;
  double speed_min = 5.0;
  double speed_max = 9.0;
  double ego_start = 10.0;
  double ego_speed = 4.0;
  double blocker_distance = 25.0;  // stopped leader ahead of the ego
  double time_budget = 26.0;
};

Scenario make_dense_merge(std::uint64_t seed, const DenseMergeParams& params = {});
Scenario make_empty_road(std::uint64_t seed);
Scenario make_boxed_in(std::uint64_t seed);

// A scenario family: generated by kind from a seed, or a fixed scenario.
struct ScenarioConfig {
  std::string kind = "dense_merge";  // dense_merge | empty_road | boxed_in | fixed
  std::uint64_t seed = 0;
  DenseMergeParams merge;
  std::optional<Scenario> fixed;

  Scenario instantiate(std::uint64_t seed) const;
};

struct SimOptions {
  SamplerProfile sampler = SamplerProfile::defaults();
  LbpOptions lbp;
  std::size_t agent_substeps = 5;
  double agent_radius = 30.0;
  std::size_t agent_cap = 8;
  std::size_t history_ticks = 4;
  double prediction_threshold = 0.1;
  std::size_t max_predictions_per_agent = 3;
  // Road edges enter planning as rows of thin static boxes this far outside
  // the outermost lane edges, so leaving the road registers as a collision.
  double barrier_offset = 1.25;

  double replan_period() const { return sampler.dt; }
  void validate() const;
};

enum class Event { none, collision, goal_reached, off_road, timeout, planning_failure };

std::string_view to_string(Event e);
Event event_from_string(std::string_view name);

struct AgentSnapshot {
  std::size_t id = 0;
  KinematicState state;
};

struct PredictionSummary {
  std::size_t agent_id = 0;
  std::vector<std::pair<std::size_t, double>> top;  // (candidate, probability), descending
  std::vector<std::vector<Vec2>> paths;             // for the leading entries with p > threshold
};

struct TickRecord {
  std::size_t tick = 0;
  double time = 0.0;
  KinematicState ego;
  std::vector<AgentSnapshot> agents;
  std::optional<std::size_t> chosen;
  std::vector<double> costs;
  std::vector<Vec2> plan;
  std::vector<PredictionSummary> predictions;
  bool on_route = false;
  Event event = Event::none;
};

struct EpisodeTrace {
  std::string scenario;
  std::uint64_t seed = 0;
  PlanningMode mode = PlanningMode::interactive;
  double dt = 0.5;
  double speed_limit = 8.0;
  double time_budget = 0.0;
  std::vector<Lane> lanes;
  Polyline route;
  Goal goal;
  BoundingBox ego_box;
  std::vector<AgentSpec> agents;  // initial specs; ids are indices
  std::vector<TickRecord> ticks;
  Event outcome = Event::none;
  std::vector<double> cycle_seconds;  // wall-clock per planning cycle, not serialized

  bool success() const { return outcome == Event::goal_reached; }
  double route_fraction() const;
};

EpisodeTrace run_episode(const Scenario& scenario, const EnergyWeights& weights, PlanningMode mode,
                         const SimOptions& opts);

struct Metrics {
  double success_rate = 0.0;
  double right_lane_rate = 0.0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::size_t collisions = 0;
  std::size_t timeouts = 0;
  std::size_t off_road = 0;
  std::size_t planning_failures = 0;
  double mean_cycle_seconds = 0.0;
};

// Pools outcomes; RL is the fraction of all recorded ticks spent on route.
Metrics summarize(std::span<const EpisodeTrace> traces);

// Episode e of config c runs with seed c.seed + e. `workers` > 1 runs
// episodes on that many threads; results do not depend on it.
std::vector<EpisodeTrace> run_episodes(std::span<const ScenarioConfig> configs, const EnergyWeights& weights,
                                       PlanningMode mode, std::size_t episodes_per_scenario,
                                       const SimOptions& opts, std::size_t workers = 1);
Metrics evaluate(std::span<const ScenarioConfig> configs, const EnergyWeights& weights, PlanningMode mode,
                 std::size_t episodes_per_scenario, const SimOptions& opts, std::size_t workers = 1);

// Planning context as the planner sees it at one instant. `agent_ids` receives
// the ids of the moving agents that were kept, in context order.
PlanningContext observe(const Scenario& scenario, const KinematicState& ego,
                        std::span<const std::vector<KinematicState>> histories,
                        std::span<const KinematicState> ego_history, const SimOptions& opts,
                        std::vector<std::size_t>* agent_ids = nullptr);

// Supervision scenes cut from a trace every `stride` ticks; participants need
// a full horizon of logged future.
std::vector<Scene> scenes_from_trace(const EpisodeTrace& trace, const SimOptions& opts, std::size_t stride = 2);

// Synthetic two-lane scenes whose futures come from scripted agents with
// hidden desired speeds.
std::vector<Scene> make_toy_corpus(std::uint64_t seed, std::size_t count,
                                   const SamplerProfile& profile = SamplerProfile::defaults());

}  // namespace interplan
