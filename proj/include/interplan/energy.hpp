#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "interplan/geometry.hpp"
#include "interplan/trajectory.hpp"

namespace interplan {

// Agent-cost feature basis. The first seven are always present; the last two
// are privileged (future-motion hints) and only exist in teacher models.
enum class Feature : std::size_t {
  lane_offset = 0,
  speed_deviation,
  acceleration,
  jerk,
  curvature,
  route_progress,
  heading_alignment,
  hint_speed,
  hint_heading,
};

inline constexpr std::size_t kBaseFeatureCount = 7;
inline constexpr std::size_t kPrivilegedFeatureCount = 9;

std::string_view feature_name(std::size_t index);
std::optional<std::size_t> feature_index(std::string_view name);

struct Lane {
  Polyline centerline;
  double width = 3.5;
};

// Ground-truth future-motion summary, only visible to privileged models.
struct MotionHint {
  double mean_speed = 0.0;
  double heading_change = 0.0;
};

struct AgentObservation {
  std::vector<KinematicState> history;  // oldest first; back() is the current state
  BoundingBox box;
  std::optional<MotionHint> hint;

  const KinematicState& current() const { return history.back(); }
};

// Something that will not move within the horizon (parked car, barrier).
// Acts as a participant with a single known trajectory: it contributes safety
// energy to each agent but no decision variable.
struct StaticObstacle {
  KinematicState pose;
  BoundingBox box;
};

struct PlanningContext {
  AgentObservation ego;
  std::vector<AgentObservation> agents;  // the N other agents
  Polyline route;
  std::vector<Lane> lanes;
  std::vector<StaticObstacle> obstacles;
  double speed_limit = 8.0;

  std::size_t agent_count() const { return agents.size(); }
  // Index 0 is the ego, 1..N the other agents.
  const AgentObservation& participant(std::size_t i) const { return i == 0 ? ego : agents[i - 1]; }
  void validate() const;
};

struct SafetyParams {
  double collision_weight = 1e4;
  double margin = 2.0;
};

struct EnergyWeights {
  std::vector<double> w;
  SafetyParams safety;

  std::size_t feature_count() const { return w.size(); }
  bool privileged() const { return w.size() == kPrivilegedFeatureCount; }
  void validate() const;

  static EnergyWeights defaults();
  // Defaults extended with the two privileged coefficients.
  static EnergyWeights privileged_defaults();
};

// K x (N+1) agent energies; column 0 is the ego.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t k, std::size_t columns) : k_(k), cols_(columns), values_(k * columns, 0.0) {}

  double operator()(std::size_t k, std::size_t agent) const { return values_[k * cols_ + agent]; }
  double& operator()(std::size_t k, std::size_t agent) { return values_[k * cols_ + agent]; }
  std::size_t rows() const { return k_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t k_ = 0, cols_ = 0;
  std::vector<double> values_;
};

// Feature vector of one candidate. `agent_index` 0 measures progress along
// the ego route; other agents along the lane nearest to their origin.
std::vector<double> agent_features(const Trajectory& candidate, std::size_t agent_index,
                                   const PlanningContext& ctx, std::size_t feature_count);

ScoreMatrix agent_energy(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                         const EnergyWeights& weights);

double safety_energy(const Trajectory& a, const BoundingBox& box_a, const Trajectory& b,
                     const BoundingBox& box_b, std::span<const double> scale_speed,
                     const SafetyParams& params);

// Per-step speeds of a trajectory, the usual velocity scaling.
std::vector<double> speeds_of(const Trajectory& t);

double goal_energy(const Trajectory& tau0, const Polyline& route);

// Every energy term the planner and inference need, evaluated once per cycle.
struct EnergyTables {
  struct PairTable {
    std::size_t i = 0, j = 0;    // participant indices, 1 <= i < j
    std::vector<double> values;  // K x K, row = candidate of i
  };

  std::size_t participants = 0;  // N + 1
  std::size_t k = 0;
  std::size_t feature_count = 0;
  std::vector<double> features;    // [participant][k][feature]
  ScoreMatrix agent;               // E_a
  std::vector<double> goal;        // E_g per ego candidate
  std::vector<double> obstacle;    // [participant][k], safety against static obstacles
  std::vector<double> ego_safety;  // [agent-1][ego k][agent k], E_s(tau_0, tau_i)
  std::vector<PairTable> agent_pairs;  // non-zero tables only

  std::span<const double> feature_row(std::size_t participant, std::size_t k_index) const {
    return {features.data() + (participant * k + k_index) * feature_count, feature_count};
  }
  double obstacle_energy(std::size_t participant, std::size_t k_index) const {
    return obstacle[participant * k + k_index];
  }
  double ego_pair(std::size_t agent, std::size_t ego_k, std::size_t agent_k) const {
    return ego_safety[((agent - 1) * k + ego_k) * k + agent_k];
  }
};

EnergyTables build_energy_tables(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                                 const EnergyWeights& weights);

// Recomputes agent energies for new weights without touching geometry.
void reweight(EnergyTables& tables, const EnergyWeights& weights);

// Full joint energy of one assignment of candidates (index per participant).
double joint_energy(std::span<const std::size_t> assignment, const PlanningContext& ctx,
                    std::span<const CandidateSet> sets, const EnergyWeights& weights);
double joint_energy(std::span<const std::size_t> assignment, const EnergyTables& tables);

}  // namespace interplan
