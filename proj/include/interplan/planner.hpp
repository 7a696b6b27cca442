#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "interplan/energy.hpp"
#include "interplan/inference.hpp"

namespace interplan {

enum class PlanningMode { interactive, non_interactive };

std::string_view to_string(PlanningMode mode);
PlanningMode planning_mode_from_string(std::string_view name);

struct PlanResult {
  std::size_t chosen_index = 0;
  Trajectory chosen_trajectory;
  std::vector<double> costs;  // one per ego candidate
  ConditionalMarginals predictions;  // other agents, for the chosen candidate
  PlanningMode mode = PlanningMode::interactive;
};

// E_a(tau_0) + E_g(tau_0) + sum_i sum_k p_i(k) [E_a(tau_i^k) + E_s(tau_0, tau_i^k)],
// with static-obstacle safety folded into each participant's own term. The
// agent-agent interaction term is not part of the expectation.
double interactive_cost(std::size_t ego_index, const EnergyTables& tables,
                        const ConditionalMarginals& marginals);
double interactive_cost(std::size_t ego_index, const PlanningContext& ctx,
                        std::span<const CandidateSet> sets, const EnergyWeights& weights,
                        const ConditionalMarginals& marginals);

// Same four-term form with marginals that ignore the ego plan.
double noninteractive_cost(std::size_t ego_index, const EnergyTables& tables,
                           const ConditionalMarginals& marginals_unconditioned);
double noninteractive_cost(std::size_t ego_index, const PlanningContext& ctx,
                           std::span<const CandidateSet> sets, const EnergyWeights& weights,
                           const ConditionalMarginals& marginals_unconditioned);

PlanResult plan(const EnergyTables& tables, std::span<const CandidateSet> sets, PlanningMode mode,
                const LbpOptions& lbp_opts);
PlanResult plan(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                const EnergyWeights& weights, PlanningMode mode, const LbpOptions& lbp_opts);

// Lowest index among the minimal finite costs; throws PlanningError if none.
std::size_t argmin_cost(std::span<const double> costs);

// Keeps the `cap` nearest agents within `radius` of the ego (current states).
PlanningContext select_nearby_agents(const PlanningContext& ctx, double radius = 30.0, std::size_t cap = 8);

}  // namespace interplan
