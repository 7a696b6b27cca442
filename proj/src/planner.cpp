#include "interplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "interplan/errors.hpp"

namespace interplan {

std::string_view to_string(PlanningMode mode) {
  return mode == PlanningMode::interactive ? "interactive" : "non_interactive";
}

PlanningMode planning_mode_from_string(std::string_view name) {
  if (name == "interactive") return PlanningMode::interactive;
  if (name == "non_interactive" || name == "noninteractive") return PlanningMode::non_interactive;
  throw ConfigError("unknown planning mode '" + std::string(name) + "'");
}

namespace {

double expected_cost(std::size_t ego_index, const EnergyTables& t, const ConditionalMarginals& m) {
  if (ego_index >= t.k) throw std::out_of_range("ego candidate index out of range");
  if (m.n_nodes != t.participants - 1 || (m.n_nodes > 0 && m.n_states != t.k)) {
    throw ShapeError("marginals do not match the candidate sets (" + std::to_string(m.n_nodes) + "x" +
                     std::to_string(m.n_states) + " vs " + std::to_string(t.participants - 1) + "x" +
                     std::to_string(t.k) + ")");
  }
  double f = t.agent(ego_index, 0) + t.obstacle_energy(0, ego_index) + t.goal[ego_index];
  for (std::size_t node = 0; node < m.n_nodes; ++node) {
    const std::size_t agent = node + 1;
    for (std::size_t c = 0; c < t.k; ++c) {
      const double p = m(node, c);
      if (p == 0.0) continue;
      f += p * (t.agent(c, agent) + t.obstacle_energy(agent, c) + t.ego_pair(agent, ego_index, c));
    }
  }
  return f;
}

}  // namespace

double interactive_cost(std::size_t ego_index, const EnergyTables& tables,
                        const ConditionalMarginals& marginals) {
  return expected_cost(ego_index, tables, marginals);
}

double interactive_cost(std::size_t ego_index, const PlanningContext& ctx,
                        std::span<const CandidateSet> sets, const EnergyWeights& weights,
                        const ConditionalMarginals& marginals) {
  return expected_cost(ego_index, build_energy_tables(ctx, sets, weights), marginals);
}

double noninteractive_cost(std::size_t ego_index, const EnergyTables& tables,
                           const ConditionalMarginals& marginals_unconditioned) {
  return expected_cost(ego_index, tables, marginals_unconditioned);
}

double noninteractive_cost(std::size_t ego_index, const PlanningContext& ctx,
                           std::span<const CandidateSet> sets, const EnergyWeights& weights,
                           const ConditionalMarginals& marginals_unconditioned) {
  return expected_cost(ego_index, build_energy_tables(ctx, sets, weights), marginals_unconditioned);
}

std::size_t argmin_cost(std::span<const double> costs) {
  std::size_t best = costs.size();
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i])) continue;
    if (best == costs.size() || costs[i] < costs[best]) best = i;
  }
  if (best == costs.size()) throw PlanningError("no ego candidate has a finite cost");
  return best;
}

PlanResult plan(const EnergyTables& tables, std::span<const CandidateSet> sets, PlanningMode mode,
                const LbpOptions& lbp_opts) {
  if (sets.empty() || sets.front().size() == 0) throw ShapeError("plan: no ego candidates");
  PlanResult result;
  result.mode = mode;
  result.costs.resize(tables.k);
  if (mode == PlanningMode::interactive) {
    std::vector<ConditionalMarginals> per_candidate;
    per_candidate.reserve(tables.k);
    for (std::size_t e = 0; e < tables.k; ++e) {
      per_candidate.push_back(lbp_marginals(build_conditional_mrf(tables, e), lbp_opts));
      result.costs[e] = interactive_cost(e, tables, per_candidate.back());
    }
    result.chosen_index = argmin_cost(result.costs);
    result.predictions = std::move(per_candidate[result.chosen_index]);
  } else {
    ConditionalMarginals shared = lbp_marginals(build_unconditional_mrf(tables), lbp_opts);
    for (std::size_t e = 0; e < tables.k; ++e) result.costs[e] = noninteractive_cost(e, tables, shared);
    result.chosen_index = argmin_cost(result.costs);
    result.predictions = std::move(shared);
  }
  result.chosen_trajectory = sets.front()[result.chosen_index];
  return result;
}

PlanResult plan(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                const EnergyWeights& weights, PlanningMode mode, const LbpOptions& lbp_opts) {
  lbp_opts.validate();
  return plan(build_energy_tables(ctx, sets, weights), sets, mode, lbp_opts);
}

PlanningContext select_nearby_agents(const PlanningContext& ctx, double radius, std::size_t cap) {
  const Vec2 ego = ctx.ego.current().position();
  std::vector<std::pair<double, std::size_t>> near;
  for (std::size_t i = 0; i < ctx.agents.size(); ++i) {
    const double d = distance(ego, ctx.agents[i].current().position());
    if (d <= radius) near.emplace_back(d, i);
  }
  std::stable_sort(near.begin(), near.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (near.size() > cap) near.resize(cap);
  // Keep the original relative order so agent labels stay stable.
  std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  PlanningContext out = ctx;
  out.agents.clear();
  for (const auto& [d, i] : near) out.agents.push_back(ctx.agents[i]);
  return out;
}

}  // namespace interplan
