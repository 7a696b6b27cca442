#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "interplan/energy.hpp"
#include "interplan/inference.hpp"
#include "interplan/trajectory.hpp"

namespace interplan::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Random MRF with log-potentials in [-scale, scale] on the given edges.
inline PairwiseMRF random_mrf(std::mt19937_64& rng, std::size_t nodes, std::size_t states,
                              const std::vector<std::pair<std::size_t, std::size_t>>& edges, double scale) {
  PairwiseMRF m(nodes, states);
  for (double& u : m.log_unary) u = uniform(rng, -scale, scale);
  for (auto [i, j] : edges) {
    std::vector<double> t(states * states);
    for (double& v : t) v = uniform(rng, -scale, scale);
    m.add_edge(i, j, std::move(t));
  }
  return m;
}

// Random spanning tree (each node attaches to an earlier one).
inline std::vector<std::pair<std::size_t, std::size_t>> random_tree(std::mt19937_64& rng, std::size_t nodes) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t n = 1; n < nodes; ++n) edges.emplace_back(rng() % n, n);
  return edges;
}

inline Trajectory straight_line(Vec2 start, double heading, double speed, std::size_t steps, double dt = 0.5) {
  std::vector<KinematicState> s;
  for (std::size_t t = 0; t <= steps; ++t) {
    const double d = speed * dt * static_cast<double>(t);
    s.push_back({start.x + d * std::cos(heading), start.y + d * std::sin(heading), heading, speed});
  }
  return Trajectory(std::move(s), dt);
}

inline Polyline straight_road(double y, double length = 200.0) { return Polyline({{-50.0, y}, {length, y}}); }

// Small two-lane context with `agents` other vehicles spread ahead of the ego.
inline PlanningContext toy_context(std::mt19937_64& rng, std::size_t agents) {
  PlanningContext ctx;
  ctx.ego.history = {{0.0, 0.0, 0.0, uniform(rng, 3.0, 7.0)}};
  ctx.route = straight_road(0.0);
  ctx.lanes = {{straight_road(0.0), 3.5}, {straight_road(3.5), 3.5}};
  for (std::size_t i = 0; i < agents; ++i) {
    AgentObservation a;
    const double lane = static_cast<double>(rng() % 2) * 3.5;
    a.history = {{uniform(rng, 6.0, 25.0) + 8.0 * static_cast<double>(i), lane, 0.0, uniform(rng, 2.0, 8.0)}};
    ctx.agents.push_back(a);
  }
  return ctx;
}

inline SamplerProfile small_profile(std::size_t k) {
  SamplerProfile p = SamplerProfile::defaults();
  p.k = k;
  return p;
}

inline std::vector<CandidateSet> sets_for(const PlanningContext& ctx, const SamplerProfile& profile) {
  std::vector<CandidateSet> sets{sample_candidates(ctx.ego.current(), profile)};
  for (const auto& a : ctx.agents) sets.push_back(sample_candidates(a.current(), profile));
  return sets;
}

// Classical RK4 on (x, y, theta, v, s) with `n` equal steps over `duration`.
inline std::array<double, 5> rk4_unicycle(double v0, double accel, double k0, double k1, double duration, int n) {
  auto f = [&](const std::array<double, 5>& z) {
    const double v = std::max(z[3], 0.0);
    return std::array<double, 5>{v * std::cos(z[2]), v * std::sin(z[2]), v * (k0 + k1 * z[4]),
                                 z[3] > 0.0 ? accel : 0.0, v};
  };
  std::array<double, 5> z{0, 0, 0, v0, 0};
  const double h = duration / n;
  for (int i = 0; i < n; ++i) {
    auto add = [&](const std::array<double, 5>& a, const std::array<double, 5>& b, double s) {
      std::array<double, 5> r;
      for (int j = 0; j < 5; ++j) r[j] = a[j] + s * b[j];
      return r;
    };
    const auto a = f(z), b = f(add(z, a, h / 2)), c = f(add(z, b, h / 2)), d = f(add(z, c, h));
    for (int j = 0; j < 5; ++j) z[j] += h / 6 * (a[j] + 2 * b[j] + 2 * c[j] + d[j]);
  }
  return z;
}

// Cost of each ego candidate from the exact conditional distribution over the
// other agents, enumerated through joint_energy.
inline std::vector<double> enumerated_costs(const PlanningContext& ctx, const std::vector<CandidateSet>& sets,
                                     const EnergyWeights& w) {
  const std::size_t k = sets[0].size(), n = ctx.agents.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= k;
  const auto tables = build_energy_tables(ctx, sets, w);
  std::vector<double> costs;
  for (std::size_t e = 0; e < k; ++e) {
    std::vector<double> energy(total), ego_terms(total);
    for (std::size_t s = 0; s < total; ++s) {
      std::vector<std::size_t> x{e};
      std::size_t r = s;
      for (std::size_t i = 0; i < n; ++i) {
        x.push_back(r % k);
        r /= k;
      }
      energy[s] = joint_energy(x, ctx, sets, w);
      double agent_terms = 0.0;
      for (std::size_t i = 1; i <= n; ++i) {
        agent_terms += tables.agent(x[i], i) + tables.obstacle_energy(i, x[i]) + tables.ego_pair(i, e, x[i]);
      }
      ego_terms[s] = agent_terms;
    }
    const double low = *std::min_element(energy.begin(), energy.end());
    double z = 0.0, expect = 0.0;
    for (std::size_t s = 0; s < total; ++s) {
      const double p = std::exp(-(energy[s] - low));
      z += p;
      expect += p * ego_terms[s];
    }
    costs.push_back(tables.agent(e, 0) + tables.obstacle_energy(0, e) + tables.goal[e] + expect / z);
  }
  return costs;
}

}  // namespace interplan::testing
