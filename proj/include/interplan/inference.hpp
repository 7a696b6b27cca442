#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "interplan/energy.hpp"

namespace interplan {

// Discrete pairwise Markov random field over N nodes with K states each,
// p(x) = exp(sum_i unary_i(x_i) + sum_(i,j) pairwise_ij(x_i, x_j)) / Z.
struct PairwiseMRF {
  struct Edge {
    std::size_t i = 0, j = 0;          // i < j
    std::vector<double> log_potential;  // K x K, row = state of i
  };

  std::size_t n_nodes = 0;
  std::size_t n_states = 0;
  std::vector<double> log_unary;  // N x K
  std::vector<Edge> edges;

  PairwiseMRF() = default;
  PairwiseMRF(std::size_t nodes, std::size_t states)
      : n_nodes(nodes), n_states(states), log_unary(nodes * states, 0.0) {}

  double& unary(std::size_t node, std::size_t state) { return log_unary[node * n_states + state]; }
  double unary(std::size_t node, std::size_t state) const { return log_unary[node * n_states + state]; }
  void add_edge(std::size_t i, std::size_t j, std::vector<double> log_potential);
  void validate() const;  // throws ShapeError / NumericError
};

struct ConditionalMarginals {
  struct PairTable {
    std::size_t i = 0, j = 0;
    std::vector<double> values;  // K x K probabilities, row = state of i
  };

  std::size_t n_nodes = 0;
  std::size_t n_states = 0;
  std::vector<double> unary;  // N x K
  std::vector<PairTable> pairwise;  // aligned with the MRF's edges
  bool converged = true;
  std::size_t iterations = 0;
  std::optional<double> log_partition;  // exact enumeration only

  std::span<const double> row(std::size_t node) const {
    return {unary.data() + node * n_states, n_states};
  }
  double operator()(std::size_t node, std::size_t state) const { return unary[node * n_states + state]; }
  std::size_t mode(std::size_t node) const;
};

struct LbpOptions {
  std::size_t max_iterations = 50;
  double damping = 0.5;  // not applied on acyclic graphs
  double tolerance = 1e-6;

  void validate() const;
};

// Other agents conditioned on ego candidate `ego_index`; node n <-> agent n+1.
PairwiseMRF build_conditional_mrf(const EnergyTables& tables, std::size_t ego_index);
PairwiseMRF build_conditional_mrf(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                                  const EnergyWeights& weights, std::size_t ego_index);

// Other agents with the ego coupling dropped; node n <-> agent n+1.
PairwiseMRF build_unconditional_mrf(const EnergyTables& tables);
PairwiseMRF build_unconditional_mrf(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                                    const EnergyWeights& weights);

// All N+1 participants including the ego (node n <-> participant n); the
// distribution p(T | X; w) itself, used for training.
PairwiseMRF build_joint_mrf(const EnergyTables& tables);

inline constexpr double kMaxEnumerationStates = 1e7;

ConditionalMarginals enumerate_exact(const PairwiseMRF& mrf, double max_states = kMaxEnumerationStates);

ConditionalMarginals lbp_marginals(const PairwiseMRF& mrf, const LbpOptions& opts = {});

// LBP with its message history retained so that gradients of any function of
// the beliefs can be pulled back onto the unary log-potentials.
class LbpTape {
 public:
  LbpTape(const PairwiseMRF& mrf, const LbpOptions& opts);

  const ConditionalMarginals& marginals() const { return marginals_; }

  // d_unary: dL/d(unary beliefs), N x K. d_pairwise: dL/d(pairwise beliefs),
  // one K x K block per edge (may be empty to mean zero). Returns dL/d(log_unary).
  std::vector<double> backward(std::span<const double> d_unary,
                               const std::vector<std::vector<double>>& d_pairwise) const;

 private:
  struct Directed {
    std::size_t from = 0, to = 0, edge = 0;
    bool forward = true;  // from == edge.i
  };

  void incoming_sum(const std::vector<double>& messages, std::size_t node, std::size_t skip_edge,
                    std::span<double> out) const;
  double pair_potential(std::size_t edge, bool forward, std::size_t from_state, std::size_t to_state) const;

  PairwiseMRF mrf_;
  LbpOptions opts_;
  double damping_ = 0.0;  // opts_.damping, or 0 when the graph has no cycle
  std::vector<Directed> directed_;
  std::vector<std::vector<std::size_t>> incoming_;  // directed message ids into each node
  std::vector<std::vector<double>> history_;        // messages after each iteration; [0] = init
  ConditionalMarginals marginals_;
};

// Per-node total-variation distance between two sets of unary marginals.
std::vector<double> total_variation(const ConditionalMarginals& a, const ConditionalMarginals& b);

}  // namespace interplan
