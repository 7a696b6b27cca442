#include "interplan/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "interplan/errors.hpp"
#include "interplan/numeric.hpp"

namespace interplan {

void PairwiseMRF::add_edge(std::size_t i, std::size_t j, std::vector<double> log_potential) {
  if (i == j) throw ShapeError("MRF edge must join two distinct nodes");
  if (i >= n_nodes || j >= n_nodes) throw ShapeError("MRF edge refers to a missing node");
  if (log_potential.size() != n_states * n_states) throw ShapeError("MRF edge table must be K x K");
  if (i > j) {
    // store with i < j, transposing the table
    std::vector<double> t(log_potential.size());
    for (std::size_t a = 0; a < n_states; ++a) {
      for (std::size_t b = 0; b < n_states; ++b) t[b * n_states + a] = log_potential[a * n_states + b];
    }
    std::swap(i, j);
    log_potential = std::move(t);
  }
  edges.push_back({i, j, std::move(log_potential)});
}

void PairwiseMRF::validate() const {
  if (log_unary.size() != n_nodes * n_states) throw ShapeError("MRF unary table has the wrong size");
  if (n_nodes > 0 && n_states == 0) throw ShapeError("MRF nodes need at least one state");
  for (double v : log_unary) {
    if (!std::isfinite(v)) throw NumericError("MRF has a non-finite unary log-potential");
  }
  for (const auto& e : edges) {
    if (e.i >= e.j || e.j >= n_nodes) throw ShapeError("MRF edge references invalid nodes");
    if (e.log_potential.size() != n_states * n_states) throw ShapeError("MRF edge table has the wrong size");
    for (double v : e.log_potential) {
      if (!std::isfinite(v)) throw NumericError("MRF has a non-finite pairwise log-potential");
    }
  }
}

std::size_t ConditionalMarginals::mode(std::size_t node) const {
  const auto r = row(node);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

void LbpOptions::validate() const {
  if (max_iterations < 1) throw ConfigError("LBP max_iterations must be >= 1");
  if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("LBP damping must lie in [0, 1)");
  if (!(tolerance > 0.0)) throw ConfigError("LBP tolerance must be positive");
}

namespace {

PairwiseMRF others_mrf(const EnergyTables& t, std::optional<std::size_t> ego_index) {
  if (ego_index && *ego_index >= t.k) {
    throw std::out_of_range("ego candidate index " + std::to_string(*ego_index) + " out of range");
  }
  const std::size_t n = t.participants - 1;
  PairwiseMRF mrf(n, t.k);
  for (std::size_t node = 0; node < n; ++node) {
    const std::size_t agent = node + 1;
    for (std::size_t c = 0; c < t.k; ++c) {
      double u = -t.agent(c, agent) - t.obstacle_energy(agent, c);
      if (ego_index) u -= t.ego_pair(agent, *ego_index, c);
      mrf.unary(node, c) = u;
    }
  }
  for (const auto& p : t.agent_pairs) {
    std::vector<double> lp(p.values.size());
    for (std::size_t x = 0; x < lp.size(); ++x) lp[x] = -p.values[x];
    mrf.add_edge(p.i - 1, p.j - 1, std::move(lp));
  }
  return mrf;
}

}  // namespace

PairwiseMRF build_conditional_mrf(const EnergyTables& tables, std::size_t ego_index) {
  return others_mrf(tables, ego_index);
}

PairwiseMRF build_conditional_mrf(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                                  const EnergyWeights& weights, std::size_t ego_index) {
  return others_mrf(build_energy_tables(ctx, sets, weights), ego_index);
}

PairwiseMRF build_unconditional_mrf(const EnergyTables& tables) {
  return others_mrf(tables, std::nullopt);
}

PairwiseMRF build_unconditional_mrf(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                                    const EnergyWeights& weights) {
  return others_mrf(build_energy_tables(ctx, sets, weights), std::nullopt);
}

PairwiseMRF build_joint_mrf(const EnergyTables& t) {
  const std::size_t k = t.k;
  PairwiseMRF mrf(t.participants, k);
  for (std::size_t i = 0; i < t.participants; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      double u = -t.agent(c, i) - t.obstacle_energy(i, c);
      if (i == 0) u -= t.goal[c];
      mrf.unary(i, c) = u;
    }
  }
  for (std::size_t i = 1; i < t.participants; ++i) {
    std::vector<double> lp(k * k);
    bool any = false;
    for (std::size_t e = 0; e < k; ++e) {
      for (std::size_t c = 0; c < k; ++c) {
        lp[e * k + c] = -t.ego_pair(i, e, c);
        any = any || lp[e * k + c] != 0.0;
      }
    }
    if (any) mrf.add_edge(0, i, std::move(lp));
  }
  for (const auto& p : t.agent_pairs) {
    std::vector<double> lp(p.values.size());
    for (std::size_t x = 0; x < lp.size(); ++x) lp[x] = -p.values[x];
    mrf.add_edge(p.i, p.j, std::move(lp));
  }
  return mrf;
}

ConditionalMarginals enumerate_exact(const PairwiseMRF& mrf, double max_states) {
  mrf.validate();
  const std::size_t n = mrf.n_nodes, k = mrf.n_states;
  ConditionalMarginals out;
  out.n_nodes = n;
  out.n_states = k;
  out.iterations = 0;
  out.converged = true;
  if (n == 0) {
    out.log_partition = 0.0;
    return out;
  }
  const double total = std::pow(static_cast<double>(k), static_cast<double>(n));
  if (total > max_states) {
    throw CapacityError("exact enumeration over " + std::to_string(k) + "^" + std::to_string(n) +
                        " assignments exceeds the cap");
  }
  const auto count = static_cast<std::size_t>(std::llround(total));

  std::vector<std::size_t> x(n, 0);
  auto score = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += mrf.unary(i, x[i]);
    for (const auto& e : mrf.edges) s += e.log_potential[x[e.i] * k + x[e.j]];
    return s;
  };
  auto advance = [&]() {
    for (std::size_t i = n; i-- > 0;) {
      if (++x[i] < k) return;
      x[i] = 0;
    }
  };

  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < count; ++a, advance()) max_score = std::max(max_score, score());

  out.unary.assign(n * k, 0.0);
  out.pairwise.clear();
  for (const auto& e : mrf.edges) out.pairwise.push_back({e.i, e.j, std::vector<double>(k * k, 0.0)});
  double z = 0.0;
  std::fill(x.begin(), x.end(), 0);
  for (std::size_t a = 0; a < count; ++a, advance()) {
    const double w = std::exp(score() - max_score);
    z += w;
    for (std::size_t i = 0; i < n; ++i) out.unary[i * k + x[i]] += w;
    for (std::size_t e = 0; e < mrf.edges.size(); ++e) {
      out.pairwise[e].values[x[mrf.edges[e].i] * k + x[mrf.edges[e].j]] += w;
    }
  }
  for (double& v : out.unary) v /= z;
  for (auto& p : out.pairwise) {
    for (double& v : p.values) v /= z;
  }
  out.log_partition = max_score + std::log(z);
  return out;
}

// ---------------------------------------------------------------------------
// Loopy belief propagation

LbpTape::LbpTape(const PairwiseMRF& mrf, const LbpOptions& opts) : mrf_(mrf), opts_(opts) {
  opts_.validate();
  mrf_.validate();
  const std::size_t n = mrf_.n_nodes, k = mrf_.n_states;
  incoming_.assign(n, {});
  for (std::size_t e = 0; e < mrf_.edges.size(); ++e) {
    const auto& edge = mrf_.edges[e];
    incoming_[edge.j].push_back(directed_.size());
    directed_.push_back({edge.i, edge.j, e, true});
    incoming_[edge.i].push_back(directed_.size());
    directed_.push_back({edge.j, edge.i, e, false});
  }

  // Damping only stabilizes loops; on a forest undamped messages settle on
  // the exact fixed point after a diameter's worth of sweeps.
  std::vector<std::size_t> root(n);
  for (std::size_t i = 0; i < n; ++i) root[i] = i;
  auto find = [&](std::size_t i) {
    while (root[i] != i) i = root[i] = root[root[i]];
    return i;
  };
  bool forest = true;
  for (const auto& edge : mrf_.edges) {
    const std::size_t a = find(edge.i), b = find(edge.j);
    if (a == b) forest = false;
    root[a] = b;
  }
  damping_ = forest ? 0.0 : opts_.damping;

  const std::size_t msg_size = directed_.size() * k;
  history_.push_back(std::vector<double>(msg_size, 0.0));
  marginals_.n_nodes = n;
  marginals_.n_states = k;

  if (directed_.empty()) {
    marginals_.iterations = 1;
    marginals_.converged = true;
  } else {
    std::vector<double> h(k * k), raw(k), scratch(k), col(k);
    marginals_.converged = false;
    for (std::size_t it = 1; it <= opts_.max_iterations; ++it) {
      const std::vector<double>& old = history_.back();
      std::vector<double> next(msg_size);
      double delta = 0.0;
      for (std::size_t d = 0; d < directed_.size(); ++d) {
        const Directed& dm = directed_[d];
        incoming_sum(old, dm.from, dm.edge, scratch);
        for (std::size_t to = 0; to < k; ++to) {
          for (std::size_t from = 0; from < k; ++from) {
            col[from] = mrf_.unary(dm.from, from) + scratch[from] + pair_potential(dm.edge, dm.forward, from, to);
          }
          raw[to] = log_sum_exp(col);
        }
        std::span<double> out(next.data() + d * k, k);
        for (std::size_t s = 0; s < k; ++s) {
          out[s] = damping_ * old[d * k + s] + (1.0 - damping_) * raw[s];
        }
        const double lse = log_sum_exp(out);
        for (std::size_t s = 0; s < k; ++s) {
          out[s] -= lse;
          if (!std::isfinite(out[s])) throw NumericError("LBP produced a non-finite message");
          delta = std::max(delta, std::abs(out[s] - old[d * k + s]));
        }
      }
      history_.push_back(std::move(next));
      marginals_.iterations = it;
      if (delta < opts_.tolerance) {
        marginals_.converged = true;
        break;
      }
    }
  }

  // Beliefs from the final messages.
  const std::vector<double>& m = history_.back();
  marginals_.unary.assign(n * k, 0.0);
  std::vector<double> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < k; ++s) {
      z[s] = mrf_.unary(i, s);
      for (std::size_t d : incoming_[i]) z[s] += m[d * k + s];
    }
    softmax_inplace(z);
    std::copy(z.begin(), z.end(), marginals_.unary.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  std::vector<double> si(k), sj(k);
  for (std::size_t e = 0; e < mrf_.edges.size(); ++e) {
    const auto& edge = mrf_.edges[e];
    incoming_sum(m, edge.i, e, si);
    incoming_sum(m, edge.j, e, sj);
    std::vector<double> table(k * k);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        table[a * k + b] = mrf_.unary(edge.i, a) + si[a] + mrf_.unary(edge.j, b) + sj[b] +
                           edge.log_potential[a * k + b];
      }
    }
    softmax_inplace(table);
    marginals_.pairwise.push_back({edge.i, edge.j, std::move(table)});
  }
}

void LbpTape::incoming_sum(const std::vector<double>& messages, std::size_t node, std::size_t skip_edge,
                           std::span<double> out) const {
  const std::size_t k = mrf_.n_states;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t d : incoming_[node]) {
    if (directed_[d].edge == skip_edge) continue;
    for (std::size_t s = 0; s < k; ++s) out[s] += messages[d * k + s];
  }
}

double LbpTape::pair_potential(std::size_t edge, bool forward, std::size_t from_state,
                               std::size_t to_state) const {
  const std::size_t k = mrf_.n_states;
  const auto& lp = mrf_.edges[edge].log_potential;
  return forward ? lp[from_state * k + to_state] : lp[to_state * k + from_state];
}

namespace {

// Pulls a gradient on softmax(z) back onto z.
void softmax_backward(std::span<const double> p, std::span<const double> dp, std::span<double> dz) {
  double s = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) s += p[x] * dp[x];
  for (std::size_t x = 0; x < p.size(); ++x) dz[x] = p[x] * (dp[x] - s);
}

}  // namespace

std::vector<double> LbpTape::backward(std::span<const double> d_unary,
                                      const std::vector<std::vector<double>>& d_pairwise) const {
  const std::size_t n = mrf_.n_nodes, k = mrf_.n_states;
  if (d_unary.size() != n * k) throw ShapeError("LbpTape::backward: unary gradient has the wrong size");
  if (!d_pairwise.empty() && d_pairwise.size() != mrf_.edges.size()) {
    throw ShapeError("LbpTape::backward: pairwise gradient count differs from edge count");
  }
  std::vector<double> d_theta(n * k, 0.0);
  std::vector<double> d_msg(directed_.size() * k, 0.0);

  // Unary beliefs.
  std::vector<double> dz(k);
  for (std::size_t i = 0; i < n; ++i) {
    softmax_backward(marginals_.row(i), d_unary.subspan(i * k, k), dz);
    for (std::size_t s = 0; s < k; ++s) {
      d_theta[i * k + s] += dz[s];
      for (std::size_t d : incoming_[i]) d_msg[d * k + s] += dz[s];
    }
  }
  // Pairwise beliefs.
  if (!d_pairwise.empty()) {
    std::vector<double> dzz(k * k);
    for (std::size_t e = 0; e < mrf_.edges.size(); ++e) {
      if (d_pairwise[e].empty()) continue;
      const auto& edge = mrf_.edges[e];
      softmax_backward(marginals_.pairwise[e].values, d_pairwise[e], dzz);
      for (std::size_t a = 0; a < k; ++a) {
        double row = 0.0, column = 0.0;
        for (std::size_t b = 0; b < k; ++b) {
          row += dzz[a * k + b];
          column += dzz[b * k + a];
        }
        d_theta[edge.i * k + a] += row;
        d_theta[edge.j * k + a] += column;
        for (std::size_t d : incoming_[edge.i]) {
          if (directed_[d].edge != e) d_msg[d * k + a] += row;
        }
        for (std::size_t d : incoming_[edge.j]) {
          if (directed_[d].edge != e) d_msg[d * k + a] += column;
        }
      }
    }
  }

  // Reverse through the message updates.
  std::vector<double> u(k), du(k), raw(k), col(k), scratch(k), d_prev;
  std::vector<double> hcols(k * k);
  for (std::size_t it = history_.size() - 1; it >= 1; --it) {
    const std::vector<double>& old = history_[it - 1];
    d_prev.assign(d_msg.size(), 0.0);
    for (std::size_t d = 0; d < directed_.size(); ++d) {
      const Directed& dm = directed_[d];
      incoming_sum(old, dm.from, dm.edge, scratch);
      for (std::size_t to = 0; to < k; ++to) {
        for (std::size_t from = 0; from < k; ++from) {
          col[from] = mrf_.unary(dm.from, from) + scratch[from] + pair_potential(dm.edge, dm.forward, from, to);
        }
        raw[to] = log_sum_exp(col);
        for (std::size_t from = 0; from < k; ++from) hcols[to * k + from] = std::exp(col[from] - raw[to]);
      }
      for (std::size_t s = 0; s < k; ++s) u[s] = damping_ * old[d * k + s] + (1.0 - damping_) * raw[s];
      // new = u - lse(u): du = dnew - softmax(u) * sum(dnew)
      const double lse = log_sum_exp(u);
      double total = 0.0;
      for (std::size_t s = 0; s < k; ++s) total += d_msg[d * k + s];
      for (std::size_t s = 0; s < k; ++s) du[s] = d_msg[d * k + s] - std::exp(u[s] - lse) * total;

      for (std::size_t s = 0; s < k; ++s) d_prev[d * k + s] += damping_ * du[s];
      for (std::size_t from = 0; from < k; ++from) {
        double g = 0.0;
        for (std::size_t to = 0; to < k; ++to) g += (1.0 - damping_) * du[to] * hcols[to * k + from];
        d_theta[dm.from * k + from] += g;
        for (std::size_t d2 : incoming_[dm.from]) {
          if (directed_[d2].edge != dm.edge) d_prev[d2 * k + from] += g;
        }
      }
    }
    d_msg.swap(d_prev);
  }
  return d_theta;
}

ConditionalMarginals lbp_marginals(const PairwiseMRF& mrf, const LbpOptions& opts) {
  return LbpTape(mrf, opts).marginals();
}

std::vector<double> total_variation(const ConditionalMarginals& a, const ConditionalMarginals& b) {
  if (a.n_nodes != b.n_nodes || a.n_states != b.n_states) throw ShapeError("total_variation: shape mismatch");
  std::vector<double> tv(a.n_nodes, 0.0);
  for (std::size_t i = 0; i < a.n_nodes; ++i) {
    for (std::size_t s = 0; s < a.n_states; ++s) tv[i] += std::abs(a(i, s) - b(i, s));
    tv[i] *= 0.5;
  }
  return tv;
}

}  // namespace interplan
