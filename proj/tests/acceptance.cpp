// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "interplan/io.hpp"
#include "support.hpp"

using namespace interplan;
using namespace interplan::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kData = INTERPLAN_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. LBP is exact on trees and close on small loops.
Outcome inference_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst_tree = 0.0, worst_tv = 0.0;
  int over = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 5, k = 2 + rng() % 5;
    const auto m = random_mrf(rng, n, k, random_tree(rng, n), 3.0);
    const auto lbp = lbp_marginals(m);
    const auto exact = enumerate_exact(m);
    for (std::size_t x = 0; x < exact.unary.size(); ++x) {
      worst_tree = std::max(worst_tree, std::abs(lbp.unary[x] - exact.unary[x]));
    }
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {0, 2}};
    std::size_t n = 3;
    if (trial % 2) {  // square loop
      edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};
      n = 4;
    }
    const auto m = random_mrf(rng, n, k, edges, 2.0);
    double tv = 0.0;
    for (double d : total_variation(lbp_marginals(m), enumerate_exact(m))) tv = std::max(tv, d);
    worst_tv = std::max(worst_tv, tv);
    over += tv > 0.05;
  }
  const double secs = seconds_since(t0);
  return {worst_tree <= 1e-9 && worst_tv <= 0.05 && secs < 30.0,
          fmt("tree max |diff| %.2e (<= 1e-9), loop max TV %.4f (<= 0.05, %d/100 loops over), %.1f s (< 30)",
              worst_tree, worst_tv, over, secs)};
}

// 2. LBP planner agrees with the enumeration-backed cost.
Outcome planner_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2002);
  std::size_t agree = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 3, k = 2 + rng() % 3;
    PlanningContext ctx = toy_context(rng, n);
    for (auto& a : ctx.agents) {
      a.history = {{uniform(rng, 3, 16), uniform(rng, -0.5, 4), uniform(rng, -0.3, 0.3), uniform(rng, 2, 7)}};
    }
    const auto sets = sets_for(ctx, small_profile(k));
    const auto w = EnergyWeights::defaults();
    const auto costs = enumerated_costs(ctx, sets, w);
    const auto chosen = plan(ctx, sets, w, PlanningMode::interactive, {}).chosen_index;
    const std::size_t oracle = argmin_cost(costs);
    if (chosen == oracle) {
      ++agree;
      continue;
    }
    const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
    worst_gap = std::max(worst_gap, (costs[chosen] - costs[oracle]) / (*hi - *lo));
  }
  const double secs = seconds_since(t0);
  return {agree >= 48 && worst_gap < 0.01 && secs < 60.0,
          fmt("%zu/50 identical (>= 95%%), worst gap %.4f of range (< 0.01), %.1f s (< 60)", agree, worst_gap, secs)};
}

// 3. Analytic loss gradient vs central differences.
Outcome gradient_check() {
  double worst = 0.0;
  std::mt19937_64 rng(3003);
  for (std::uint64_t f = 0; f < 10; ++f) {
    const auto scenes = make_toy_corpus(100 + f, 2);
    EnergyWeights w = EnergyWeights::defaults();
    for (double& v : w.w) v *= uniform(rng, 0.5, 1.5);
    worst = std::max(worst, check_gradient(scenes, w, OptimizerOptions{}, 1e-5).max_relative_error);
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 10 fixtures (< 1e-4)", worst)};
}

// 4. Interactive planning beats the non-interactive baseline on the merge.
Outcome merge_direction() {
  const auto t0 = Clock::now();
  const RunConfig cfg = load_config(kData / "configs" / "dense_merge.json");
  std::vector<ScenarioConfig> configs = cfg.scenarios;
  for (auto& c : configs) c.seed = 0;
  const auto i = evaluate(configs, cfg.weights, PlanningMode::interactive, 100, cfg.sim, cfg.workers);
  const auto n = evaluate(configs, cfg.weights, PlanningMode::non_interactive, 100, cfg.sim, cfg.workers);
  const double secs = seconds_since(t0);
  const double margin = 100.0 * (i.success_rate - n.success_rate);
  return {margin >= 10.0 && i.right_lane_rate >= n.right_lane_rate && secs < 600.0,
          fmt("SR %.1f%% vs %.1f%% (+%.1f pp, >= 10), RL %.2f%% vs %.2f%%, %.0f s (< 600)", 100.0 * i.success_rate,
              100.0 * n.success_rate, margin, 100.0 * i.right_lane_rate, 100.0 * n.right_lane_rate, secs)};
}

// 5. Both distillation gates hold exhaustively on random fixtures.
Outcome distillation_gates() {
  std::mt19937_64 rng(5005);
  std::size_t violations = 0, reg_fired = 0, plan_fired = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Regression gate: only states where the student is strictly worse count.
    std::vector<double> gt(kRegressionStates), teacher(kRegressionStates), student(kRegressionStates);
    double expected = 0.0;
    bool all_gated = true;
    for (std::size_t x = 0; x < kRegressionStates; ++x) {
      gt[x] = uniform(rng, -2, 2);
      teacher[x] = gt[x] + uniform(rng, -1, 1);
      student[x] = (rng() % 4 == 0) ? gt[x] + (teacher[x] - gt[x]) * uniform(rng, -1, 1) : gt[x] + uniform(rng, -2, 2);
      if (std::abs(student[x] - gt[x]) > std::abs(teacher[x] - gt[x])) {
        expected += smooth_l1(teacher[x] - student[x]);
        all_gated = false;
      }
    }
    const double reg = distill_reg_loss(gt, teacher, student);
    if (all_gated ? reg != 0.0 : std::abs(reg - expected) > 1e-12) ++violations;
    reg_fired += all_gated ? 0 : 1;

    // Planning gate: zero unless the student's summed distance is strictly larger.
    const std::size_t nodes = 1 + rng() % 3, k = 2 + rng() % 3;
    std::vector<CandidateSet> sets(nodes);
    std::vector<Trajectory> gts;
    for (auto& s : sets) {
      for (std::size_t c = 0; c < k; ++c) s.candidates.push_back(straight_line({0, uniform(rng, -3, 3)}, 0, 5, 8));
      gts.push_back(straight_line({0, uniform(rng, -3, 3)}, 0, 5, 8));
    }
    const auto targets = make_targets(gts, sets, 0.0);
    auto random_output = [&]() {
      ModelOutput o;
      o.marginals.n_nodes = nodes;
      o.marginals.n_states = k;
      for (std::size_t i = 0; i < nodes; ++i) {
        double z = 0.0;
        std::vector<double> row(k);
        for (double& v : row) z += v = uniform(rng, 0.05, 1);
        for (double v : row) o.marginals.unary.push_back(v / z);
        o.selected.push_back(rng() % k);
      }
      return o;
    };
    const ModelOutput t = random_output(), s = random_output();
    const double d_s = summed_distance(gts, sets, s.selected), d_t = summed_distance(gts, sets, t.selected);
    const double lp = distill_plan_loss(sets, targets, t, s);
    if (d_s <= d_t ? lp != 0.0 : !(lp > 0.0)) ++violations;
    plan_fired += d_s > d_t ? 1 : 0;
  }
  return {violations == 0, fmt("%zu violations in 1000 fixtures (regression gate open in %zu, planning gate open in %zu)",
                               violations, reg_fired, plan_fired)};
}

// 6. Distillation helps the student on held-out scenes.
Outcome distillation_benefit() {
  const auto t0 = Clock::now();
  const RunConfig cfg = load_config(kData / "configs" / "distill.json");
  const auto corpus = make_toy_corpus(cfg.distill.corpus_seed, cfg.distill.scenes, cfg.sim.sampler);
  const DistillOptions opts{cfg.optimizer, cfg.lambdas};
  std::size_t wins = 0;
  for (std::size_t s = 0; s < cfg.distill.splits; ++s) {
    const auto split = split_corpus(corpus, cfg.seed + s, cfg.distill.heldout_fraction);
    const auto r = run_distillation(split.train, split.heldout, opts);
    wins += r.distilled_heldout <= r.plain_heldout ? 1 : 0;
  }
  return {wins >= 8, fmt("distilled <= undistilled held-out loss in %zu/%zu splits (>= 8), %.0f s", wins,
                         cfg.distill.splits, seconds_since(t0))};
}

// 7. Integrator and distance metric.
Outcome geometry() {
  double circle = 0.0;
  const auto arc = integrate_maneuver({0, 0, 0, 5}, {ManeuverFamily::arc, 0, 0.1, 0}, 0.5, 8, 4);
  for (const auto& s : arc.states()) circle = std::max(circle, std::abs(distance(s.position(), {0, 10}) - 10.0));
  const auto spiral = integrate_maneuver({0, 0, 0, 5}, {ManeuverFamily::spiral, 0, 0.0, 0.01}, 0.5, 8, 4);
  const auto ref = rk4_unicycle(5, 0, 0.0, 0.01, 4.0, 1000);
  const double endpoint = distance(spiral.back().position(), {ref[0], ref[1]});

  const auto sets = sample_candidates({0, 0, 0.2, 6}, SamplerProfile::defaults());
  bool exact = true;
  for (std::size_t a = 0; a < sets.size(); ++a) {
    exact = exact && trajectory_distance(sets[a], sets[a]) == 0.0;
    for (std::size_t b = 0; b < sets.size(); ++b) {
      exact = exact && trajectory_distance(sets[a], sets[b]) == trajectory_distance(sets[b], sets[a]);
    }
  }
  const auto base = straight_line({1, 1}, 0.4, 5, 8);
  std::vector<KinematicState> moved(base.states().begin(), base.states().end());
  for (auto& s : moved) {
    s.x += 3.0;
    s.y += 4.0;
  }
  exact = exact && trajectory_distance(base, Trajectory(moved, 0.5)) == 5.0;
  return {circle < 1e-6 && endpoint < 1e-3 && exact,
          fmt("arc residual %.1e m (< 1e-6), spiral endpoint %.1e m (< 1e-3), D identity/symmetry/translation %s",
              circle, endpoint, exact ? "exact" : "NOT exact")};
}

// 8. Byte-identical traces and planning time.
Outcome determinism_and_speed() {
  const RunConfig cfg = load_config(kData / "configs" / "dense_merge.json");
  const Scenario sc = cfg.scenarios.front().instantiate(0);
  auto text = [&]() {
    std::ostringstream os;
    write_trace(os, run_episode(sc, cfg.weights, PlanningMode::interactive, cfg.sim));
    return os.str();
  };
  const bool identical = text() == text();

  std::mt19937_64 rng(8008);
  PlanningContext ctx = toy_context(rng, 8);
  for (auto& a : ctx.agents) a.history = {{uniform(rng, -15, 30), 3.5 * (rng() % 2), 0, uniform(rng, 3, 8)}};
  const auto sets = sets_for(ctx, SamplerProfile::defaults());
  const auto w = EnergyWeights::defaults();
  const int reps = 10;
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) plan(ctx, sets, w, PlanningMode::interactive, {});
  const double ms = 1e3 * seconds_since(t0) / reps;
  return {identical && ms < 100.0,
          fmt("traces %s, interactive cycle %.1f ms at K = 12, N = 8 (< 100)",
              identical ? "byte-identical" : "DIFFER", ms)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"inference oracle equivalence", inference_oracle},
      {"planner oracle equivalence", planner_oracle},
      {"gradient correctness", gradient_check},
      {"interactive beats non-interactive on the merge", merge_direction},
      {"distillation gating", distillation_gates},
      {"distillation benefit direction", distillation_benefit},
      {"geometry suite", geometry},
      {"determinism and planning time", determinism_and_speed},
  };
  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", c + 1, criteria[c].first, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
