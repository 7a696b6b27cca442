#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "interplan/errors.hpp"
#include "interplan/learning.hpp"
#include "interplan/simworld.hpp"
#include "support.hpp"

using namespace interplan;
using namespace interplan::testing;

namespace {

// Ego alone with two candidates; the target is candidate `target`.
Scene logistic_scene(std::size_t target) {
  Scene s;
  s.id = "logistic";
  s.ctx.ego.history = {{0, 0, 0, 5}};
  s.ctx.route = straight_road(0.0);
  s.ctx.lanes = {{straight_road(0.0), 3.5}};
  s.sets = {sample_candidates(s.ctx.ego.current(), small_profile(2))};
  s.ground_truth = {s.sets[0][target]};
  return s;
}

// Two participants close enough to interact, three candidates each.
Scene interacting_scene() {
  Scene s;
  s.id = "pair";
  s.ctx.ego.history = {{0, 0, 0, 5}};
  s.ctx.route = straight_road(0.0);
  s.ctx.lanes = {{straight_road(0.0), 3.5}, {straight_road(3.5), 3.5}};
  AgentObservation a;
  a.history = {{12, 3.0, -0.05, 3}};
  s.ctx.agents.push_back(a);
  s.sets = sets_for(s.ctx, small_profile(3));
  s.ground_truth = {s.sets[0][1], s.sets[1][2]};
  return s;
}

EnergyWeights matching_teacher(const EnergyWeights& student) {
  EnergyWeights t = student;
  t.w.push_back(0.0);
  t.w.push_back(0.0);
  return t;
}

}  // namespace

TEST_CASE("one node, two candidates: the loss is a logistic loss") {
  const Scene scene = logistic_scene(1);
  const std::vector<Scene> scenes{scene};
  OptimizerOptions opts;
  opts.steps = 200;
  opts.step_size = 1e-3;
  const auto init = EnergyWeights::defaults();
  const auto fit = fit_weights(scenes, init, opts);

  for (std::size_t s = 1; s < fit.loss_history.size(); ++s) CHECK(fit.loss_history[s] <= fit.loss_history[s - 1]);

  // Closed form: -log sigma(E_other - E_target).
  auto closed = [&](const EnergyWeights& w) {
    const auto t = build_energy_tables(scene.ctx, scene.sets, w);
    const double e0 = t.agent(0, 0) + t.goal[0], e1 = t.agent(1, 0) + t.goal[1];
    return std::log1p(std::exp(-(e0 - e1)));
  };
  CHECK(fit.loss_history.front() == doctest::Approx(closed(init)).epsilon(1e-9));
  CHECK(fit.loss_history.back() == doctest::Approx(closed(fit.weights)).epsilon(1e-9));
  CHECK(fit.loss_history.back() < fit.loss_history.front());
}

TEST_CASE("analytic gradient agrees with central differences") {
  const std::vector<Scene> scenes{interacting_scene()};
  REQUIRE(targets_feasible(scenes[0]));
  const auto check = check_gradient(scenes, EnergyWeights::defaults(), OptimizerOptions{}, 1e-5);
  CHECK(check.max_relative_error < 1e-4);
  REQUIRE(check.analytic.size() == kBaseFeatureCount);
}

TEST_CASE("zero steps returns the initial weights") {
  const std::vector<Scene> scenes{interacting_scene()};
  OptimizerOptions opts;
  opts.steps = 0;
  const auto init = EnergyWeights::defaults();
  CHECK(fit_weights(scenes, init, opts).weights.w == init.w);
}

TEST_CASE("gradient descent on a quadratic") {
  // f(w) = sum (w_f - f)^2 with exact gradient; halving keeps it monotone.
  const Objective quad = [](const EnergyWeights& w) {
    LossAndGradient out;
    for (std::size_t f = 0; f < w.w.size(); ++f) {
      const double d = w.w[f] - static_cast<double>(f);
      out.loss += d * d;
      out.gradient.push_back(2.0 * d);
    }
    return out;
  };
  OptimizerOptions opts;
  opts.steps = 200;
  opts.step_size = 3.0;  // diverges at first; halving must recover
  opts.plateau_tolerance = 0.0;
  const auto fit = gradient_descent(quad, EnergyWeights::defaults(), opts);
  for (std::size_t f = 0; f < kBaseFeatureCount; ++f) CHECK(fit.weights.w[f] == doctest::Approx(f).epsilon(1e-6));
  for (std::size_t s = 1; s < fit.loss_history.size(); ++s) CHECK(fit.loss_history[s] <= fit.loss_history[s - 1]);
}

TEST_CASE("zero distillation weight reproduces the plain student") {
  const auto corpus = make_toy_corpus(3, 6);
  DistillOptions opts;
  opts.optimizer.steps = 15;
  opts.lambdas.distill = 0.0;
  const auto init = EnergyWeights::defaults();
  const auto teacher = EnergyWeights::privileged_defaults();
  const auto distilled = fit_student(corpus, init, teacher, opts);
  const auto plain = fit_weights(corpus, init, opts.optimizer);
  for (std::size_t f = 0; f < kBaseFeatureCount; ++f) {
    CHECK(distilled.weights.w[f] == doctest::Approx(plain.weights.w[f]).epsilon(1e-9));
  }
}

TEST_CASE("a teacher identical to the student contributes no distillation") {
  const auto corpus = make_toy_corpus(5, 6);
  const auto student = EnergyWeights::defaults();
  const auto terms = student_objective_terms(corpus, student, matching_teacher(student), DistillOptions{});
  CHECK(terms.distill_planning == 0.0);
  CHECK(terms.distill_feature == doctest::Approx(0.0).scale(1.0));
  CHECK(terms.total == doctest::Approx(terms.planning));
}

TEST_CASE("student objective gradient agrees with central differences") {
  const auto corpus = make_toy_corpus(9, 3);
  DistillOptions opts;
  opts.lambdas.distill_feature = 0.3;
  const auto student = EnergyWeights::defaults();
  const auto teacher = EnergyWeights::privileged_defaults();
  const auto at = student_objective(corpus, student, teacher, opts);
  for (std::size_t f = 0; f < kBaseFeatureCount; ++f) {
    auto p = student, q = student;
    p.w[f] += 1e-6;
    q.w[f] -= 1e-6;
    const double fd =
        (student_objective(corpus, p, teacher, opts).loss - student_objective(corpus, q, teacher, opts).loss) / 2e-6;
    CHECK(at.gradient[f] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
  CHECK_THROWS_AS(fit_student(corpus, student, student, opts), ConfigError);
}

TEST_CASE("corpus split") {
  const auto corpus = make_toy_corpus(1, 20);
  const auto a = split_corpus(corpus, 7, 0.25);
  const auto b = split_corpus(corpus, 7, 0.25);
  CHECK(a.heldout.size() == 5);
  CHECK(a.train.size() == 15);
  std::set<std::string> ids;
  for (const auto& s : a.train) ids.insert(s.id);
  for (const auto& s : a.heldout) CHECK(ids.insert(s.id).second);
  for (std::size_t i = 0; i < a.heldout.size(); ++i) CHECK(a.heldout[i].id == b.heldout[i].id);
}

TEST_CASE("colliding targets are not feasible") {
  Scene s = interacting_scene();
  s.ctx.agents[0].history = {{0, 0, 0, 5}};  // same place as the ego
  s.sets = sets_for(s.ctx, small_profile(3));
  s.ground_truth = {s.sets[0][0], s.sets[1][0]};
  CHECK_FALSE(targets_feasible(s));
  for (const auto& scene : make_toy_corpus(2, 10)) CHECK(targets_feasible(scene));
}

TEST_CASE("motion hints summarize the future") {
  const auto t = straight_line({0, 0}, 0.3, 4, 8);
  const auto h = motion_hint(t);
  CHECK(h.mean_speed == doctest::Approx(4.0));
  CHECK(h.heading_change == doctest::Approx(0.0));
}
