#include <cmath>
#include <random>

#include "doctest.h"
#include "interplan/errors.hpp"
#include "interplan/losses.hpp"
#include "support.hpp"

using namespace interplan;
using namespace interplan::testing;

namespace {

ConditionalMarginals one_node(std::vector<double> row) {
  ConditionalMarginals m;
  m.n_nodes = 1;
  m.n_states = row.size();
  m.unary = std::move(row);
  return m;
}

TrajectoryTargets one_node_targets(std::size_t k, std::size_t target, std::vector<std::size_t> near) {
  TrajectoryTargets t;
  t.gt = {straight_line({0, 0}, 0, 5, 8)};
  t.n_states = k;
  t.near_sets = {std::move(near)};
  t.target_index = {target};
  t.nearest_index = {target};
  return t;
}

DetectionBatch batch(std::vector<double> ct, std::vector<double> cp, std::size_t classes) {
  DetectionBatch b;
  b.classes = classes;
  b.rows = ct.size() / classes;
  b.class_target = std::move(ct);
  b.class_pred = std::move(cp);
  b.reg_target.assign(b.rows * kRegressionStates, 0.0);
  b.reg_pred = b.reg_target;
  return b;
}

}  // namespace

TEST_CASE("smooth L1 pieces") {
  CHECK(smooth_l1(0.0) == 0.0);
  CHECK(smooth_l1(0.5) == doctest::Approx(0.125));
  CHECK(smooth_l1(-1.5) == doctest::Approx(1.0));
  CHECK(smooth_l1(1.0) == doctest::Approx(0.5));
}

TEST_CASE("detection losses") {
  CHECK(detection_class_loss(batch({0, 1, 0}, {0, 1, 0}, 3)) == 0.0);
  CHECK(detection_class_loss(batch({1, 0}, {0.5, 0.5}, 2)) == doctest::Approx(0.6931).epsilon(1e-4));
  auto b = batch({1, 0}, {0.5, 0.5}, 2);
  CHECK(detection_reg_loss(b) == 0.0);
  b.reg_pred[3] = 3.0;
  CHECK(detection_reg_loss(b) == doctest::Approx(2.5));
  CHECK_THROWS_AS(detection_class_loss(batch({1, 0}, {0.7, 0.7}, 2)), DomainError);
  CHECK_THROWS_AS(detection_class_loss(batch({1, 0}, {1.2, -0.2}, 2)), DomainError);
}

TEST_CASE("distillation classification loss") {
  const std::vector<double> onehot{0, 1, 0};
  CHECK(distill_class_loss(onehot, onehot, 3) == 0.0);
  const std::vector<double> half{0.5, 0.5};
  CHECK(distill_class_loss(half, half, 2) == doctest::Approx(std::log(2.0)));
  std::mt19937_64 rng(12);
  std::vector<double> t(6), s(6);
  for (std::size_t r = 0; r < 2; ++r) {
    double st = 0, ss = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      st += t[r * 3 + c] = uniform(rng, 0.1, 1);
      ss += s[r * 3 + c] = uniform(rng, 0.1, 1);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      t[r * 3 + c] /= st;
      s[r * 3 + c] /= ss;
    }
  }
  double hand = 0.0;
  for (std::size_t x = 0; x < 6; ++x) hand -= t[x] * std::log(s[x]);
  CHECK(distill_class_loss(t, s, 3) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("distillation regression loss is gated per state") {
  const std::vector<double> gt{0, 0, 0, 0, 0, 0, 0, 0};
  std::vector<double> teacher{0.5, 1, 1, 1, 1, 1, 1, 1};
  CHECK(distill_reg_loss(gt, teacher, gt) == 0.0);
  CHECK(distill_reg_loss(gt, teacher, teacher) == 0.0);
  // state 0: student error 2.0 > teacher 0.5, |T - S| = 1.5; the rest have student == gt.
  std::vector<double> student(8, 0.0);
  student[0] = 2.0;
  CHECK(distill_reg_loss(gt, teacher, student) == doctest::Approx(1.0));
}

TEST_CASE("prediction/planning loss closed forms") {
  CHECK(prediction_planning_loss(one_node({0, 1, 0, 0}), one_node_targets(4, 1, {})) == 0.0);
  CHECK(prediction_planning_loss(one_node({0.25, 0.25, 0.25, 0.25}), one_node_targets(4, 2, {})) ==
        doctest::Approx(std::log(4.0)));
  // Candidate 1 is a near-duplicate of target 0 and is masked out.
  const double p_t = 0.5, p_m = 0.3;
  CHECK(prediction_planning_loss(one_node({p_t, p_m, 0.2}), one_node_targets(3, 0, {0, 1})) ==
        doctest::Approx(-std::log(p_t / (1.0 - p_m))).epsilon(1e-12));
}

TEST_CASE("target inside the near set must be the nearest candidate") {
  auto t = one_node_targets(3, 0, {0, 1});
  t.nearest_index = {1};
  CHECK_THROWS_AS(prediction_planning_loss(one_node({0.5, 0.3, 0.2}), t), ConfigError);
}

TEST_CASE("planning loss gradient matches finite differences") {
  std::mt19937_64 rng(8);
  ConditionalMarginals m;
  m.n_nodes = 2;
  m.n_states = 3;
  for (int i = 0; i < 6; ++i) m.unary.push_back(uniform(rng, 0.1, 1));
  m.pairwise.push_back({0, 1, {}});
  for (int i = 0; i < 9; ++i) m.pairwise[0].values.push_back(uniform(rng, 0.1, 1));
  TrajectoryTargets t;
  t.gt = {straight_line({0, 0}, 0, 5, 8), straight_line({0, 3}, 0, 5, 8)};
  t.n_states = 3;
  t.near_sets = {{1, 2}, {0}};
  t.target_index = {1, 2};
  t.nearest_index = {1, 0};
  BeliefGradient g;
  prediction_planning_loss(m, t, &g);
  for (std::size_t x = 0; x < 6; ++x) {
    auto p = m, q = m;
    p.unary[x] += 1e-6;
    q.unary[x] -= 1e-6;
    const double fd = (prediction_planning_loss(p, t) - prediction_planning_loss(q, t)) / 2e-6;
    CHECK(g.unary[x] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (std::size_t x = 0; x < 9; ++x) {
    auto p = m, q = m;
    p.pairwise[0].values[x] += 1e-6;
    q.pairwise[0].values[x] -= 1e-6;
    const double fd = (prediction_planning_loss(p, t) - prediction_planning_loss(q, t)) / 2e-6;
    CHECK(g.pairwise[0][x] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("planning distillation gate") {
  CandidateSet set;
  set.candidates = {straight_line({0, 0}, 0, 5, 8), straight_line({0, 1}, 0, 5, 8), straight_line({0, 4}, 0, 5, 8)};
  const std::vector<CandidateSet> sets{set};
  auto targets = one_node_targets(3, 0, {});
  targets.gt = {set[0]};
  const ModelOutput teacher{{0}, one_node({0.7, 0.2, 0.1})};
  const ModelOutput student{{2}, one_node({0.2, 0.3, 0.5})};
  const ModelOutput closer{{0}, one_node({0.2, 0.3, 0.5})};
  CHECK(distill_plan_loss(sets, targets, teacher, closer) == 0.0);  // equal distance, strict gate
  CHECK(distill_plan_loss(sets, targets, ModelOutput{{2}, teacher.marginals}, closer) == 0.0);
  const double hand = -(0.7 * std::log(0.2) + 0.2 * std::log(0.3) + 0.1 * std::log(0.5));
  CHECK(distill_plan_loss(sets, targets, teacher, student) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("feature distillation is an L1 distance") {
  CHECK(distill_feature_loss({{1, 2}}, {{1, 2}}) == 0.0);
  CHECK(distill_feature_loss({{1, 2}}, {{0, 0}}) == doctest::Approx(3.0));
  std::mt19937_64 rng(4);
  FeatureEmbedding a, b;
  double hand = 0.0;
  for (int i = 0; i < 10; ++i) {
    a.values.push_back(uniform(rng, -3, 3));
    b.values.push_back(uniform(rng, -3, 3));
    hand += std::abs(a.values.back() - b.values.back());
  }
  CHECK(distill_feature_loss(a, b) == doctest::Approx(hand).epsilon(1e-12));
  CHECK_THROWS_AS(distill_feature_loss({{1}}, {{1, 2}}), ShapeError);
}

TEST_CASE("weighted sums of loss terms") {
  LossWeights zero{0, 0, 0, 0, 0, 0};
  CHECK(teacher_loss(zero, 3.0, 4.0) == 0.0);
  CHECK(student_loss(zero, 3.0, 4.0, 5.0) == 0.0);
  LossWeights object_only{1, 0, 0, 0, 0, 0};
  CHECK(teacher_loss(object_only, 3.0, 4.0) == 3.0);
  LossWeights lw{0.5, 2.0, 0.25, 1.5, 3.0, 0.1};
  CHECK(teacher_loss(lw, 3.0, 4.0) == doctest::Approx(9.5));
  CHECK(distillation_loss(lw, 1.0, 2.0, 10.0) == doctest::Approx(8.5));
  CHECK(student_loss(lw, 3.0, 4.0, 8.0) == doctest::Approx(11.5));
  lw.distill_feature = -0.1;
  CHECK_THROWS_AS(student_loss(lw, 1, 1, 1), ConfigError);
}
