#include "interplan/learning.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "interplan/errors.hpp"

namespace interplan {

bool targets_feasible(const Scene& scene) {
  if (scene.ground_truth.size() != scene.sets.size()) {
    throw ShapeError("scene '" + scene.id + "': one ground truth per candidate set");
  }
  std::vector<const Trajectory*> nearest;
  for (std::size_t i = 0; i < scene.sets.size(); ++i) {
    nearest.push_back(&scene.sets[i][nearest_candidate(scene.ground_truth[i], scene.sets[i])]);
  }
  const SafetyParams touch{1.0, 0.0};
  auto overlaps = [&](const Trajectory& a, const BoundingBox& ba, const Trajectory& b, const BoundingBox& bb) {
    const std::vector<double> zero(a.size(), 0.0);
    return safety_energy(a, ba, b, bb, zero, touch) > 0.0;
  };
  for (std::size_t i = 0; i < nearest.size(); ++i) {
    const BoundingBox& bi = scene.ctx.participant(i).box;
    for (std::size_t j = i + 1; j < nearest.size(); ++j) {
      if (overlaps(*nearest[i], bi, *nearest[j], scene.ctx.participant(j).box)) return false;
    }
    for (const auto& o : scene.ctx.obstacles) {
      KinematicState pose = o.pose;
      pose.speed = 0.0;
      const Trajectory still(std::vector<KinematicState>(nearest[i]->size(), pose), nearest[i]->dt());
      if (overlaps(*nearest[i], bi, still, o.box)) return false;
    }
  }
  return true;
}

MotionHint motion_hint(const Trajectory& future) {
  MotionHint h;
  for (const auto& s : future.states()) h.mean_speed += s.speed;
  h.mean_speed /= static_cast<double>(future.size());
  h.heading_change = wrap_angle(future.back().heading - future[0].heading);
  return h;
}

void attach_motion_hints(Scene& scene) {
  if (scene.ground_truth.size() != scene.ctx.agent_count() + 1) {
    throw ShapeError("scene " + scene.id + ": ground truth must cover every participant");
  }
  for (std::size_t i = 0; i < scene.ctx.agents.size(); ++i) {
    scene.ctx.agents[i].hint = motion_hint(scene.ground_truth[i + 1]);
  }
}

namespace {

EnergyTables restrict_features(EnergyTables t, std::size_t feature_count) {
  if (feature_count == t.feature_count) return t;
  if (feature_count > t.feature_count) throw ShapeError("cannot widen a feature table");
  std::vector<double> narrow;
  narrow.reserve(t.participants * t.k * feature_count);
  for (std::size_t r = 0; r < t.participants * t.k; ++r) {
    for (std::size_t f = 0; f < feature_count; ++f) narrow.push_back(t.features[r * t.feature_count + f]);
  }
  t.features = std::move(narrow);
  t.feature_count = feature_count;
  return t;
}

}  // namespace

PreparedScene::PreparedScene(const Scene& scene, const EnergyWeights& reference, double near_epsilon)
    : scene_(&scene) {
  EnergyWeights wide = EnergyWeights::privileged_defaults();
  wide.safety = reference.safety;
  tables_ = build_energy_tables(scene.ctx, scene.sets, wide);
  targets_ = make_targets(scene.ground_truth, scene.sets, near_epsilon);
}

EnergyTables PreparedScene::tables_for(const EnergyWeights& weights) const {
  weights.validate();
  EnergyTables t = restrict_features(tables_, weights.feature_count());
  reweight(t, weights);
  return t;
}

namespace {

// dL/dw from dL/d(log unary) of the joint MRF, where log unary = -E_a - ...
std::vector<double> weight_gradient(const EnergyTables& t, std::span<const double> d_theta) {
  std::vector<double> g(t.feature_count, 0.0);
  for (std::size_t i = 0; i < t.participants; ++i) {
    for (std::size_t c = 0; c < t.k; ++c) {
      const double d = d_theta[i * t.k + c];
      if (d == 0.0) continue;
      const auto phi = t.feature_row(i, c);
      for (std::size_t f = 0; f < t.feature_count; ++f) g[f] -= d * phi[f];
    }
  }
  return g;
}

void check_finite(double loss, const std::string& id) {
  if (!std::isfinite(loss)) throw NumericError("non-finite loss in scene '" + id + "'");
}

}  // namespace

LossAndGradient scene_loss(const PreparedScene& scene, const EnergyWeights& weights, const LbpOptions& lbp) {
  const EnergyTables t = scene.tables_for(weights);
  const LbpTape tape(build_joint_mrf(t), lbp);
  BeliefGradient bg;
  LossAndGradient out;
  out.loss = prediction_planning_loss(tape.marginals(), scene.targets(), &bg);
  check_finite(out.loss, scene.scene().id);
  out.gradient = weight_gradient(t, tape.backward(bg.unary, bg.pairwise));
  return out;
}

ModelOutput model_output(const PreparedScene& scene, const EnergyWeights& weights, const LbpOptions& lbp) {
  const EnergyTables t = scene.tables_for(weights);
  ModelOutput out;
  out.marginals = lbp_marginals(build_joint_mrf(t), lbp);
  for (std::size_t i = 0; i < out.marginals.n_nodes; ++i) out.selected.push_back(out.marginals.mode(i));
  return out;
}

FitResult gradient_descent(const Objective& objective, const EnergyWeights& init, const OptimizerOptions& opts,
                           std::span<const double> scale) {
  if (!(opts.step_size > 0.0)) throw ConfigError("optimizer step size must be positive");
  if (!scale.empty() && scale.size() != init.feature_count()) throw ShapeError("one scale per weight expected");
  FitResult result{init, {}};
  if (opts.steps == 0) return result;

  LossAndGradient current = objective(init);
  result.loss_history.push_back(current.loss);
  double step = opts.step_size;
  for (std::size_t s = 0; s < opts.steps; ++s) {
    bool accepted = false;
    EnergyWeights candidate = result.weights;
    LossAndGradient next;
    for (std::size_t h = 0; h <= opts.max_halvings; ++h) {
      for (std::size_t f = 0; f < candidate.w.size(); ++f) {
        const double precondition = scale.empty() ? 1.0 : 1.0 / (scale[f] * scale[f]);
        candidate.w[f] = result.weights.w[f] - step * precondition * current.gradient[f];
      }
      // A trial step may drive some target probability to zero; that counts as an increase.
      bool finite = true;
      try {
        next = objective(candidate);
      } catch (const NumericError&) {
        if (!opts.halve_on_increase) throw;
        finite = false;
      }
      if (finite && (!opts.halve_on_increase || next.loss <= current.loss)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double decrease = (current.loss - next.loss) / std::max(1.0, std::abs(current.loss));
    result.weights = candidate;
    current = std::move(next);
    result.loss_history.push_back(current.loss);
    if (opts.halve_on_increase && decrease < opts.plateau_tolerance) break;
  }
  return result;
}

namespace {

std::vector<PreparedScene> prepare(std::span<const Scene> scenes, const EnergyWeights& reference, double epsilon) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.emplace_back(s, reference, epsilon);
  return out;
}

// RMS of each feature over every candidate of every participant.
std::vector<double> feature_scale(const std::vector<PreparedScene>& prepared, std::size_t feature_count) {
  std::vector<double> sum(feature_count, 0.0);
  double rows = 0.0;
  for (const auto& p : prepared) {
    const EnergyTables& t = p.tables();
    for (std::size_t i = 0; i < t.participants; ++i) {
      for (std::size_t c = 0; c < t.k; ++c) {
        const auto phi = t.feature_row(i, c);
        for (std::size_t f = 0; f < feature_count; ++f) sum[f] += phi[f] * phi[f];
        rows += 1.0;
      }
    }
  }
  for (double& s : sum) {
    s = rows > 0.0 ? std::sqrt(s / rows) : 0.0;
    if (!(s > 1e-12)) s = 1.0;
  }
  return sum;
}

std::vector<double> scale_for(const std::vector<PreparedScene>& prepared, const EnergyWeights& w,
                              const OptimizerOptions& opts) {
  if (!opts.standardize) return {};
  return feature_scale(prepared, w.feature_count());
}

LossAndGradient summed(const std::vector<PreparedScene>& prepared, const EnergyWeights& w, const LbpOptions& lbp) {
  LossAndGradient total{0.0, std::vector<double>(w.feature_count(), 0.0)};
  for (const auto& p : prepared) {
    const auto r = scene_loss(p, w, lbp);
    total.loss += r.loss;
    for (std::size_t f = 0; f < total.gradient.size(); ++f) total.gradient[f] += r.gradient[f];
  }
  return total;
}

}  // namespace

FitResult fit_weights(std::span<const Scene> scenes, const EnergyWeights& init, const OptimizerOptions& opts) {
  init.validate();
  opts.lbp.validate();
  if (scenes.empty()) throw ConfigError("fit_weights: no scenes to fit");
  if (opts.steps == 0) return {init, {}};
  const auto prepared = prepare(scenes, init, opts.near_epsilon);
  return gradient_descent([&](const EnergyWeights& w) { return summed(prepared, w, opts.lbp); }, init, opts,
                          scale_for(prepared, init, opts));
}

double corpus_loss(std::span<const Scene> scenes, const EnergyWeights& weights, const OptimizerOptions& opts) {
  double total = 0.0;
  for (const auto& s : scenes) {
    const PreparedScene p(s, weights, opts.near_epsilon);
    const EnergyTables t = p.tables_for(weights);
    const double l = prediction_planning_loss(lbp_marginals(build_joint_mrf(t), opts.lbp), p.targets());
    check_finite(l, s.id);
    total += l;
  }
  return total;
}

GradientCheck check_gradient(std::span<const Scene> scenes, const EnergyWeights& weights,
                             const OptimizerOptions& opts, double h) {
  const auto prepared = prepare(scenes, weights, opts.near_epsilon);
  GradientCheck out;
  out.analytic = summed(prepared, weights, opts.lbp).gradient;
  for (std::size_t f = 0; f < weights.feature_count(); ++f) {
    EnergyWeights plus = weights, minus = weights;
    plus.w[f] += h;
    minus.w[f] -= h;
    const double lp = summed(prepared, plus, opts.lbp).loss;
    const double lm = summed(prepared, minus, opts.lbp).loss;
    out.numeric.push_back((lp - lm) / (2.0 * h));
    const double a = out.analytic[f], n = out.numeric.back();
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
    out.max_relative_error = std::max(out.max_relative_error, rel);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distillation

FeatureEmbedding energy_embedding(const EnergyTables& t) {
  FeatureEmbedding e;
  e.values.resize(t.participants * t.k);
  for (std::size_t i = 0; i < t.participants; ++i) {
    double mean = 0.0;
    for (std::size_t c = 0; c < t.k; ++c) mean += t.agent(c, i);
    mean /= static_cast<double>(t.k);
    for (std::size_t c = 0; c < t.k; ++c) e.values[i * t.k + c] = t.agent(c, i) - mean;
  }
  return e;
}

namespace {

struct TeacherView {
  ModelOutput output;
  FeatureEmbedding embedding;
};

struct StudentEval {
  StudentObjectiveTerms terms;
  std::vector<double> gradient;
};

StudentEval student_eval(const std::vector<PreparedScene>& prepared, const std::vector<TeacherView>& teacher,
                         const EnergyWeights& w, const DistillOptions& opts) {
  const LossWeights& lw = opts.lambdas;
  StudentEval out;
  out.gradient.assign(w.feature_count(), 0.0);
  for (std::size_t s = 0; s < prepared.size(); ++s) {
    const PreparedScene& p = prepared[s];
    const EnergyTables t = p.tables_for(w);
    const LbpTape tape(build_joint_mrf(t), opts.optimizer.lbp);
    const auto& marg = tape.marginals();

    BeliefGradient g_plan;
    const double plan = prediction_planning_loss(marg, p.targets(), &g_plan);
    check_finite(plan, p.scene().id);

    ModelOutput student{{}, marg};
    for (std::size_t i = 0; i < marg.n_nodes; ++i) student.selected.push_back(marg.mode(i));
    BeliefGradient g_dp;
    const double dp = distill_plan_loss(p.scene().sets, p.targets(), teacher[s].output, student, &g_dp);

    // Combine the belief gradients of the two marginal-based terms.
    const double cp = lw.planning, cdp = lw.distill * lw.distill_planning;
    BeliefGradient g = g_plan;
    for (std::size_t x = 0; x < g.unary.size(); ++x) g.unary[x] = cp * g_plan.unary[x] + cdp * g_dp.unary[x];
    for (std::size_t e = 0; e < g.pairwise.size(); ++e) {
      for (std::size_t x = 0; x < g.pairwise[e].size(); ++x) {
        g.pairwise[e][x] = cp * g_plan.pairwise[e][x] + cdp * g_dp.pairwise[e][x];
      }
    }
    const auto gw = weight_gradient(t, tape.backward(g.unary, g.pairwise));

    const FeatureEmbedding emb = energy_embedding(t);
    const double df = distill_feature_loss(teacher[s].embedding, emb);
    const double cdf = lw.distill * lw.distill_feature;
    std::vector<double> gf(w.feature_count(), 0.0);
    if (cdf != 0.0) {
      for (std::size_t i = 0; i < t.participants; ++i) {
        std::vector<double> sign(t.k);
        double mean_sign = 0.0;
        for (std::size_t c = 0; c < t.k; ++c) {
          const double d = emb.values[i * t.k + c] - teacher[s].embedding.values[i * t.k + c];
          sign[c] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          mean_sign += sign[c];
        }
        mean_sign /= static_cast<double>(t.k);
        for (std::size_t c = 0; c < t.k; ++c) {
          const auto phi = t.feature_row(i, c);
          for (std::size_t f = 0; f < w.feature_count(); ++f) gf[f] += (sign[c] - mean_sign) * phi[f];
        }
      }
    }

    out.terms.planning += plan;
    out.terms.distill_planning += dp;
    out.terms.distill_feature += df;
    for (std::size_t f = 0; f < w.feature_count(); ++f) out.gradient[f] += gw[f] + cdf * gf[f];
  }
  // No detector in this pipeline: the object and object-distillation terms are 0.
  const double ld = distillation_loss(lw, 0.0, out.terms.distill_planning, out.terms.distill_feature);
  out.terms.total = student_loss(lw, 0.0, out.terms.planning, ld);
  return out;
}

std::vector<TeacherView> teacher_views(const std::vector<PreparedScene>& prepared, const EnergyWeights& teacher,
                                       const LbpOptions& lbp) {
  if (!teacher.privileged()) throw ConfigError("teacher weights must include the privileged features");
  std::vector<TeacherView> out;
  for (const auto& p : prepared) {
    out.push_back({model_output(p, teacher, lbp), energy_embedding(p.tables_for(teacher))});
  }
  return out;
}

}  // namespace

StudentObjectiveTerms student_objective_terms(std::span<const Scene> scenes, const EnergyWeights& student,
                                              const EnergyWeights& teacher, const DistillOptions& opts) {
  opts.lambdas.validate();
  const auto prepared = prepare(scenes, student, opts.optimizer.near_epsilon);
  const auto views = teacher_views(prepared, teacher, opts.optimizer.lbp);
  return student_eval(prepared, views, student, opts).terms;
}

LossAndGradient student_objective(std::span<const Scene> scenes, const EnergyWeights& student,
                                  const EnergyWeights& teacher, const DistillOptions& opts) {
  opts.lambdas.validate();
  const auto prepared = prepare(scenes, student, opts.optimizer.near_epsilon);
  const auto views = teacher_views(prepared, teacher, opts.optimizer.lbp);
  auto e = student_eval(prepared, views, student, opts);
  return {e.terms.total, std::move(e.gradient)};
}

FitResult fit_student(std::span<const Scene> scenes, const EnergyWeights& init, const EnergyWeights& teacher,
                      const DistillOptions& opts) {
  init.validate();
  opts.lambdas.validate();
  if (scenes.empty()) throw ConfigError("fit_student: no scenes to fit");
  if (opts.optimizer.steps == 0) return {init, {}};
  const auto prepared = prepare(scenes, init, opts.optimizer.near_epsilon);
  const auto views = teacher_views(prepared, teacher, opts.optimizer.lbp);
  return gradient_descent(
      [&](const EnergyWeights& w) {
        auto e = student_eval(prepared, views, w, opts);
        return LossAndGradient{e.terms.total, std::move(e.gradient)};
      },
      init, opts.optimizer, scale_for(prepared, init, opts.optimizer));
}

DistillReport run_distillation(std::span<const Scene> train, std::span<const Scene> heldout,
                               const DistillOptions& opts) {
  DistillReport r;
  EnergyWeights teacher_init = EnergyWeights::privileged_defaults();
  EnergyWeights student_init = EnergyWeights::defaults();
  r.teacher = fit_weights(train, teacher_init, opts.optimizer).weights;
  r.student_plain = fit_weights(train, student_init, opts.optimizer).weights;
  r.student_distilled = fit_student(train, student_init, r.teacher, opts).weights;
  r.teacher_heldout = corpus_loss(heldout, r.teacher, opts.optimizer);
  r.plain_heldout = corpus_loss(heldout, r.student_plain, opts.optimizer);
  r.distilled_heldout = corpus_loss(heldout, r.student_distilled, opts.optimizer);
  return r;
}

CorpusSplit split_corpus(std::span<const Scene> scenes, std::uint64_t seed, double heldout_fraction) {
  if (scenes.size() < 2) throw ConfigError("a split needs at least two scenes");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) throw ConfigError("heldout fraction must be in (0, 1)");
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
  const auto n = static_cast<std::size_t>(std::lround(heldout_fraction * static_cast<double>(scenes.size())));
  const std::size_t held = std::clamp<std::size_t>(n, 1, scenes.size() - 1);
  CorpusSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < held ? split.heldout : split.train).push_back(scenes[order[i]]);
  }
  return split;
}

}  // namespace interplan
