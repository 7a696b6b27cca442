#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "interplan/energy.hpp"
#include "interplan/inference.hpp"
#include "interplan/losses.hpp"

namespace interplan {

// One logged scene: the context at some tick, candidates per participant
// (index 0 = ego) and what each participant actually did afterwards.
struct Scene {
  std::string id;
  PlanningContext ctx;
  std::vector<CandidateSet> sets;
  std::vector<Trajectory> ground_truth;
};

// False when the candidates nearest the ground truth overlap one another or a
// static obstacle; the model then gives the target zero probability.
bool targets_feasible(const Scene& scene);

// Fills every participant's MotionHint from its ground-truth future.
void attach_motion_hints(Scene& scene);
MotionHint motion_hint(const Trajectory& future);

struct OptimizerOptions {
  std::size_t steps = 100;
  double step_size = 1e-2;
  bool halve_on_increase = true;
  std::size_t max_halvings = 20;
  // Stop once the relative loss decrease of an accepted step is below this.
  double plateau_tolerance = 1e-9;
  double near_epsilon = 0.5;
  // Descend in coordinates where every feature has unit RMS over the
  // training candidates (a fixed diagonal rescaling of the step).
  bool standardize = false;
  LbpOptions lbp;
};

// Geometry-dependent tables and targets of a scene, reusable across weights.
class PreparedScene {
 public:
  PreparedScene(const Scene& scene, const EnergyWeights& reference, double near_epsilon);

  const Scene& scene() const { return *scene_; }
  const TrajectoryTargets& targets() const { return targets_; }
  const EnergyTables& tables() const { return tables_; }  // all nine features
  EnergyTables tables_for(const EnergyWeights& weights) const;

 private:
  const Scene* scene_;
  EnergyTables tables_;
  TrajectoryTargets targets_;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d w
};

// Prediction/planning loss of one scene under the joint distribution, with the
// exact gradient of the computed (LBP-based) loss.
LossAndGradient scene_loss(const PreparedScene& scene, const EnergyWeights& weights, const LbpOptions& lbp);

ModelOutput model_output(const PreparedScene& scene, const EnergyWeights& weights, const LbpOptions& lbp);

// Generic objective: value and gradient at the given weights.
using Objective = std::function<LossAndGradient(const EnergyWeights&)>;

struct FitResult {
  EnergyWeights weights;
  std::vector<double> loss_history;  // loss of init, then after each accepted step
};

// `scale`, when given, holds one positive factor per weight; the step on w_f is
// divided by scale_f^2.
FitResult gradient_descent(const Objective& objective, const EnergyWeights& init, const OptimizerOptions& opts,
                           std::span<const double> scale = {});

// Fits w on the summed prediction/planning loss.
FitResult fit_weights(std::span<const Scene> scenes, const EnergyWeights& init, const OptimizerOptions& opts);

// Summed loss over scenes (no gradient).
double corpus_loss(std::span<const Scene> scenes, const EnergyWeights& weights, const OptimizerOptions& opts);

// Largest relative error between the analytic gradient and central finite
// differences with step h, over all weight coordinates.
struct GradientCheck {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_relative_error = 0.0;
};
GradientCheck check_gradient(std::span<const Scene> scenes, const EnergyWeights& weights,
                             const OptimizerOptions& opts, double h = 1e-5);

// Student fitting with the distillation terms. `teacher` must be privileged
// and every scene must carry motion hints (only the teacher reads them).
struct DistillOptions {
  OptimizerOptions optimizer;
  LossWeights lambdas;
};

struct StudentObjectiveTerms {
  double planning = 0.0;
  double distill_planning = 0.0;
  double distill_feature = 0.0;
  double total = 0.0;
};

StudentObjectiveTerms student_objective_terms(std::span<const Scene> scenes, const EnergyWeights& student,
                                              const EnergyWeights& teacher, const DistillOptions& opts);

// Student objective value with its gradient (the objective fit_student descends).
LossAndGradient student_objective(std::span<const Scene> scenes, const EnergyWeights& student,
                                  const EnergyWeights& teacher, const DistillOptions& opts);
FitResult fit_student(std::span<const Scene> scenes, const EnergyWeights& init, const EnergyWeights& teacher,
                      const DistillOptions& opts);

// Centered agent energies of every participant (per-column mean removed),
// the representation student and teacher are compared on.
FeatureEmbedding energy_embedding(const EnergyTables& tables);

struct DistillReport {
  EnergyWeights teacher;
  EnergyWeights student_plain;
  EnergyWeights student_distilled;
  double teacher_heldout = 0.0;
  double plain_heldout = 0.0;
  double distilled_heldout = 0.0;
};

// Teacher, undistilled student and distilled student fitted on `train`,
// all scored with the plain prediction/planning loss on `heldout`.
DistillReport run_distillation(std::span<const Scene> train, std::span<const Scene> heldout,
                               const DistillOptions& opts);

struct CorpusSplit {
  std::vector<Scene> train;
  std::vector<Scene> heldout;
};

// Seeded shuffle, then the first round(fraction * n) scenes are held out
// (at least one on each side).
CorpusSplit split_corpus(std::span<const Scene> scenes, std::uint64_t seed, double heldout_fraction);

}  // namespace interplan
