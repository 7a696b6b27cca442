#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "interplan/inference.hpp"
#include "interplan/trajectory.hpp"

namespace interplan {

inline constexpr std::size_t kRegressionStates = 8;

double smooth_l1(double diff, double beta = 1.0);

// Cross entropy H(target, pred) = -sum target * log(pred); 0 * log 0 = 0.
double cross_entropy(std::span<const double> target, std::span<const double> pred);

// M rows. Probability rows are C wide; regression rows hold 2 position
// offsets, width, height, sin/cos of heading, and 2 velocities.
struct DetectionBatch {
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<double> class_target;
  std::vector<double> class_pred;
  std::vector<double> reg_target;
  std::vector<double> reg_pred;

  void validate() const;
};

double detection_class_loss(const DetectionBatch& batch);
double detection_reg_loss(const DetectionBatch& batch);

// Teacher class distributions as soft targets for the student.
double distill_class_loss(std::span<const double> teacher_pred, std::span<const double> student_pred,
                          std::size_t classes);

// Smooth-L1 between teacher and student, counted only for states where the
// student's L1 error to the ground truth strictly exceeds the teacher's.
double distill_reg_loss(std::span<const double> gt, std::span<const double> teacher_pred,
                        std::span<const double> student_pred);

// Supervision for the prediction/planning loss, one entry per MRF node.
struct TrajectoryTargets {
  std::vector<Trajectory> gt;
  std::vector<std::vector<std::size_t>> near_sets;  // U(gt) per node
  std::vector<std::size_t> target_index;            // one-hot position per node
  std::vector<std::size_t> nearest_index;           // candidate closest to gt per node
  std::size_t n_states = 0;

  // Candidates excluded from the loss for this node: U(gt) minus the target.
  std::vector<bool> mask(std::size_t node) const;
  void validate() const;
};

TrajectoryTargets make_targets(std::span<const Trajectory> gt, std::span<const CandidateSet> sets,
                               double epsilon);

// Gradient of a loss with respect to unary and pairwise beliefs.
struct BeliefGradient {
  std::vector<double> unary;                  // N x K
  std::vector<std::vector<double>> pairwise;  // per edge, K x K
};

// Sum over nodes and edges of the cross entropy between one-hot targets and
// model marginals, with masked candidates removed and the rest renormalized.
double prediction_planning_loss(const ConditionalMarginals& marginals, const TrajectoryTargets& targets,
                                BeliefGradient* grad = nullptr);

// Same loss with soft target tables (e.g. a teacher's marginals) in place of
// the one-hot rows. `targets` supplies the masks.
double prediction_planning_loss(const ConditionalMarginals& model, const ConditionalMarginals& soft_targets,
                                const TrajectoryTargets& targets, BeliefGradient* grad = nullptr);

// Selected trajectory per node plus the marginal tables they came from.
struct ModelOutput {
  std::vector<std::size_t> selected;
  ConditionalMarginals marginals;
};

double summed_distance(std::span<const Trajectory> gt, std::span<const CandidateSet> sets,
                       std::span<const std::size_t> selected);

// Gated planning distillation: the soft-target loss against the teacher when
// the student's selections are strictly farther from the ground truth.
double distill_plan_loss(std::span<const CandidateSet> sets, const TrajectoryTargets& targets,
                         const ModelOutput& teacher, const ModelOutput& student,
                         BeliefGradient* grad = nullptr);

struct FeatureEmbedding {
  std::vector<double> values;
};

double distill_feature_loss(const FeatureEmbedding& teacher, const FeatureEmbedding& student);

struct LossWeights {
  double object = 1.0;        // lambda_O
  double planning = 1.0;      // lambda_P
  double distill = 1.0;       // lambda_D
  double distill_object = 1.0;    // lambda_DO
  double distill_planning = 1.0;  // lambda_DP
  double distill_feature = 1.0;   // lambda_DF

  void validate() const;
};

double teacher_loss(const LossWeights& lw, double object_loss, double planning_loss);
double distillation_loss(const LossWeights& lw, double distill_object, double distill_planning,
                         double distill_feature);
double student_loss(const LossWeights& lw, double object_loss, double planning_loss, double distill_loss);

}  // namespace interplan
