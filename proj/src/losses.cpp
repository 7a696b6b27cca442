#include "interplan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "interplan/errors.hpp"

namespace interplan {

double smooth_l1(double diff, double beta) {
  const double a = std::abs(diff);
  return a < beta ? 0.5 * a * a / beta : a - 0.5 * beta;
}

double cross_entropy(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size()) throw ShapeError("cross_entropy: length mismatch");
  double h = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    h -= target[i] * std::log(pred[i]);
  }
  return h;
}

namespace {

void check_probability_rows(std::span<const double> rows, std::size_t width, const char* what) {
  if (width == 0 || rows.size() % width != 0) throw ShapeError(std::string(what) + ": bad row width");
  for (std::size_t r = 0; r < rows.size() / width; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double v = rows[r * width + c];
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + ": entry outside [0, 1]");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw DomainError(std::string(what) + ": row does not sum to 1");
  }
}

}  // namespace

void DetectionBatch::validate() const {
  if (class_target.size() != rows * classes || class_pred.size() != rows * classes) {
    throw ShapeError("detection batch: class tables must be rows x classes");
  }
  if (reg_target.size() != rows * kRegressionStates || reg_pred.size() != rows * kRegressionStates) {
    throw ShapeError("detection batch: regression tables must be rows x 8");
  }
  if (rows > 0) {
    check_probability_rows(class_target, classes, "class_target");
    check_probability_rows(class_pred, classes, "class_pred");
  }
}

double detection_class_loss(const DetectionBatch& b) {
  b.validate();
  double loss = 0.0;
  for (std::size_t r = 0; r < b.rows; ++r) {
    loss += cross_entropy(std::span(b.class_target).subspan(r * b.classes, b.classes),
                          std::span(b.class_pred).subspan(r * b.classes, b.classes));
  }
  return loss;
}

double detection_reg_loss(const DetectionBatch& b) {
  b.validate();
  double loss = 0.0;
  for (std::size_t x = 0; x < b.reg_target.size(); ++x) loss += smooth_l1(b.reg_target[x] - b.reg_pred[x]);
  return loss;
}

double distill_class_loss(std::span<const double> teacher, std::span<const double> student, std::size_t classes) {
  if (teacher.size() != student.size()) throw ShapeError("distill_class_loss: shape mismatch");
  if (teacher.empty()) return 0.0;
  check_probability_rows(teacher, classes, "teacher_pred");
  check_probability_rows(student, classes, "student_pred");
  double loss = 0.0;
  for (std::size_t r = 0; r < teacher.size() / classes; ++r) {
    loss += cross_entropy(teacher.subspan(r * classes, classes), student.subspan(r * classes, classes));
  }
  return loss;
}

double distill_reg_loss(std::span<const double> gt, std::span<const double> teacher,
                        std::span<const double> student) {
  if (gt.size() != teacher.size() || gt.size() != student.size()) {
    throw ShapeError("distill_reg_loss: shape mismatch");
  }
  double loss = 0.0;
  for (std::size_t x = 0; x < gt.size(); ++x) {
    if (std::abs(gt[x] - student[x]) > std::abs(gt[x] - teacher[x])) loss += smooth_l1(teacher[x] - student[x]);
  }
  return loss;
}

// ---------------------------------------------------------------------------

std::vector<bool> TrajectoryTargets::mask(std::size_t node) const {
  std::vector<bool> m(n_states, false);
  for (std::size_t i : near_sets[node]) m[i] = true;
  m[target_index[node]] = false;
  return m;
}

void TrajectoryTargets::validate() const {
  if (near_sets.size() != target_index.size() || nearest_index.size() != target_index.size()) {
    throw ShapeError("targets: per-node tables differ in length");
  }
  for (std::size_t node = 0; node < target_index.size(); ++node) {
    if (target_index[node] >= n_states) throw ShapeError("targets: target index out of range");
    const auto& u = near_sets[node];
    for (std::size_t i : u) {
      if (i >= n_states) throw ShapeError("targets: near-set index out of range");
    }
    const bool target_in_u = std::find(u.begin(), u.end(), target_index[node]) != u.end();
    if (target_in_u && target_index[node] != nearest_index[node]) {
      throw ConfigError("targets: node " + std::to_string(node) +
                        " has a target inside its near set that is not the nearest candidate");
    }
  }
}

TrajectoryTargets make_targets(std::span<const Trajectory> gt, std::span<const CandidateSet> sets,
                               double epsilon) {
  if (gt.size() != sets.size()) throw ShapeError("make_targets: one ground truth per candidate set");
  if (!(epsilon >= 0.0)) throw ConfigError("near-set epsilon must be >= 0");
  TrajectoryTargets t;
  t.n_states = sets.empty() ? 0 : sets.front().size();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    t.gt.push_back(gt[i]);
    t.near_sets.push_back(near_set(gt[i], sets[i], epsilon));
    t.nearest_index.push_back(nearest_candidate(gt[i], sets[i]));
    t.target_index.push_back(t.nearest_index.back());
  }
  return t;
}

namespace {

// -sum_k target_k log q_k with q the model row renormalized over the unmasked
// entries and the target row renormalized the same way. Adds dL/d(model) into
// `grad` when given.
double masked_ce(std::span<const double> target, std::span<const double> model, const std::vector<bool>& mask,
                 std::span<double> grad) {
  double model_mass = 0.0, target_mass = 0.0;
  for (std::size_t x = 0; x < model.size(); ++x) {
    if (mask[x]) continue;
    model_mass += model[x];
    target_mass += target[x];
  }
  if (!(target_mass > 0.0)) return 0.0;
  double loss = 0.0;
  for (std::size_t x = 0; x < model.size(); ++x) {
    if (mask[x] || target[x] == 0.0) continue;
    const double t = target[x] / target_mass;
    loss -= t * std::log(model[x] / model_mass);
    if (!grad.empty()) grad[x] -= t / model[x];
  }
  if (!grad.empty()) {
    // d/dp_x of log(model_mass) for every unmasked x (target weights sum to 1)
    for (std::size_t x = 0; x < model.size(); ++x) {
      if (!mask[x]) grad[x] += 1.0 / model_mass;
    }
  }
  return loss;
}

double planning_loss_impl(const ConditionalMarginals& model, const TrajectoryTargets& targets,
                          const ConditionalMarginals* soft, BeliefGradient* grad) {
  const std::size_t n = model.n_nodes, k = model.n_states;
  if (targets.target_index.size() != n || (n > 0 && targets.n_states != k)) {
    throw ShapeError("prediction_planning_loss: targets do not match the marginals");
  }
  targets.validate();
  if (soft && (soft->n_nodes != n || soft->n_states != k || soft->pairwise.size() != model.pairwise.size())) {
    throw ShapeError("prediction_planning_loss: soft targets do not match the marginals");
  }
  if (grad) {
    grad->unary.assign(n * k, 0.0);
    grad->pairwise.assign(model.pairwise.size(), std::vector<double>(k * k, 0.0));
  }
  std::vector<std::vector<bool>> masks(n), in_near(n, std::vector<bool>(k, false));
  for (std::size_t node = 0; node < n; ++node) {
    masks[node] = targets.mask(node);
    for (std::size_t i : targets.near_sets[node]) in_near[node][i] = true;
  }

  double loss = 0.0;
  std::vector<double> onehot(k);
  for (std::size_t node = 0; node < n; ++node) {
    std::span<const double> target;
    if (soft) {
      target = soft->row(node);
    } else {
      std::fill(onehot.begin(), onehot.end(), 0.0);
      onehot[targets.target_index[node]] = 1.0;
      target = onehot;
    }
    std::span<double> g = grad ? std::span<double>(grad->unary.data() + node * k, k) : std::span<double>{};
    loss += masked_ce(target, model.row(node), masks[node], g);
  }

  std::vector<double> onehot2(k * k);
  for (std::size_t e = 0; e < model.pairwise.size(); ++e) {
    const auto& table = model.pairwise[e];
    // Joint candidates are excluded when both coordinates lie in their near sets.
    const std::size_t ti = targets.target_index[table.i], tj = targets.target_index[table.j];
    std::vector<bool> mask(k * k, false);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        mask[a * k + b] = in_near[table.i][a] && in_near[table.j][b] && !(a == ti && b == tj);
      }
    }
    std::span<const double> target;
    if (soft) {
      target = soft->pairwise[e].values;
    } else {
      std::fill(onehot2.begin(), onehot2.end(), 0.0);
      onehot2[targets.target_index[table.i] * k + targets.target_index[table.j]] = 1.0;
      target = onehot2;
    }
    std::span<double> g = grad ? std::span<double>(grad->pairwise[e]) : std::span<double>{};
    loss += masked_ce(target, table.values, mask, g);
  }
  return loss;
}

}  // namespace

double prediction_planning_loss(const ConditionalMarginals& marginals, const TrajectoryTargets& targets,
                                BeliefGradient* grad) {
  return planning_loss_impl(marginals, targets, nullptr, grad);
}

double prediction_planning_loss(const ConditionalMarginals& model, const ConditionalMarginals& soft_targets,
                                const TrajectoryTargets& targets, BeliefGradient* grad) {
  return planning_loss_impl(model, targets, &soft_targets, grad);
}

double summed_distance(std::span<const Trajectory> gt, std::span<const CandidateSet> sets,
                       std::span<const std::size_t> selected) {
  if (gt.size() != sets.size() || selected.size() != sets.size()) {
    throw ShapeError("summed_distance: misaligned inputs");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (selected[i] >= sets[i].size()) throw std::out_of_range("summed_distance: selection out of range");
    d += trajectory_distance(gt[i], sets[i][selected[i]]);
  }
  return d;
}

double distill_plan_loss(std::span<const CandidateSet> sets, const TrajectoryTargets& targets,
                         const ModelOutput& teacher, const ModelOutput& student, BeliefGradient* grad) {
  if (teacher.marginals.n_nodes != student.marginals.n_nodes ||
      teacher.marginals.n_states != student.marginals.n_states ||
      teacher.marginals.pairwise.size() != student.marginals.pairwise.size()) {
    throw ShapeError("distill_plan_loss: teacher and student outputs are misaligned");
  }
  for (std::size_t e = 0; e < teacher.marginals.pairwise.size(); ++e) {
    if (teacher.marginals.pairwise[e].i != student.marginals.pairwise[e].i ||
        teacher.marginals.pairwise[e].j != student.marginals.pairwise[e].j) {
      throw ShapeError("distill_plan_loss: teacher and student edges differ");
    }
  }
  const double d_student = summed_distance(targets.gt, sets, student.selected);
  const double d_teacher = summed_distance(targets.gt, sets, teacher.selected);
  if (!(d_student > d_teacher)) {
    if (grad) {
      const std::size_t n = student.marginals.n_nodes, k = student.marginals.n_states;
      grad->unary.assign(n * k, 0.0);
      grad->pairwise.assign(student.marginals.pairwise.size(), std::vector<double>(k * k, 0.0));
    }
    return 0.0;
  }
  return prediction_planning_loss(student.marginals, teacher.marginals, targets, grad);
}

double distill_feature_loss(const FeatureEmbedding& teacher, const FeatureEmbedding& student) {
  if (teacher.values.size() != student.values.size()) {
    throw ShapeError("distill_feature_loss: embeddings differ in dimension");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < teacher.values.size(); ++i) loss += std::abs(teacher.values[i] - student.values[i]);
  return loss;
}

void LossWeights::validate() const {
  for (double v : {object, planning, distill, distill_object, distill_planning, distill_feature}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights (lambdas) must be non-negative");
  }
}

double teacher_loss(const LossWeights& lw, double object_loss, double planning_loss) {
  lw.validate();
  return lw.object * object_loss + lw.planning * planning_loss;
}

double distillation_loss(const LossWeights& lw, double distill_object, double distill_planning,
                         double distill_feature) {
  lw.validate();
  return lw.distill_object * distill_object + lw.distill_planning * distill_planning +
         lw.distill_feature * distill_feature;
}

double student_loss(const LossWeights& lw, double object_loss, double planning_loss, double distill_loss) {
  lw.validate();
  return lw.object * object_loss + lw.planning * planning_loss + lw.distill * distill_loss;
}

}  // namespace interplan
