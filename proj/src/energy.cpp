#include "interplan/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "interplan/errors.hpp"

namespace interplan {

namespace {

constexpr std::array<std::string_view, kPrivilegedFeatureCount> kFeatureNames = {
    "lane_offset", "speed_deviation", "acceleration", "jerk", "curvature",
    "route_progress", "heading_alignment", "hint_speed", "hint_heading",
};

struct LaneQuery {
  double offset = 0.0;
  double heading = 0.0;
  bool found = false;
};

LaneQuery nearest_lane(const std::vector<Lane>& lanes, Vec2 p) {
  LaneQuery q;
  double best = std::numeric_limits<double>::infinity();
  for (const Lane& lane : lanes) {
    const auto proj = lane.centerline.project(p);
    if (proj.distance < best) {
      best = proj.distance;
      q = {proj.distance, proj.heading, true};
    }
  }
  return q;
}

const Polyline& progress_reference(std::size_t agent_index, const PlanningContext& ctx) {
  if (agent_index == 0 || ctx.lanes.empty()) return ctx.route;
  const Vec2 origin = ctx.participant(agent_index).current().position();
  const Lane* best = &ctx.lanes.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const Lane& lane : ctx.lanes) {
    const double d = lane.centerline.project(origin).distance;
    if (d < best_d) {
      best_d = d;
      best = &lane;
    }
  }
  return best->centerline;
}

}  // namespace

std::string_view feature_name(std::size_t index) {
  if (index >= kFeatureNames.size()) return "unknown";
  return kFeatureNames[index];
}

std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  return std::nullopt;
}

void PlanningContext::validate() const {
  if (ego.history.empty()) throw ConfigError("planning context has no ego state");
  for (const auto& a : agents) {
    if (a.history.empty()) throw ConfigError("planning context agent has no state");
  }
  if (route.empty()) throw ConfigError("planning context has no route");
  if (!(speed_limit >= 0.0)) throw ConfigError("speed limit must be non-negative");
}

void EnergyWeights::validate() const {
  if (w.size() != kBaseFeatureCount && w.size() != kPrivilegedFeatureCount) {
    throw ShapeError("energy weights must have " + std::to_string(kBaseFeatureCount) + " or " +
                     std::to_string(kPrivilegedFeatureCount) + " coefficients, got " +
                     std::to_string(w.size()));
  }
  for (double v : w) {
    if (!std::isfinite(v)) throw NumericError("energy weights contain a non-finite coefficient");
  }
  if (!(safety.collision_weight >= 0.0)) throw ConfigError("collision weight must be >= 0");
  if (!(safety.margin >= 0.0)) throw ConfigError("safety margin must be >= 0");
}

EnergyWeights EnergyWeights::defaults() {
  EnergyWeights e;
  e.w = {1.0, 0.4, 0.6, 0.1, 4.0, -0.1, 2.0};
  return e;
}

EnergyWeights EnergyWeights::privileged_defaults() {
  EnergyWeights e = defaults();
  e.w.push_back(0.5);
  e.w.push_back(2.0);
  return e;
}

std::vector<double> agent_features(const Trajectory& c, std::size_t agent_index,
                                   const PlanningContext& ctx, std::size_t feature_count) {
  if (feature_count != kBaseFeatureCount && feature_count != kPrivilegedFeatureCount) {
    throw ShapeError("unsupported feature count " + std::to_string(feature_count));
  }
  std::vector<double> phi(feature_count, 0.0);
  const std::size_t n = c.size();
  const double dt = c.dt();
  const auto& lanes = ctx.lanes;

  double lane_offset = 0.0, heading_err = 0.0, speed_dev = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& s = c[t];
    speed_dev += std::abs(s.speed - ctx.speed_limit);
    LaneQuery q = nearest_lane(lanes, s.position());
    if (!q.found) {
      const auto proj = ctx.route.project(s.position());
      q = {proj.distance, proj.heading, true};
    }
    lane_offset += q.offset;
    heading_err += std::abs(wrap_angle(s.heading - q.heading));
  }
  phi[0] = lane_offset / static_cast<double>(n);
  phi[1] = speed_dev / static_cast<double>(n);
  phi[6] = heading_err / static_cast<double>(n);

  if (n >= 2) {
    std::vector<double> accel(n - 1);
    double curv = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
      accel[t] = (c[t + 1].speed - c[t].speed) / dt;
      const double ds = distance(c[t].position(), c[t + 1].position());
      if (ds > 1e-6) curv += std::abs(wrap_angle(c[t + 1].heading - c[t].heading)) / ds;
    }
    double acc = 0.0;
    for (double a : accel) acc += std::abs(a);
    phi[2] = acc / static_cast<double>(accel.size());
    phi[4] = curv / static_cast<double>(n - 1);
    if (accel.size() >= 2) {
      double jerk = 0.0;
      for (std::size_t t = 0; t + 1 < accel.size(); ++t) jerk += std::abs(accel[t + 1] - accel[t]) / dt;
      phi[3] = jerk / static_cast<double>(accel.size() - 1);
    }
    const Polyline& ref = progress_reference(agent_index, ctx);
    phi[5] = ref.project(c.back().position()).arclength - ref.project(c[0].position()).arclength;
  }

  if (feature_count == kPrivilegedFeatureCount) {
    const auto& hint = ctx.participant(agent_index).hint;
    if (hint) {
      double mean_speed = 0.0;
      for (const auto& s : c.states()) mean_speed += s.speed;
      mean_speed /= static_cast<double>(n);
      phi[7] = std::abs(mean_speed - hint->mean_speed);
      phi[8] = std::abs(wrap_angle(c.back().heading - c[0].heading) - hint->heading_change);
    }
  }
  return phi;
}

namespace {

void check_sets(const PlanningContext& ctx, std::span<const CandidateSet> sets) {
  if (sets.size() != ctx.agent_count() + 1) {
    throw ShapeError("expected " + std::to_string(ctx.agent_count() + 1) + " candidate sets, got " +
                     std::to_string(sets.size()));
  }
  const std::size_t k = sets.front().size();
  if (k == 0) throw ShapeError("candidate sets must be non-empty");
  for (const auto& s : sets) {
    if (s.size() != k) throw ShapeError("all candidate sets must have the same size K");
  }
}

double dot_w(std::span<const double> phi, const std::vector<double>& w) {
  double e = 0.0;
  for (std::size_t f = 0; f < w.size(); ++f) e += w[f] * phi[f];
  return e;
}

}  // namespace

ScoreMatrix agent_energy(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                         const EnergyWeights& weights) {
  weights.validate();
  check_sets(ctx, sets);
  const std::size_t k = sets.front().size();
  ScoreMatrix m(k, sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const auto phi = agent_features(sets[i][c], i, ctx, weights.feature_count());
      m(c, i) = dot_w(phi, weights.w);
    }
  }
  return m;
}

std::vector<double> speeds_of(const Trajectory& t) {
  std::vector<double> v;
  v.reserve(t.size());
  for (const auto& s : t.states()) v.push_back(s.speed);
  return v;
}

double safety_energy(const Trajectory& a, const BoundingBox& box_a, const Trajectory& b,
                     const BoundingBox& box_b, std::span<const double> scale_speed,
                     const SafetyParams& params) {
  if (a.size() != b.size() || scale_speed.size() != a.size()) {
    throw ShapeError("safety_energy: trajectories and speeds must share the step count");
  }
  bool collided = false;
  double violation = 0.0;
  const double reach = box_a.half_diagonal() + box_b.half_diagonal() +
                       std::max(params.margin, 0.0);
  for (std::size_t t = 0; t < a.size(); ++t) {
    // Centers farther apart than this cannot bring the boxes within the margin.
    if ((a[t].position() - b[t].position()).norm() > reach) continue;
    const OrientedBox oa(a[t].position(), a[t].heading, box_a);
    const OrientedBox ob(b[t].position(), b[t].heading, box_b);
    const double signed_gap = box_gap(oa, ob);
    if (signed_gap <= 0.0) collided = true;
    const double short_by = params.margin - std::max(signed_gap, 0.0);
    if (short_by > 0.0) violation += scale_speed[t] * short_by * short_by;
  }
  return (collided ? params.collision_weight : 0.0) + violation;
}

double goal_energy(const Trajectory& tau0, const Polyline& route) {
  return route_deviation(tau0, route);
}

namespace {

Trajectory stationary(const StaticObstacle& o, std::size_t n, double dt) {
  KinematicState s = o.pose;
  s.speed = 0.0;
  return Trajectory(std::vector<KinematicState>(n, s), dt);
}

// Axis-aligned bounds of every candidate's position at each step.
struct Envelope {
  std::vector<Vec2> lo, hi;
};

Envelope envelope(const CandidateSet& set) {
  const std::size_t n = set[0].size();
  Envelope e{std::vector<Vec2>(n, {1e300, 1e300}), std::vector<Vec2>(n, {-1e300, -1e300})};
  for (const auto& c : set.candidates) {
    for (std::size_t t = 0; t < n; ++t) {
      e.lo[t] = {std::min(e.lo[t].x, c[t].x), std::min(e.lo[t].y, c[t].y)};
      e.hi[t] = {std::max(e.hi[t].x, c[t].x), std::max(e.hi[t].y, c[t].y)};
    }
  }
  return e;
}

// True when every candidate pair stays farther apart than `clearance` (center
// to center) at all steps, which makes the pairwise safety energy exactly 0.
bool envelopes_separated(const Envelope& a, const Envelope& b, double clearance) {
  for (std::size_t t = 0; t < a.lo.size(); ++t) {
    const double dx = std::max({0.0, a.lo[t].x - b.hi[t].x, b.lo[t].x - a.hi[t].x});
    const double dy = std::max({0.0, a.lo[t].y - b.hi[t].y, b.lo[t].y - a.hi[t].y});
    if (std::hypot(dx, dy) <= clearance) return false;
  }
  return true;
}

}  // namespace

EnergyTables build_energy_tables(const PlanningContext& ctx, std::span<const CandidateSet> sets,
                                 const EnergyWeights& weights) {
  weights.validate();
  ctx.validate();
  check_sets(ctx, sets);

  EnergyTables t;
  t.participants = sets.size();
  t.k = sets.front().size();
  t.feature_count = weights.feature_count();
  const std::size_t k = t.k;
  const std::size_t steps = sets.front()[0].size();
  const double dt = sets.front()[0].dt();
  for (const auto& s : sets) {
    for (const auto& c : s.candidates) {
      if (c.size() != steps) throw ShapeError("candidate trajectories must share the step count");
    }
  }

  t.features.resize(t.participants * k * t.feature_count);
  for (std::size_t i = 0; i < t.participants; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const auto phi = agent_features(sets[i][c], i, ctx, t.feature_count);
      std::copy(phi.begin(), phi.end(), t.features.begin() + static_cast<std::ptrdiff_t>((i * k + c) * t.feature_count));
    }
  }
  reweight(t, weights);

  t.goal.resize(k);
  for (std::size_t c = 0; c < k; ++c) t.goal[c] = goal_energy(sets[0][c], ctx.route);

  std::vector<Envelope> env;
  env.reserve(t.participants);
  for (const auto& s : sets) env.push_back(envelope(s));

  t.obstacle.assign(t.participants * k, 0.0);
  for (const auto& o : ctx.obstacles) {
    const Trajectory still = stationary(o, steps, dt);
    const Envelope point{std::vector<Vec2>(steps, o.pose.position()), std::vector<Vec2>(steps, o.pose.position())};
    for (std::size_t i = 0; i < t.participants; ++i) {
      const BoundingBox& box = ctx.participant(i).box;
      if (envelopes_separated(env[i], point, box.half_diagonal() + o.box.half_diagonal() + weights.safety.margin)) {
        continue;
      }
      for (std::size_t c = 0; c < k; ++c) {
        const auto v = speeds_of(sets[i][c]);
        t.obstacle[i * k + c] += safety_energy(sets[i][c], box, still, o.box, v, weights.safety);
      }
    }
  }

  auto clearance = [&](std::size_t i, std::size_t j) {
    return ctx.participant(i).box.half_diagonal() + ctx.participant(j).box.half_diagonal() +
           weights.safety.margin;
  };

  t.ego_safety.assign((t.participants - 1) * k * k, 0.0);
  for (std::size_t i = 1; i < t.participants; ++i) {
    if (envelopes_separated(env[0], env[i], clearance(0, i))) continue;
    for (std::size_t e = 0; e < k; ++e) {
      const auto v = speeds_of(sets[0][e]);
      for (std::size_t c = 0; c < k; ++c) {
        t.ego_safety[((i - 1) * k + e) * k + c] =
            safety_energy(sets[0][e], ctx.ego.box, sets[i][c], ctx.participant(i).box, v, weights.safety);
      }
    }
  }

  for (std::size_t i = 1; i < t.participants; ++i) {
    for (std::size_t j = i + 1; j < t.participants; ++j) {
      if (envelopes_separated(env[i], env[j], clearance(i, j))) continue;
      EnergyTables::PairTable table{i, j, std::vector<double>(k * k, 0.0)};
      bool any = false;
      for (std::size_t a = 0; a < k; ++a) {
        const auto v = speeds_of(sets[i][a]);
        for (std::size_t b = 0; b < k; ++b) {
          const double e = safety_energy(sets[i][a], ctx.participant(i).box, sets[j][b],
                                         ctx.participant(j).box, v, weights.safety);
          table.values[a * k + b] = e;
          any = any || e != 0.0;
        }
      }
      if (any) t.agent_pairs.push_back(std::move(table));
    }
  }
  return t;
}

void reweight(EnergyTables& t, const EnergyWeights& weights) {
  if (weights.feature_count() != t.feature_count) {
    throw ShapeError("reweight: feature count mismatch");
  }
  t.agent = ScoreMatrix(t.k, t.participants);
  for (std::size_t i = 0; i < t.participants; ++i) {
    for (std::size_t c = 0; c < t.k; ++c) t.agent(c, i) = dot_w(t.feature_row(i, c), weights.w);
  }
}

double joint_energy(std::span<const std::size_t> assignment, const PlanningContext& ctx,
                    std::span<const CandidateSet> sets, const EnergyWeights& weights) {
  check_sets(ctx, sets);
  if (assignment.size() != sets.size()) throw ShapeError("assignment length must be N+1");
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= sets[i].size()) {
      throw std::out_of_range("candidate index out of range for participant " + std::to_string(i));
    }
  }
  auto traj = [&](std::size_t i) -> const Trajectory& { return sets[i][assignment[i]]; };
  double e = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    e += dot_w(agent_features(traj(i), i, ctx, weights.feature_count()), weights.w);
    for (const auto& o : ctx.obstacles) {
      const Trajectory still = stationary(o, traj(i).size(), traj(i).dt());
      e += safety_energy(traj(i), ctx.participant(i).box, still, o.box, speeds_of(traj(i)), weights.safety);
    }
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      e += safety_energy(traj(i), ctx.participant(i).box, traj(j), ctx.participant(j).box,
                         speeds_of(traj(i)), weights.safety);
    }
  }
  e += goal_energy(traj(0), ctx.route);
  return e;
}

double joint_energy(std::span<const std::size_t> assignment, const EnergyTables& t) {
  if (assignment.size() != t.participants) throw ShapeError("assignment length must be N+1");
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= t.k) throw std::out_of_range("candidate index out of range");
  }
  double e = t.goal[assignment[0]];
  for (std::size_t i = 0; i < t.participants; ++i) {
    e += t.agent(assignment[i], i) + t.obstacle_energy(i, assignment[i]);
  }
  for (std::size_t i = 1; i < t.participants; ++i) e += t.ego_pair(i, assignment[0], assignment[i]);
  for (const auto& p : t.agent_pairs) e += p.values[assignment[p.i] * t.k + assignment[p.j]];
  return e;
}

}  // namespace interplan
