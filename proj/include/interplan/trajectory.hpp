#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <limits>
#include <vector>

#include "interplan/geometry.hpp"

namespace interplan {

struct KinematicState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, (-pi, pi]
  double speed = 0.0;    // m/s, >= 0

  Vec2 position() const { return {x, y}; }
  bool operator==(const KinematicState&) const = default;
};

// Waypoints sampled every `dt` seconds, states[0] being the current state.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<KinematicState> states, double dt);

  std::span<const KinematicState> states() const { return states_; }
  const KinematicState& operator[](std::size_t i) const { return states_[i]; }
  const KinematicState& back() const { return states_.back(); }
  std::size_t size() const { return states_.size(); }
  double dt() const { return dt_; }
  double horizon() const { return dt_ * static_cast<double>(states_.size() - 1); }

  std::vector<Vec2> positions() const;

  bool operator==(const Trajectory&) const = default;

 private:
  std::vector<KinematicState> states_;
  double dt_ = 0.0;
};

enum class ManeuverFamily { straight, arc, spiral };

std::string_view to_string(ManeuverFamily family);
ManeuverFamily maneuver_family_from_string(std::string_view name);

// Control parameters of one candidate: constant longitudinal acceleration and
// curvature kappa(s) = curvature + curvature_rate * s over arclength s.
struct Maneuver {
  ManeuverFamily family = ManeuverFamily::straight;
  double acceleration = 0.0;
  double curvature = 0.0;
  double curvature_rate = 0.0;
};

struct SamplerProfile {
  std::vector<double> accelerations;
  std::vector<double> curvatures;
  std::vector<double> curvature_rates;
  std::vector<ManeuverFamily> families{ManeuverFamily::straight, ManeuverFamily::arc,
                                       ManeuverFamily::spiral};
  double dt = 0.5;
  double horizon = 4.0;
  std::size_t k = 12;
  std::size_t substeps = 4;
  // Curved candidates whose peak lateral acceleration v^2 |kappa| exceeds this
  // are dropped before pruning. Straight candidates are always kept.
  double max_lateral_accel = 4.0;
  // Curved candidates whose heading drifts more than this from the origin
  // heading at any waypoint are dropped too. Infinite by default.
  double max_heading_change = std::numeric_limits<double>::infinity();

  static SamplerProfile defaults();
  void validate() const;
  std::size_t steps() const;  // waypoint intervals per trajectory
};

struct CandidateSet {
  KinematicState origin;
  std::vector<Trajectory> candidates;
  std::vector<Maneuver> maneuvers;

  std::size_t size() const { return candidates.size(); }
  const Trajectory& operator[](std::size_t i) const { return candidates[i]; }
};

// Integrates the unicycle model under `maneuver` for `steps` intervals of
// `dt`, each split into `substeps` sub-steps. Arcs use the exact chord, spirals
// three-point Gauss-Legendre quadrature of the heading. Speed stops at 0.
Trajectory integrate_maneuver(const KinematicState& origin, const Maneuver& maneuver, double dt,
                              std::size_t steps, std::size_t substeps);

CandidateSet sample_candidates(const KinematicState& origin, const SamplerProfile& profile);

// Mean Euclidean distance between corresponding waypoints.
double trajectory_distance(const Trajectory& a, const Trajectory& b);

// Mean perpendicular distance from the waypoints to the route polyline.
double route_deviation(const Trajectory& t, const Polyline& route);

// Indices i with trajectory_distance(gt, set[i]) < epsilon.
std::vector<std::size_t> near_set(const Trajectory& gt, const CandidateSet& set, double epsilon);

std::size_t nearest_candidate(const Trajectory& gt, const CandidateSet& set);

}  // namespace interplan
