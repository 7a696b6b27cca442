#include "interplan/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "interplan/errors.hpp"

namespace interplan {

Trajectory::Trajectory(std::vector<KinematicState> states, double dt)
    : states_(std::move(states)), dt_(dt) {
  if (states_.empty()) throw ConfigError("trajectory must contain at least one state");
  if (!(dt_ > 0.0)) throw ConfigError("trajectory dt must be positive");
}

std::vector<Vec2> Trajectory::positions() const {
  std::vector<Vec2> out;
  out.reserve(states_.size());
  for (const auto& s : states_) out.push_back(s.position());
  return out;
}

std::string_view to_string(ManeuverFamily family) {
  switch (family) {
    case ManeuverFamily::straight: return "straight";
    case ManeuverFamily::arc: return "arc";
    case ManeuverFamily::spiral: return "spiral";
  }
  return "unknown";
}

ManeuverFamily maneuver_family_from_string(std::string_view name) {
  if (name == "straight") return ManeuverFamily::straight;
  if (name == "arc") return ManeuverFamily::arc;
  if (name == "spiral") return ManeuverFamily::spiral;
  throw ConfigError("unknown maneuver family '" + std::string(name) + "'");
}

SamplerProfile SamplerProfile::defaults() {
  SamplerProfile p;
  p.accelerations = {-4.0, -2.0, 0.0, 1.0, 2.0};
  p.curvatures = {0.0, 0.02, -0.02, 0.05, -0.05, 0.1, -0.1};
  p.curvature_rates = {0.005, -0.005, 0.01, -0.01};
  return p;
}

std::size_t SamplerProfile::steps() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

void SamplerProfile::validate() const {
  if (!(dt > 0.0)) throw ConfigError("sampler dt must be positive");
  if (!(horizon >= dt)) throw ConfigError("sampler horizon must be at least one dt");
  if (std::abs(horizon / dt - std::round(horizon / dt)) > 1e-9) {
    throw ConfigError("sampler horizon must be a multiple of dt");
  }
  if (k == 0) throw ConfigError("sampler K must be at least 1");
  if (substeps == 0) throw ConfigError("sampler substeps must be at least 1");
  if (families.empty()) throw ConfigError("sampler needs at least one maneuver family");
  if (accelerations.empty()) throw ConfigError("sampler acceleration grid is empty");
  for (ManeuverFamily f : families) {
    if (f != ManeuverFamily::straight && curvatures.empty()) {
      throw ConfigError("sampler curvature grid is empty");
    }
    if (f == ManeuverFamily::spiral && curvature_rates.empty()) {
      throw ConfigError("sampler curvature-rate grid is empty");
    }
  }
  if (!(max_lateral_accel > 0.0)) throw ConfigError("max_lateral_accel must be positive");
  if (!(max_heading_change > 0.0)) throw ConfigError("max_heading_change must be positive");
}

namespace {

double peak_heading_change(const Trajectory& t) {
  double peak = 0.0;
  for (const auto& s : t.states()) peak = std::max(peak, std::abs(wrap_angle(s.heading - t[0].heading)));
  return peak;
}

}  // namespace

Trajectory integrate_maneuver(const KinematicState& origin, const Maneuver& m, double dt,
                              std::size_t steps, std::size_t substeps) {
  std::vector<KinematicState> states;
  states.reserve(steps + 1);
  KinematicState s = origin;
  s.heading = wrap_angle(s.heading);
  s.speed = std::max(0.0, s.speed);
  states.push_back(s);

  const double h = dt / static_cast<double>(substeps);
  double heading = s.heading;  // unwrapped during integration
  double arclength = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t sub = 0; sub < substeps; ++sub) {
      // Exact longitudinal update with a stop at zero speed.
      double ds;
      double v_next = s.speed + m.acceleration * h;
      if (v_next < 0.0) {
        ds = m.acceleration < 0.0 ? s.speed * s.speed / (-2.0 * m.acceleration) : 0.0;
        v_next = 0.0;
      } else {
        ds = s.speed * h + 0.5 * m.acceleration * h * h;
      }
      // Heading is exact for affine curvature. Arcs advance along their exact
      // chord; spirals integrate (cos, sin) of the quadratic heading with
      // three-point Gauss-Legendre quadrature over the sub-step.
      const double k0 = m.curvature + m.curvature_rate * arclength;
      const double dtheta = k0 * ds + 0.5 * m.curvature_rate * ds * ds;
      if (m.curvature_rate == 0.0) {
        const double half = 0.5 * dtheta;
        const double chord = std::abs(half) < 1e-9 ? ds : ds * std::sin(half) / half;
        s.x += chord * std::cos(heading + half);
        s.y += chord * std::sin(heading + half);
      } else {
        static constexpr double nodes[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
        static constexpr double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
        for (int q = 0; q < 3; ++q) {
          const double u = 0.5 * ds * (1.0 + nodes[q]);
          const double th = heading + k0 * u + 0.5 * m.curvature_rate * u * u;
          s.x += 0.5 * ds * weights[q] * std::cos(th);
          s.y += 0.5 * ds * weights[q] * std::sin(th);
        }
      }
      heading += dtheta;
      arclength += ds;
      s.speed = v_next;
    }
    s.heading = wrap_angle(heading);
    states.push_back(s);
  }
  return Trajectory(std::move(states), dt);
}

namespace {

std::vector<Maneuver> lattice(const SamplerProfile& p) {
  std::vector<Maneuver> out;
  auto wants = [&](ManeuverFamily f) {
    return std::find(p.families.begin(), p.families.end(), f) != p.families.end();
  };
  if (wants(ManeuverFamily::straight)) {
    for (double a : p.accelerations) out.push_back({ManeuverFamily::straight, a, 0.0, 0.0});
  }
  if (wants(ManeuverFamily::arc)) {
    for (double a : p.accelerations) {
      for (double k : p.curvatures) {
        if (k != 0.0) out.push_back({ManeuverFamily::arc, a, k, 0.0});
      }
    }
  }
  if (wants(ManeuverFamily::spiral)) {
    for (double a : p.accelerations) {
      for (double k : p.curvatures) {
        for (double r : p.curvature_rates) {
          if (r != 0.0) out.push_back({ManeuverFamily::spiral, a, k, r});
        }
      }
    }
  }
  return out;
}

double peak_lateral_accel(const Trajectory& t, const Maneuver& m) {
  double arclength = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0) arclength += distance(t[i - 1].position(), t[i].position());
    const double kappa = m.curvature + m.curvature_rate * arclength;
    peak = std::max(peak, t[i].speed * t[i].speed * std::abs(kappa));
  }
  return peak;
}

bool same_positions(const Trajectory& a, const Trajectory& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (distance(a[i].position(), b[i].position()) > 1e-9 ||
        std::abs(a[i].speed - b[i].speed) > 1e-9) {
      return false;
    }
  }
  return true;
}

struct Pool {
  std::vector<Trajectory> trajectories;
  std::vector<Maneuver> maneuvers;

  bool add(Trajectory t, const Maneuver& m) {
    for (const auto& existing : trajectories) {
      if (same_positions(existing, t)) return false;
    }
    trajectories.push_back(std::move(t));
    maneuvers.push_back(m);
    return true;
  }
};

}  // namespace

CandidateSet sample_candidates(const KinematicState& origin, const SamplerProfile& profile) {
  profile.validate();
  const std::size_t steps = profile.steps();

  Pool pool;
  for (const Maneuver& m : lattice(profile)) {
    Trajectory t = integrate_maneuver(origin, m, profile.dt, steps, profile.substeps);
    if (m.family != ManeuverFamily::straight &&
        (peak_lateral_accel(t, m) > profile.max_lateral_accel ||
         peak_heading_change(t) > profile.max_heading_change)) {
      continue;
    }
    pool.add(std::move(t), m);
  }

  // Pad with straight candidates on a successively refined acceleration grid.
  if (pool.trajectories.size() < profile.k) {
    std::vector<double> grid = profile.accelerations;
    for (int round = 0; round < 8 && pool.trajectories.size() < profile.k; ++round) {
      std::sort(grid.begin(), grid.end());
      std::vector<double> refined;
      for (std::size_t i = 0; i + 1 < grid.size(); ++i) refined.push_back(0.5 * (grid[i] + grid[i + 1]));
      if (refined.empty()) refined = {grid.front() + 1.0};
      for (double a : refined) {
        if (pool.trajectories.size() >= profile.k) break;
        Maneuver m{ManeuverFamily::straight, a, 0.0, 0.0};
        pool.add(integrate_maneuver(origin, m, profile.dt, steps, profile.substeps), m);
      }
      grid.insert(grid.end(), refined.begin(), refined.end());
    }
    if (pool.trajectories.size() < profile.k) {
      throw ConfigError("sampler profile cannot produce " + std::to_string(profile.k) +
                        " distinct candidates from this origin");
    }
  }

  // Prune: every straight candidate first (lattice order), then greedy
  // farthest-point selection among the curved ones.
  const std::size_t n = pool.trajectories.size();
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < n && chosen.size() < profile.k; ++i) {
    if (pool.maneuvers[i].family == ManeuverFamily::straight) {
      taken[i] = true;
      chosen.push_back(i);
    }
  }
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  for (std::size_t c : chosen) {
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], trajectory_distance(pool.trajectories[i], pool.trajectories[c]));
    }
  }
  while (chosen.size() < profile.k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_dist[i] > min_dist[best]) best = i;
    }
    taken[best] = true;
    chosen.push_back(best);
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], trajectory_distance(pool.trajectories[i], pool.trajectories[best]));
    }
  }

  CandidateSet set;
  set.origin = pool.trajectories.front()[0];
  for (std::size_t c : chosen) {
    set.candidates.push_back(pool.trajectories[c]);
    set.maneuvers.push_back(pool.maneuvers[c]);
  }
  return set;
}

double trajectory_distance(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) {
    throw ShapeError("trajectory_distance: step counts differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  if (std::abs(a.dt() - b.dt()) > 1e-12) throw ShapeError("trajectory_distance: dt differs");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += distance(a[i].position(), b[i].position());
  return sum / static_cast<double>(a.size());
}

double route_deviation(const Trajectory& t, const Polyline& route) {
  if (route.empty()) throw ConfigError("route_deviation: empty route");
  double sum = 0.0;
  for (const auto& s : t.states()) sum += route.project(s.position()).distance;
  return sum / static_cast<double>(t.size());
}

std::vector<std::size_t> near_set(const Trajectory& gt, const CandidateSet& set, double epsilon) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (trajectory_distance(gt, set[i]) < epsilon) out.push_back(i);
  }
  return out;
}

std::size_t nearest_candidate(const Trajectory& gt, const CandidateSet& set) {
  if (set.size() == 0) throw ShapeError("nearest_candidate: empty candidate set");
  std::size_t best = 0;
  double best_d = trajectory_distance(gt, set[0]);
  for (std::size_t i = 1; i < set.size(); ++i) {
    const double d = trajectory_distance(gt, set[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace interplan
