#include "interplan/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

#include "interplan/errors.hpp"

namespace interplan {

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle + std::numbers::pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - std::numbers::pi;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

Polyline::Polyline(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 2) {
    throw ConfigError("polyline needs at least two vertices");
  }
  cumulative_.reserve(vertices_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    cumulative_.push_back(cumulative_.back() + distance(vertices_[i - 1], vertices_[i]));
  }
  if (!(cumulative_.back() > 0.0)) {
    throw ConfigError("degenerate polyline: all vertices coincide");
  }
}

Polyline::Projection Polyline::project(Vec2 p) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < vertices_.size(); ++i) {
    const Vec2 a = vertices_[i];
    const Vec2 ab = vertices_[i + 1] - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) continue;
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    const Vec2 q = a + ab * t;
    const double d = distance(p, q);
    if (d < best.distance) {
      const double len = std::sqrt(len2);
      best.point = q;
      best.distance = d;
      best.arclength = cumulative_[i] + t * len;
      best.heading = std::atan2(ab.y, ab.x);
      best.signed_offset = cross(ab * (1.0 / len), p - q);
    }
  }
  return best;
}

std::size_t Polyline::segment_at(double arclength) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), arclength);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  i = std::min(i, vertices_.size() - 2);
  // skip zero-length segments
  while (i + 2 < vertices_.size() && cumulative_[i + 1] == cumulative_[i]) ++i;
  return i;
}

Vec2 Polyline::point_at(double arclength) const {
  const std::size_t i = segment_at(arclength);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const Vec2 dir = vertices_[i + 1] - vertices_[i];
  const double t = seg > 0.0 ? (arclength - cumulative_[i]) / seg : 0.0;
  return vertices_[i] + dir * t;
}

double Polyline::heading_at(double arclength) const {
  const std::size_t i = segment_at(arclength);
  const Vec2 dir = vertices_[i + 1] - vertices_[i];
  return std::atan2(dir.y, dir.x);
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 f{std::cos(heading), std::sin(heading)};
  const Vec2 l{-f.y, f.x};
  const Vec2 hf = f * (0.5 * length);
  const Vec2 hl = l * (0.5 * width);
  return {center + hf + hl, center - hf + hl, center - hf - hl, center + hf - hl};
}

namespace {

// Smallest overlap of the two boxes' projections over the four candidate
// separating axes; negative when some axis separates them.
double min_axis_overlap(const std::array<Vec2, 4>& ca, const std::array<Vec2, 4>& cb,
                        double heading_a, double heading_b) {
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(heading_a), std::sin(heading_a)},
      Vec2{-std::sin(heading_a), std::cos(heading_a)},
      Vec2{std::cos(heading_b), std::sin(heading_b)},
      Vec2{-std::sin(heading_b), std::cos(heading_b)},
  };
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& axis : axes) {
    double min_a = std::numeric_limits<double>::infinity(), max_a = -min_a;
    double min_b = min_a, max_b = -min_a;
    for (const Vec2& c : ca) {
      const double p = dot(c, axis);
      min_a = std::min(min_a, p);
      max_a = std::max(max_a, p);
    }
    for (const Vec2& c : cb) {
      const double p = dot(c, axis);
      min_b = std::min(min_b, p);
      max_b = std::max(max_b, p);
    }
    best = std::min(best, std::min(max_a, max_b) - std::max(min_a, min_b));
  }
  return best;
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  return min_axis_overlap(a.corners(), b.corners(), a.heading, b.heading) >= 0.0;
}

double box_gap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const double overlap = min_axis_overlap(ca, cb, a.heading, b.heading);
  if (overlap >= 0.0) return -overlap;
  // Disjoint convex polygons: the closest pair always involves a vertex.
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < 4; ++e) {
    const Vec2 a0 = ca[e], a1 = ca[(e + 1) % 4];
    const Vec2 b0 = cb[e], b1 = cb[(e + 1) % 4];
    for (std::size_t v = 0; v < 4; ++v) {
      best = std::min(best, point_segment_distance(cb[v], a0, a1));
      best = std::min(best, point_segment_distance(ca[v], b0, b1));
    }
  }
  return best;
}

}  // namespace interplan
