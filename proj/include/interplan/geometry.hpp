#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace interplan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

// Euclidean distance from p to the closed segment [a, b].
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Open polyline with at least two distinct vertices. Zero-length segments are
// tolerated and skipped during projection.
class Polyline {
 public:
  struct Projection {
    Vec2 point;            // closest point on the polyline
    double distance = 0;   // |p - point|
    double arclength = 0;  // arclength of `point` from the first vertex
    double heading = 0;    // tangent direction at `point`
    double signed_offset = 0;  // positive to the left of the tangent
  };

  Polyline() = default;
  explicit Polyline(std::vector<Vec2> vertices);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  bool empty() const { return vertices_.empty(); }

  Projection project(Vec2 p) const;
  Vec2 point_at(double arclength) const;
  double heading_at(double arclength) const;

 private:
  std::size_t segment_at(double arclength) const;

  std::vector<Vec2> vertices_;
  std::vector<double> cumulative_;
};

struct BoundingBox {
  double length = 4.5;
  double width = 1.9;

  double half_diagonal() const { return 0.5 * std::hypot(length, width); }
};

struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  OrientedBox() = default;
  OrientedBox(Vec2 c, double h, const BoundingBox& box)
      : center(c), heading(h), length(box.length), width(box.width) {}

  // Counter-clockwise, starting at front-left.
  std::array<Vec2, 4> corners() const;
};

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

// Boundary-to-boundary distance between two rectangles. Positive when the
// boxes are apart, zero when touching, and minus the smallest separating-axis
// penetration depth when they overlap.
double box_gap(const OrientedBox& a, const OrientedBox& b);

}  // namespace interplan
