#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace rondo {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double k, Point2 a) { return {k * a.x, k * a.y}; }
  friend Point2 operator*(Point2 a, double k) { return {k * a.x, k * a.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(b - a); }
// Counter-clockwise perpendicular.
inline Point2 perp(Point2 a) { return {-a.y, a.x}; }

double point_segment_distance(Point2 p, Point2 a, Point2 b);

// A location on a path plus its direction of travel. `dir` is the unit
// travel direction; `heading` is atan2(dir). Both are kept so rotations by
// multiples of 90 degrees stay exact downstream.
struct Pose {
  Point2 position;
  double heading = 0.0;
  Point2 dir{1.0, 0.0};
};

struct CubicBezier {
  Point2 p0, p1, p2, p3;
};

// de Casteljau evaluation. Throws DomainError when t is outside [0, 1].
Point2 bezier_point(const CubicBezier& b, double t);
// First derivative with respect to t.
Point2 bezier_derivative(const CubicBezier& b, double t);

class PathPolyline {
 public:
  // Throws DomainError for fewer than two vertices, non-finite coordinates
  // or zero total length.
  explicit PathPolyline(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const noexcept { return vertices_; }
  const std::vector<double>& cumulative_arclength() const noexcept { return cumulative_; }
  double length() const noexcept { return cumulative_.back(); }
  // True when the last vertex coincides with the first.
  bool closed() const noexcept { return closed_; }

  Pose pose_at(double s) const;
  // Index of the segment containing arclength s (segments of zero length are
  // skipped). s must already be inside [0, length()].
  std::size_t segment_at(double s) const;
  // Arclength of the point on the path closest to p.
  double project(Point2 p) const;
  // Vertices covering [s0, s1] (endpoints interpolated), s0 <= s1.
  std::vector<Point2> slice(double s0, double s1) const;

  friend bool operator==(const PathPolyline& a, const PathPolyline& b) {
    return a.vertices_ == b.vertices_;
  }

 private:
  std::vector<Point2> vertices_;
  std::vector<double> cumulative_;
  bool closed_ = false;
};

double path_length(const PathPolyline& p);
// Throws DomainError when s is outside [0, path_length(p)].
Pose pose_at_arclength(const PathPolyline& p, double s);

// Adaptive midpoint subdivision; each chord stays within max_chord_error of
// the curve (convex-hull bound on the control polygon of each piece).
PathPolyline flatten_bezier(const CubicBezier& b, double max_chord_error);

// Polyline approximation of a circular arc centred at `center`, sweeping
// from angle a0 to a1 (radians, sign gives the direction).
PathPolyline flatten_arc(Point2 center, double radius, double a0, double a1,
                         double max_chord_error);

// Joins b onto a; a's last vertex must coincide with b's first.
PathPolyline concat(const PathPolyline& a, const PathPolyline& b);

// l / l_max for paths of length l against the longest path l_max.
double normalization_factor(double l, double l_max);

inline constexpr double kDefaultChordError = 0.01;

// Simple polygon containment, even-odd rule. Points exactly on an edge may
// land on either side.
bool point_in_polygon(Point2 p, std::span<const Point2> polygon);

struct Box {
  Point2 lo, hi;
  bool contains(Point2 p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
  }
  bool intersects(const Box& o) const {
    return lo.x <= o.hi.x && o.lo.x <= hi.x && lo.y <= o.hi.y && o.lo.y <= hi.y;
  }
};

Box bounding_box(std::span<const Point2> pts);

}  // namespace rondo
