#include "rondo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rondo/errors.hpp"

namespace rondo {

namespace {

Point2 lerp(Point2 a, Point2 b, double t) {
  // (1-t)a + tb returns a at t=0 and b at t=1 exactly.
  return {(1.0 - t) * a.x + t * b.x, (1.0 - t) * a.y + t * b.y};
}

struct Split {
  CubicBezier left, right;
};

Split subdivide(const CubicBezier& b) {
  const Point2 ab = lerp(b.p0, b.p1, 0.5);
  const Point2 bc = lerp(b.p1, b.p2, 0.5);
  const Point2 cd = lerp(b.p2, b.p3, 0.5);
  const Point2 abc = lerp(ab, bc, 0.5);
  const Point2 bcd = lerp(bc, cd, 0.5);
  const Point2 mid = lerp(abc, bcd, 0.5);
  return {{b.p0, ab, abc, mid}, {mid, bcd, cd, b.p3}};
}

double hull_deviation(const CubicBezier& b) {
  return std::max(point_segment_distance(b.p1, b.p0, b.p3),
                  point_segment_distance(b.p2, b.p0, b.p3));
}

void flatten_into(const CubicBezier& b, double tol, int depth, std::vector<Point2>& out) {
  if (depth >= 30 || hull_deviation(b) <= tol) {
    out.push_back(b.p3);
    return;
  }
  const Split s = subdivide(b);
  flatten_into(s.left, tol, depth + 1, out);
  flatten_into(s.right, tol, depth + 1, out);
}

}  // namespace

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

Point2 bezier_point(const CubicBezier& b, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("bezier_point: t=" + std::to_string(t) + " outside [0, 1]");
  }
  const Point2 ab = lerp(b.p0, b.p1, t);
  const Point2 bc = lerp(b.p1, b.p2, t);
  const Point2 cd = lerp(b.p2, b.p3, t);
  return lerp(lerp(ab, bc, t), lerp(bc, cd, t), t);
}

Point2 bezier_derivative(const CubicBezier& b, double t) {
  const double u = 1.0 - t;
  return 3.0 * u * u * (b.p1 - b.p0) + 6.0 * u * t * (b.p2 - b.p1) + 3.0 * t * t * (b.p3 - b.p2);
}

PathPolyline::PathPolyline(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 2) {
    throw DomainError("path needs at least 2 vertices, got " + std::to_string(vertices_.size()));
  }
  cumulative_.reserve(vertices_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (!std::isfinite(vertices_[i].x) || !std::isfinite(vertices_[i].y)) {
      throw DomainError("path vertex " + std::to_string(i) + " is not finite");
    }
    if (i > 0) cumulative_.push_back(cumulative_.back() + distance(vertices_[i - 1], vertices_[i]));
  }
  if (!(cumulative_.back() > 0.0)) throw DomainError("path has zero total length");
  closed_ = distance(vertices_.front(), vertices_.back()) <= 1e-9;
}

std::size_t PathPolyline::segment_at(double s) const {
  // First vertex strictly past s; the segment before it contains s.
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t seg = it == cumulative_.end() ? cumulative_.size() - 2
                                            : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  seg = std::min(seg, cumulative_.size() - 2);
  // Step back over trailing zero-length segments (only possible at the end).
  while (seg > 0 && cumulative_[seg + 1] == cumulative_[seg]) --seg;
  return seg;
}

Pose PathPolyline::pose_at(double s) const {
  if (!(s >= 0.0 && s <= length())) {
    throw DomainError("arclength " + std::to_string(s) + " outside [0, " + std::to_string(length()) + "]");
  }
  const std::size_t seg = segment_at(s);
  const Point2 a = vertices_[seg];
  const Point2 b = vertices_[seg + 1];
  const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
  const double t = std::clamp((s - cumulative_[seg]) / seg_len, 0.0, 1.0);
  const Point2 dir = (1.0 / seg_len) * (b - a);
  return Pose{lerp(a, b, t), std::atan2(dir.y, dir.x), dir};
}

double PathPolyline::project(Point2 p) const {
  double best_d = INFINITY;
  double best_s = 0.0;
  for (std::size_t i = 0; i + 1 < vertices_.size(); ++i) {
    const Point2 a = vertices_[i];
    const Point2 ab = vertices_[i + 1] - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) continue;
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    const double d = distance(p, a + t * ab);
    if (d < best_d) {
      best_d = d;
      best_s = cumulative_[i] + t * (cumulative_[i + 1] - cumulative_[i]);
    }
  }
  return best_s;
}

std::vector<Point2> PathPolyline::slice(double s0, double s1) const {
  s0 = std::clamp(s0, 0.0, length());
  s1 = std::clamp(s1, s0, length());
  std::vector<Point2> out;
  out.push_back(pose_at(s0).position);
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (cumulative_[i] > s0 && cumulative_[i] < s1) out.push_back(vertices_[i]);
  }
  out.push_back(pose_at(s1).position);
  return out;
}

double path_length(const PathPolyline& p) { return p.length(); }

Pose pose_at_arclength(const PathPolyline& p, double s) { return p.pose_at(s); }

PathPolyline flatten_bezier(const CubicBezier& b, double max_chord_error) {
  if (!(max_chord_error > 0.0)) throw DomainError("max_chord_error must be positive");
  std::vector<Point2> pts{b.p0};
  flatten_into(b, max_chord_error, 0, pts);
  return PathPolyline(std::move(pts));
}

PathPolyline flatten_arc(Point2 center, double radius, double a0, double a1, double max_chord_error) {
  if (!(radius > 0.0) || !(max_chord_error > 0.0)) throw DomainError("flatten_arc: bad radius or tolerance");
  const double sweep = a1 - a0;
  // Sagitta of a chord subtending angle d is r(1 - cos(d/2)).
  const double max_step = 2.0 * std::acos(std::max(-1.0, 1.0 - max_chord_error / radius));
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(sweep) / max_step)));
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + sweep * static_cast<double>(i) / n;
    pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  if (std::abs(std::abs(sweep) - 2.0 * M_PI) < 1e-12) pts.back() = pts.front();
  return PathPolyline(std::move(pts));
}

PathPolyline concat(const PathPolyline& a, const PathPolyline& b) {
  if (distance(a.vertices().back(), b.vertices().front()) > 1e-9) {
    throw DomainError("concat: paths do not meet");
  }
  std::vector<Point2> pts = a.vertices();
  pts.insert(pts.end(), b.vertices().begin() + 1, b.vertices().end());
  return PathPolyline(std::move(pts));
}

double normalization_factor(double l, double l_max) {
  if (!(l > 0.0) || !(l_max > 0.0) || l > l_max) {
    throw DomainError("normalization_factor needs 0 < l <= l_max (l=" + std::to_string(l) +
                      ", l_max=" + std::to_string(l_max) + ")");
  }
  return l / l_max;
}

bool point_in_polygon(Point2 p, std::span<const Point2> poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = poly[i];
    const Point2 b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Box bounding_box(std::span<const Point2> pts) {
  Box b{{INFINITY, INFINITY}, {-INFINITY, -INFINITY}};
  for (const Point2& p : pts) {
    b.lo.x = std::min(b.lo.x, p.x);
    b.lo.y = std::min(b.lo.y, p.y);
    b.hi.x = std::max(b.hi.x, p.x);
    b.hi.y = std::max(b.hi.y, p.y);
  }
  return b;
}

}  // namespace rondo
