#include "rondo/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rondo/errors.hpp"
#include "rondo/image_io.hpp"

namespace rondo {

const char* to_string(Channel c) {
  switch (c) {
    case Channel::Obstacles: return "obstacles";
    case Channel::Path: return "path";
    case Channel::Navigable: return "navigable";
    case Channel::StopLine: return "stopline";
  }
  return "?";
}

int SemanticLayer::count() const { return std::accumulate(cells.begin(), cells.end(), 0); }

Point2 cell_center(const Pose& observer, int row, int col) {
  const double right = (col + 0.5) * kCellSize - 0.5 * kWindowMeters;
  const double fwd = 0.5 * kWindowMeters - (row + 0.5) * kCellSize;
  const Point2 p = observer.position;
  const Point2 d = observer.dir;
  return {p.x + fwd * d.x + right * d.y, p.y + fwd * d.y - right * d.x};
}

Point2 to_window(const Pose& observer, Point2 world) {
  const Point2 rel = world - observer.position;
  const Point2 d = observer.dir;
  return {rel.x * d.x + rel.y * d.y, rel.x * d.y - rel.y * d.x};
}

namespace {

struct CellRange {
  int r0 = 0, r1 = -1, c0 = 0, c1 = -1;
};

// Cells whose centres may fall within `margin` of the given world points.
CellRange cell_range(const Pose& observer, std::span<const Point2> pts, double margin) {
  double fmin = INFINITY, fmax = -INFINITY, rmin = INFINITY, rmax = -INFINITY;
  for (const Point2& p : pts) {
    const Point2 w = to_window(observer, p);
    fmin = std::min(fmin, w.x);
    fmax = std::max(fmax, w.x);
    rmin = std::min(rmin, w.y);
    rmax = std::max(rmax, w.y);
  }
  const double half = 0.5 * kWindowMeters;
  auto clamp_idx = [](double v) { return static_cast<int>(std::clamp(v, -1.0, static_cast<double>(kGridSize))); };
  CellRange r;
  r.c0 = std::max(0, clamp_idx(std::floor((rmin - margin + half) / kCellSize - 0.5)) - 1);
  r.c1 = std::min(kGridSize - 1, clamp_idx(std::ceil((rmax + margin + half) / kCellSize - 0.5)) + 1);
  r.r0 = std::max(0, clamp_idx(std::floor((half - fmax - margin) / kCellSize - 0.5)) - 1);
  r.r1 = std::min(kGridSize - 1, clamp_idx(std::ceil((half - fmin + margin) / kCellSize - 0.5)) + 1);
  return r;
}

template <typename Pred>
void fill(SemanticLayer& layer, const Pose& observer, const CellRange& range, Pred&& inside) {
  for (int r = range.r0; r <= range.r1; ++r) {
    for (int c = range.c0; c <= range.c1; ++c) {
      auto& cell = layer.cells[static_cast<std::size_t>(r * kGridSize + c)];
      if (!cell && inside(cell_center(observer, r, c))) cell = 1;
    }
  }
}

Box window_box(const Pose& observer) {
  const double h = 0.5 * kWindowMeters;
  const Point2 f = h * observer.dir;
  const Point2 l = h * perp(observer.dir);
  const Point2 p = observer.position;
  const Point2 corners[4] = {p + f + l, p + f - l, p - f + l, p - f - l};
  return bounding_box(corners);
}

}  // namespace

PerceivedVehicle perceive_exact(const AgentState& state, std::span<const PathPolyline> paths) {
  const Pose p = world_pose(state, paths);
  return {p.position, p.heading, p.dir, state.footprint, true};
}

bool rect_contains(const PerceivedVehicle& v, Point2 p) {
  const Point2 d = p - v.center;
  const double along = dot(d, v.dir);
  const double lateral = cross(v.dir, d);
  return std::abs(along) <= 0.5 * v.footprint.length && std::abs(lateral) <= 0.5 * v.footprint.width;
}

SemanticLayer rasterize_obstacles(const Pose& observer, std::span<const PerceivedVehicle> others) {
  SemanticLayer layer{Channel::Obstacles, {}};
  for (const PerceivedVehicle& v : others) {
    if (!v.detected) continue;
    const Point2 a = 0.5 * v.footprint.length * v.dir;
    const Point2 b = 0.5 * v.footprint.width * perp(v.dir);
    const Point2 corners[4] = {v.center + a + b, v.center + a - b, v.center - a + b, v.center - a - b};
    fill(layer, observer, cell_range(observer, corners, 0.0), [&](Point2 q) { return rect_contains(v, q); });
  }
  return layer;
}

SemanticLayer rasterize_path(const Pose& observer, std::span<const Point2> forward, double half_width) {
  SemanticLayer layer{Channel::Path, {}};
  if (forward.empty()) return layer;
  const Box win = window_box(observer);
  auto draw = [&](Point2 a, Point2 b) {
    const Point2 ends[2] = {a, b};
    const Box box = bounding_box(ends);
    const Box grown{{box.lo.x - half_width, box.lo.y - half_width}, {box.hi.x + half_width, box.hi.y + half_width}};
    if (!grown.intersects(win)) return;
    fill(layer, observer, cell_range(observer, ends, half_width),
         [&](Point2 q) { return point_segment_distance(q, a, b) <= half_width; });
  };
  if (forward.size() == 1) draw(forward[0], forward[0]);
  for (std::size_t i = 0; i + 1 < forward.size(); ++i) draw(forward[i], forward[i + 1]);
  return layer;
}

SemanticLayer rasterize_navigable(const Pose& observer, std::span<const Polygon> polygons) {
  SemanticLayer layer{Channel::Navigable, {}};
  const Box win = window_box(observer);
  for (const Polygon& poly : polygons) {
    if (!poly.box.intersects(win)) continue;
    fill(layer, observer, cell_range(observer, poly.points, 0.0),
         [&](Point2 q) { return poly.box.contains(q) && point_in_polygon(q, poly.points); });
  }
  return layer;
}

SemanticLayer rasterize_stopline(const Pose& observer, const Segment2& stop_line) {
  SemanticLayer layer{Channel::StopLine, {}};
  const Point2 ends[2] = {stop_line.a, stop_line.b};
  fill(layer, observer, cell_range(observer, ends, kStopLineHalfWidth),
       [&](Point2 q) { return point_segment_distance(q, stop_line.a, stop_line.b) <= kStopLineHalfWidth; });
  return layer;
}

std::vector<Point2> forward_points(const PathPolyline& path, double s, double dist) {
  const double len = path.length();
  if (!path.closed()) return path.slice(s, std::min(s + dist, len));
  dist = std::min(dist, len);
  std::vector<Point2> out = path.slice(s, std::min(s + dist, len));
  if (s + dist > len) {
    const std::vector<Point2> rest = path.slice(0.0, s + dist - len);
    out.insert(out.end(), rest.begin() + 1, rest.end());
  }
  return out;
}

std::vector<std::uint8_t> FrameStack::flatten() const {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(kFramesPerStack * channels() * kGridCells));
  for (const Frame& f : frames) {
    for (const SemanticLayer& l : f.layers) out.insert(out.end(), l.cells.begin(), l.cells.end());
  }
  return out;
}

FrameStack build_frame_stack(std::span<const Frame> history, int sample_interval) {
  if (history.empty()) throw ContractError("build_frame_stack needs at least one frame");
  if (sample_interval < 1) throw ContractError("sample_interval must be >= 1");
  FrameStack stack;
  stack.sample_interval = sample_interval;
  const auto newest = static_cast<std::ptrdiff_t>(history.size()) - 1;
  for (int k = 0; k < kFramesPerStack; ++k) {
    const std::ptrdiff_t back = static_cast<std::ptrdiff_t>(kFramesPerStack - 1 - k) * sample_interval;
    stack.frames[static_cast<std::size_t>(k)] = history[static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, newest - back))];
  }
  return stack;
}

NonVisualInput encode_nonvisual(const AgentState& observer, double goal_length) {
  NonVisualInput in;
  in.features = {observer.v / kSpeedScale, observer.target_speed / kSpeedScale, observer.aggressiveness};
  if (observer.role == AgentRole::Active) {
    for (int k = 0; k < kActionCount; ++k) {
      in.features.push_back(static_cast<int>(observer.last_command) == k ? 1.0 : 0.0);
    }
  } else {
    if (!(goal_length > 0.0)) throw DomainError("encode_nonvisual: goal length must be positive");
    const double remaining = std::max(observer.goal_s - observer.odometer, 0.0);
    in.features.push_back(std::clamp(remaining / goal_length, 0.0, 1.0));
  }
  return in;
}

std::string layer_filename(std::int64_t episode, std::int64_t step, Channel channel) {
  std::ostringstream os;
  os << episode << '_' << step << '_' << to_string(channel) << ".png";
  return os.str();
}

void write_layer_png(const SemanticLayer& layer, const std::filesystem::path& file) {
  std::vector<std::uint8_t> px(layer.cells.size());
  std::transform(layer.cells.begin(), layer.cells.end(), px.begin(), [](std::uint8_t c) { return c ? 255 : 0; });
  write_gray_png(file, kGridSize, kGridSize, px);
}

}  // namespace rondo
