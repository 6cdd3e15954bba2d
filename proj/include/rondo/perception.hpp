#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rondo/geometry.hpp"
#include "rondo/sim.hpp"
#include "rondo/track_map.hpp"

namespace rondo {

inline constexpr int kGridSize = 84;
inline constexpr int kGridCells = kGridSize * kGridSize;
inline constexpr double kWindowMeters = 50.0;
inline constexpr double kCellSize = kWindowMeters / kGridSize;
inline constexpr int kFramesPerStack = 4;
inline constexpr double kStopLineHalfWidth = 0.5;
inline constexpr double kSpeedScale = 15.0;  // m/s mapped to 1.0

enum class Channel : int { Obstacles = 0, Path = 1, Navigable = 2, StopLine = 3 };

const char* to_string(Channel c);

inline int channel_count(AgentRole role) { return role == AgentRole::Active ? 4 : 3; }

using Grid = std::array<std::uint8_t, kGridCells>;

// Binary 84x84 occupancy over a 50x50 m window centred on the observer and
// rotated with its heading: row 0 is the far edge ahead, column 0 the left
// edge. A cell is set when its centre satisfies the channel's predicate.
struct SemanticLayer {
  Channel channel = Channel::Obstacles;
  Grid cells{};

  std::uint8_t at(int row, int col) const { return cells[static_cast<std::size_t>(row * kGridSize + col)]; }
  int count() const;
  friend bool operator==(const SemanticLayer&, const SemanticLayer&) = default;
};

// World position of a cell centre for an observer at `observer`.
Point2 cell_center(const Pose& observer, int row, int col);

// Observer-frame coordinates (forward, right) of a world point.
Point2 to_window(const Pose& observer, Point2 world);

// A passive vehicle as seen by the perception stack.
struct PerceivedVehicle {
  Point2 center;
  double heading = 0.0;
  Point2 dir{1.0, 0.0};
  VehicleFootprint footprint;
  bool detected = true;

  friend bool operator==(const PerceivedVehicle&, const PerceivedVehicle&) = default;
};

PerceivedVehicle perceive_exact(const AgentState& state, std::span<const PathPolyline> paths);
bool rect_contains(const PerceivedVehicle& v, Point2 p);

// Undetected vehicles are skipped. The observer must not be in `others`.
SemanticLayer rasterize_obstacles(const Pose& observer, std::span<const PerceivedVehicle> others);
// Cells within `half_width` of the polyline `forward` (the observer's route
// ahead of it).
SemanticLayer rasterize_path(const Pose& observer, std::span<const Point2> forward, double half_width);
SemanticLayer rasterize_navigable(const Pose& observer, std::span<const Polygon> polygons);
SemanticLayer rasterize_stopline(const Pose& observer, const Segment2& stop_line);

// Points of `path` from arclength s forward over `dist` metres, wrapping on
// closed paths and stopping at the end of open ones.
std::vector<Point2> forward_points(const PathPolyline& path, double s, double dist);

// All channels for one time sample, in Channel order.
struct Frame {
  std::vector<SemanticLayer> layers;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameStack {
  std::array<Frame, kFramesPerStack> frames;  // oldest first
  int sample_interval = 1;

  int channels() const { return static_cast<int>(frames[0].layers.size()); }
  // Network input layout: [frame][channel][row][col].
  std::vector<std::uint8_t> flatten() const;
};

// Takes the newest frame and the ones sample_interval, 2*sample_interval and
// 3*sample_interval steps before it; history shorter than that is padded by
// repeating the oldest available frame.
FrameStack build_frame_stack(std::span<const Frame> history, int sample_interval = 1);

// Feature vector scaled to [0, 1]. Passive: speed, target speed,
// aggressiveness, distance to goal. Active: speed, target speed,
// aggressiveness, one-hot last command (Permitted, NotPermitted, Caution).
struct NonVisualInput {
  std::vector<double> features;
};

inline int nonvisual_size(AgentRole role) { return role == AgentRole::Active ? 6 : 4; }

NonVisualInput encode_nonvisual(const AgentState& observer, double goal_length);

std::string layer_filename(std::int64_t episode, std::int64_t step, Channel channel);
// 84x84 8-bit grayscale PNG, 0 -> black, 1 -> white.
void write_layer_png(const SemanticLayer& layer, const std::filesystem::path& file);

}  // namespace rondo
