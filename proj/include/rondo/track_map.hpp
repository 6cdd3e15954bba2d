#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rondo/geometry.hpp"

namespace rondo {

// Fixed validation slack for hand-authored maps.
inline constexpr double kContainmentTolerance = 0.1;  // path vertex vs navigable area
inline constexpr double kConnectivityTolerance = 0.5;  // lane end vs traffic path

enum class MapKind { Roundabout, Junction };

struct LaneShape {
  PathPolyline centerline;
  double width = 3.5;
};

struct Segment2 {
  Point2 a, b;
};

struct SpawnPoint {
  std::size_t path = 0;
  double s = 0.0;
};

struct Polygon {
  std::vector<Point2> points;
  Box box;
};

Polygon make_polygon(std::vector<Point2> points);

// Quads covering a lane's drivable band, one per centerline segment.
std::vector<Polygon> lane_band(const LaneShape& lane);

// Scenario geometry, roundabout or junction. For roundabouts
// `traffic_paths` are the closed ring loops and `entry_lanes` the approach
// lanes; for junctions `traffic_paths` are the highway paths and
// `entry_lanes` holds the single merge lane.
//
// `base_polygons` are the drivable polygons stored in the map file; the
// drivable band of every entry and exit lane is derived from its centerline
// and width, so reshaping a lane rebuilds only its band.
struct TrackMap {
  MapKind kind = MapKind::Roundabout;
  std::string name;
  std::string role;  // training | validation | test | junction; optional
  std::vector<PathPolyline> traffic_paths;
  std::vector<LaneShape> entry_lanes;
  std::vector<LaneShape> exit_lanes;
  std::vector<Polygon> base_polygons;
  std::vector<Segment2> stop_lines;
  std::vector<SpawnPoint> spawn_points;
  double junction_angle = 0.0;      // junction only
  double insertion_length = 10.0;   // active route continues this far along traffic

  // base_polygons followed by the lane bands; rebuilt by refresh_navigable().
  std::vector<Polygon> navigable;

  void refresh_navigable();
  std::size_t entry_count() const noexcept { return entry_lanes.size(); }
  // Longest traffic path (ring circumference for roundabouts).
  double longest_traffic_path() const;
};

// Checks every invariant, throwing ValidationError naming the first breach.
void validate_map(const TrackMap& map);

// Route of the active agent entering from `entry`: the entry lane followed by
// `insertion_length` metres of the traffic path it merges into.
PathPolyline active_route(const TrackMap& map, std::size_t entry);

// Traffic path the entry lane merges into.
std::size_t merge_path_index(const TrackMap& map, std::size_t entry);

// Stop line perpendicular to `lane` at `setback` metres before its end.
Segment2 stop_line_for(const LaneShape& lane, double setback);

// Distance from the lane end back to where the stop line crosses the lane.
double stop_line_setback(const LaneShape& lane, const Segment2& stop_line);

TrackMap load_map(const std::filesystem::path& file);
TrackMap parse_map(const std::string& text);
std::string map_to_json(const TrackMap& map);
void save_map(const TrackMap& map, const std::filesystem::path& file);

}  // namespace rondo
