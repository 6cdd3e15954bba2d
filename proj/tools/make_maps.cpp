// Regenerates the bundled scenario maps under maps/.
//
//   make_maps <output-dir>
//
// The maps approximate the training, validation, test and junction scenes by
// topology (one ring plus N approach arms) rather than by surveyed geometry.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rondo/geometry.hpp"
#include "rondo/track_map.hpp"

using namespace rondo;

namespace {

constexpr double kRingWidth = 6.0;
constexpr double kLaneWidth = 3.5;
constexpr double kArmLength = 30.0;
constexpr double kStopSetback = 3.0;
constexpr double kSpawnSpacing = 8.2;

Point2 radial(double a) { return {std::cos(a), std::sin(a)}; }
Point2 tangent(double a) { return {-std::sin(a), std::cos(a)}; }
Point2 unit(Point2 p) { return (1.0 / norm(p)) * p; }

struct RingSpec {
  std::string name;
  std::string role;
  double radius;
  std::vector<double> arm_degrees;
};

TrackMap make_roundabout(const RingSpec& spec) {
  const double r = spec.radius;
  TrackMap map;
  map.kind = MapKind::Roundabout;
  map.name = spec.name;
  map.role = spec.role;
  map.insertion_length = 10.0;
  map.traffic_paths.push_back(flatten_arc({0.0, 0.0}, r, 0.0, 2.0 * M_PI, kDefaultChordError));

  const int quads = 96;
  for (int k = 0; k < quads; ++k) {
    const double a0 = 2.0 * M_PI * k / quads;
    const double a1 = 2.0 * M_PI * (k + 1) / quads;
    const double ri = r - 0.5 * kRingWidth;
    const double ro = r + 0.5 * kRingWidth;
    map.base_polygons.push_back(make_polygon({ri * radial(a0), ro * radial(a0), ro * radial(a1), ri * radial(a1)}));
  }

  for (double deg : spec.arm_degrees) {
    const double phi = deg * M_PI / 180.0;
    const double merge = phi + 8.0 / r;
    const Point2 m = r * radial(merge);
    const Point2 end_dir = unit(tangent(merge) - radial(merge));
    CubicBezier in{(r + kArmLength) * radial(phi) + 2.5 * tangent(phi),
                   (r + 16.0) * radial(phi) + 2.5 * tangent(phi), m - 7.0 * end_dir, m};
    LaneShape entry{flatten_bezier(in, kDefaultChordError), kLaneWidth};
    map.stop_lines.push_back(stop_line_for(entry, kStopSetback));
    map.entry_lanes.push_back(std::move(entry));

    const double leave = phi - 8.0 / r;
    const Point2 x = r * radial(leave);
    const Point2 exit_dir = unit(tangent(leave) + radial(leave));
    CubicBezier out{x, x + 7.0 * exit_dir, (r + 16.0) * radial(phi) - 2.5 * tangent(phi),
                    (r + kArmLength) * radial(phi) - 2.5 * tangent(phi)};
    map.exit_lanes.push_back({flatten_bezier(out, kDefaultChordError), kLaneWidth});
  }

  const double circumference = map.traffic_paths[0].length();
  const int slots = static_cast<int>(std::floor(circumference / kSpawnSpacing));
  for (int k = 0; k < slots; ++k) map.spawn_points.push_back({0, circumference * k / slots});
  map.refresh_navigable();
  validate_map(map);
  return map;
}

TrackMap make_junction() {
  TrackMap map;
  map.kind = MapKind::Junction;
  map.name = "junction";
  map.role = "junction";
  map.insertion_length = 15.0;
  map.junction_angle = M_PI / 6.0;
  const double half_len = 100.0;
  map.traffic_paths.push_back(PathPolyline({{-half_len, 0.0}, {half_len, 0.0}}));
  const double hw = 2.0;
  for (int k = 0; k < 20; ++k) {
    const double x0 = -half_len + 10.0 * k;
    map.base_polygons.push_back(make_polygon({{x0, -hw}, {x0 + 10.0, -hw}, {x0 + 10.0, hw}, {x0, hw}}));
  }
  const Point2 dir{std::cos(map.junction_angle), std::sin(map.junction_angle)};
  const Point2 end{0.0, 0.0};
  const Point2 start = end - 40.0 * dir;
  LaneShape merge{flatten_bezier({start, start + (40.0 / 3.0) * dir, end - (40.0 / 3.0) * dir, end},
                                 kDefaultChordError),
                  kLaneWidth};
  map.stop_lines.push_back(stop_line_for(merge, kStopSetback));
  map.entry_lanes.push_back(std::move(merge));
  for (int k = 0; k < 20; ++k) map.spawn_points.push_back({0, 10.0 * k});
  map.refresh_navigable();
  validate_map(map);
  return map;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <output-dir>\n", argv[0]);
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  const std::vector<RingSpec> rings = {
      {"training_1", "training", 22.0, {10.0, 95.0, 200.0, 280.0}},
      {"training_2", "training", 15.0, {0.0, 90.0, 180.0, 270.0}},
      {"training_3", "training", 18.0, {30.0, 150.0, 265.0}},
      {"training_4", "training", 24.0, {20.0, 110.0, 190.0, 300.0}},
      {"validation_roundabout", "validation", 26.0, {45.0, 135.0, 225.0, 315.0}},
      {"test_roundabout", "test", 32.0, {0.0, 80.0, 170.0, 260.0}},
  };
  for (const RingSpec& spec : rings) {
    const TrackMap map = make_roundabout(spec);
    save_map(map, dir / (spec.name + ".json"));
    std::printf("%s: ring %.2f m, %zu entries, %zu spawn points\n", spec.name.c_str(),
                map.traffic_paths[0].length(), map.entry_count(), map.spawn_points.size());
  }
  save_map(make_junction(), dir / "junction.json");
  return 0;
}
