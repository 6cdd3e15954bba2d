#include "rondo/track_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rondo/errors.hpp"

namespace rondo {

using nlohmann::json;

Polygon make_polygon(std::vector<Point2> points) {
  Polygon p{std::move(points), {}};
  p.box = bounding_box(p.points);
  return p;
}

std::vector<Polygon> lane_band(const LaneShape& lane) {
  const auto& v = lane.centerline.vertices();
  const double half = 0.5 * lane.width;
  const std::size_t n = v.size();
  std::vector<Point2> left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point2 d{0.0, 0.0};
    if (i > 0) d = d + (v[i] - v[i - 1]) * (1.0 / std::max(distance(v[i], v[i - 1]), 1e-12));
    if (i + 1 < n) d = d + (v[i + 1] - v[i]) * (1.0 / std::max(distance(v[i + 1], v[i]), 1e-12));
    const double len = norm(d);
    const Point2 nrm = len > 0.0 ? perp(d * (1.0 / len)) : Point2{0.0, 1.0};
    left[i] = v[i] + half * nrm;
    right[i] = v[i] - half * nrm;
  }
  std::vector<Polygon> quads;
  quads.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (v[i] == v[i + 1]) continue;
    quads.push_back(make_polygon({right[i], right[i + 1], left[i + 1], left[i]}));
  }
  return quads;
}

void TrackMap::refresh_navigable() {
  navigable = base_polygons;
  for (const auto& lanes : {std::cref(entry_lanes), std::cref(exit_lanes)}) {
    for (const LaneShape& lane : lanes.get()) {
      auto band = lane_band(lane);
      navigable.insert(navigable.end(), std::make_move_iterator(band.begin()),
                       std::make_move_iterator(band.end()));
    }
  }
}

double TrackMap::longest_traffic_path() const {
  double l = 0.0;
  for (const auto& p : traffic_paths) l = std::max(l, p.length());
  return l;
}

namespace {

double polygon_boundary_distance(Point2 p, const std::vector<Point2>& poly) {
  double d = INFINITY;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    d = std::min(d, point_segment_distance(p, poly[j], poly[i]));
  }
  return d;
}

bool navigable_contains(const TrackMap& map, Point2 p) {
  for (const Polygon& poly : map.navigable) {
    Box grown{{poly.box.lo.x - kContainmentTolerance, poly.box.lo.y - kContainmentTolerance},
              {poly.box.hi.x + kContainmentTolerance, poly.box.hi.y + kContainmentTolerance}};
    if (!grown.contains(p)) continue;
    if (point_in_polygon(p, poly.points)) return true;
    if (polygon_boundary_distance(p, poly.points) <= kContainmentTolerance) return true;
  }
  return false;
}

double distance_to_path(Point2 p, const PathPolyline& path) {
  return distance(p, path.pose_at(path.project(p)).position);
}

}  // namespace

std::size_t merge_path_index(const TrackMap& map, std::size_t entry) {
  const Point2 end = map.entry_lanes.at(entry).centerline.vertices().back();
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < map.traffic_paths.size(); ++i) {
    const double d = distance_to_path(end, map.traffic_paths[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void validate_map(const TrackMap& map) {
  const std::string where = "map '" + map.name + "': ";
  if (map.traffic_paths.empty()) throw ValidationError(where + "no traffic paths");
  if (map.entry_lanes.empty()) throw ValidationError(where + "no entry lanes");
  if (map.entry_lanes.size() != map.stop_lines.size()) {
    throw ValidationError(where + "stop-line count " + std::to_string(map.stop_lines.size()) +
                          " does not match entry-lane count " + std::to_string(map.entry_lanes.size()));
  }
  if (map.kind == MapKind::Junction) {
    if (map.entry_lanes.size() != 1) throw ValidationError(where + "junction needs exactly one merge lane");
    if (!(map.junction_angle > 0.0 && map.junction_angle <= M_PI / 2.0)) {
      throw ValidationError(where + "junction_angle " + std::to_string(map.junction_angle) +
                            " outside (0, pi/2]");
    }
  }
  if (!(map.insertion_length > 0.0)) throw ValidationError(where + "insertion_length must be positive");
  for (const auto& lanes : {std::cref(map.entry_lanes), std::cref(map.exit_lanes)}) {
    for (const LaneShape& lane : lanes.get()) {
      if (!(lane.width > 0.0)) throw ValidationError(where + "lane width must be positive");
    }
  }
  for (std::size_t i = 0; i < map.entry_lanes.size(); ++i) {
    const LaneShape& lane = map.entry_lanes[i];
    const Point2 end = lane.centerline.vertices().back();
    const double gap = point_segment_distance(end, map.stop_lines[i].a, map.stop_lines[i].b);
    if (gap > lane.width) {
      throw ValidationError(where + "stop line " + std::to_string(i) + " is " + std::to_string(gap) +
                            " m from its lane end (limit " + std::to_string(lane.width) + " m)");
    }
    const double link = distance_to_path(end, map.traffic_paths[merge_path_index(map, i)]);
    if (link > kConnectivityTolerance) {
      throw ValidationError(where + "entry lane " + std::to_string(i) + " ends " + std::to_string(link) +
                            " m from any traffic path (limit " + std::to_string(kConnectivityTolerance) + " m)");
    }
  }
  for (const SpawnPoint& sp : map.spawn_points) {
    if (sp.path >= map.traffic_paths.size()) throw ValidationError(where + "spawn point on unknown path");
    if (sp.s < 0.0 || sp.s > map.traffic_paths[sp.path].length()) {
      throw ValidationError(where + "spawn point arclength outside its path");
    }
  }
  auto check_contained = [&](const PathPolyline& path, const std::string& what) {
    for (std::size_t k = 0; k < path.vertices().size(); ++k) {
      if (!navigable_contains(map, path.vertices()[k])) {
        throw ValidationError(where + what + " vertex " + std::to_string(k) + " lies outside the navigable area");
      }
    }
  };
  for (std::size_t i = 0; i < map.traffic_paths.size(); ++i) check_contained(map.traffic_paths[i], "traffic path " + std::to_string(i));
  for (std::size_t i = 0; i < map.entry_lanes.size(); ++i) check_contained(map.entry_lanes[i].centerline, "entry lane " + std::to_string(i));
  for (std::size_t i = 0; i < map.exit_lanes.size(); ++i) check_contained(map.exit_lanes[i].centerline, "exit lane " + std::to_string(i));
}

PathPolyline active_route(const TrackMap& map, std::size_t entry) {
  const LaneShape& lane = map.entry_lanes.at(entry);
  const PathPolyline& traffic = map.traffic_paths[merge_path_index(map, entry)];
  std::vector<Point2> pts = lane.centerline.vertices();
  const double s0 = traffic.project(pts.back());
  const double total = traffic.length();
  double remaining = map.insertion_length;
  double s = s0;
  const auto& cum = traffic.cumulative_arclength();
  const auto& tv = traffic.vertices();
  // Walk forward vertex by vertex, wrapping around closed rings.
  std::size_t idx = traffic.segment_at(std::min(s, total)) + 1;
  while (remaining > 0.0) {
    if (idx >= tv.size()) {
      if (!traffic.closed()) break;
      idx = 1;
      s -= total;
    }
    const double step = cum[idx] - s;
    if (step >= remaining) {
      pts.push_back(traffic.pose_at(std::min(s + remaining, total)).position);
      remaining = 0.0;
      break;
    }
    if (step > 1e-9) pts.push_back(tv[idx]);
    remaining -= std::max(step, 0.0);
    s = cum[idx];
    ++idx;
  }
  std::vector<Point2> clean;
  for (const Point2& p : pts) {
    if (clean.empty() || distance(clean.back(), p) > 1e-9) clean.push_back(p);
  }
  return PathPolyline(std::move(clean));
}

Segment2 stop_line_for(const LaneShape& lane, double setback) {
  const PathPolyline& c = lane.centerline;
  const Pose pose = c.pose_at(std::clamp(c.length() - setback, 0.0, c.length()));
  const Point2 n = perp(pose.dir);
  const double half = 0.5 * lane.width;
  return {pose.position - half * n, pose.position + half * n};
}

double stop_line_setback(const LaneShape& lane, const Segment2& stop_line) {
  const Point2 mid = 0.5 * (stop_line.a + stop_line.b);
  return lane.centerline.length() - lane.centerline.project(mid);
}

// ---------------------------------------------------------------------------
// JSON map files

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("field '" + path_ + "': " + msg, 0, path_);
  }

  Reader at(const std::string& key) const {
    if (!j_.is_object()) fail("expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) Reader(j_, join(key)).fail("missing");
    return Reader(*it, join(key));
  }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  Reader at(std::size_t i) const { return Reader(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }
  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::size_t index() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<long long>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_.get<std::size_t>();
  }
  Point2 point() const {
    if (size() != 2) fail("expected [x, y]");
    return {at(std::size_t{0}).number(), at(std::size_t{1}).number()};
  }
  std::vector<Point2> points() const {
    std::vector<Point2> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).point());
    return out;
  }
  PathPolyline path() const {
    try {
      return PathPolyline(points());
    } catch (const DomainError& e) {
      fail(e.what());
    }
  }
  LaneShape lane() const { return {at("centerline").path(), at("width").number()}; }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& j_;
  std::string path_;
};

json points_json(const std::vector<Point2>& pts) {
  json arr = json::array();
  for (const Point2& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

json lane_json(const LaneShape& lane) {
  return {{"centerline", points_json(lane.centerline.vertices())}, {"width", lane.width}};
}

int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

TrackMap parse_map(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const int line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("map parse error at line " + std::to_string(line) + ": " + e.what(), line);
  }
  const Reader root(doc, "");
  TrackMap map;
  const std::string kind = root.at("kind").string();
  if (kind == "roundabout") {
    map.kind = MapKind::Roundabout;
  } else if (kind == "junction") {
    map.kind = MapKind::Junction;
  } else {
    root.at("kind").fail("expected \"roundabout\" or \"junction\", got \"" + kind + "\"");
  }
  map.name = root.at("name").string();
  if (root.has("role")) map.role = root.at("role").string();
  if (root.has("insertion_length")) map.insertion_length = root.at("insertion_length").number();

  const bool ring = map.kind == MapKind::Roundabout;
  const Reader paths = root.at(ring ? "ring_paths" : "highway_paths");
  for (std::size_t i = 0; i < paths.size(); ++i) map.traffic_paths.push_back(paths.at(i).path());
  if (ring) {
    const Reader lanes = root.at("entry_lanes");
    for (std::size_t i = 0; i < lanes.size(); ++i) map.entry_lanes.push_back(lanes.at(i).lane());
  } else {
    map.entry_lanes.push_back(root.at("merge_lane").lane());
    map.junction_angle = root.at("junction_angle").number();
  }
  if (root.has("exit_lanes")) {
    const Reader lanes = root.at("exit_lanes");
    for (std::size_t i = 0; i < lanes.size(); ++i) map.exit_lanes.push_back(lanes.at(i).lane());
  }
  const Reader polys = root.at("navigable_polygon");
  for (std::size_t i = 0; i < polys.size(); ++i) {
    auto pts = polys.at(i).points();
    if (pts.size() < 3) polys.at(i).fail("polygon needs at least 3 vertices");
    map.base_polygons.push_back(make_polygon(std::move(pts)));
  }
  const Reader stops = root.at("stop_lines");
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const Reader seg = stops.at(i);
    if (seg.size() != 2) seg.fail("expected two points");
    map.stop_lines.push_back({seg.at(std::size_t{0}).point(), seg.at(std::size_t{1}).point()});
  }
  const Reader spawns = root.at("spawn_points");
  for (std::size_t i = 0; i < spawns.size(); ++i) {
    map.spawn_points.push_back({spawns.at(i).at("path").index(), spawns.at(i).at("s").number()});
  }
  map.refresh_navigable();
  validate_map(map);
  return map;
}

TrackMap load_map(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open map file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_map(ss.str());
}

std::string map_to_json(const TrackMap& map) {
  const bool ring = map.kind == MapKind::Roundabout;
  json doc;
  doc["kind"] = ring ? "roundabout" : "junction";
  doc["name"] = map.name;
  if (!map.role.empty()) doc["role"] = map.role;
  doc["insertion_length"] = map.insertion_length;
  json paths = json::array();
  for (const auto& p : map.traffic_paths) paths.push_back(points_json(p.vertices()));
  doc[ring ? "ring_paths" : "highway_paths"] = paths;
  if (ring) {
    json lanes = json::array();
    for (const auto& l : map.entry_lanes) lanes.push_back(lane_json(l));
    doc["entry_lanes"] = lanes;
  } else {
    doc["merge_lane"] = lane_json(map.entry_lanes.at(0));
    doc["junction_angle"] = map.junction_angle;
  }
  json exits = json::array();
  for (const auto& l : map.exit_lanes) exits.push_back(lane_json(l));
  doc["exit_lanes"] = exits;
  json polys = json::array();
  for (const auto& p : map.base_polygons) polys.push_back(points_json(p.points));
  doc["navigable_polygon"] = polys;
  json stops = json::array();
  for (const auto& s : map.stop_lines) stops.push_back(json::array({{s.a.x, s.a.y}, {s.b.x, s.b.y}}));
  doc["stop_lines"] = stops;
  json spawns = json::array();
  for (const auto& sp : map.spawn_points) spawns.push_back({{"path", sp.path}, {"s", sp.s}});
  doc["spawn_points"] = spawns;
  return doc.dump(1);
}

void save_map(const TrackMap& map, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write map file " + file.string());
  out << map_to_json(map) << '\n';
}

}  // namespace rondo
