#include "rondo/noise.hpp"

#include <algorithm>
#include <cmath>

#include "rondo/errors.hpp"

namespace rondo {

void NoiseConfig::validate() const {
  if (sigma_pos < 0.0 || sigma_size < 0.0 || sigma_heading < 0.0) throw ValidationError("noise sigmas must be >= 0");
  if (!(p_dropout >= 0.0 && p_dropout < 1.0)) throw ValidationError("noise.p_dropout must be in [0, 1)");
  if (path_magnitude < 0.0 || reshape_magnitude < 0.0) throw ValidationError("noise magnitudes must be >= 0");
  if (!(path_span > 0.0)) throw ValidationError("noise.path_span must be positive");
  if (reshape_period < 1) throw ValidationError("noise.reshape_period must be >= 1");
}

NoiseConfig NoiseConfig::disabled() {
  NoiseConfig c;
  c.perception = c.detection = c.localization = c.reshape = false;
  return c;
}

namespace {

double symmetric_uniform(Rng& rng, double magnitude) {
  if (magnitude == 0.0) return 0.0;
  return std::uniform_real_distribution<double>(-magnitude, magnitude)(rng);
}

double profile_offset(std::span<const CubicBezier> profile, double s) {
  // Spans are contiguous and ordered by arclength.
  auto it = std::upper_bound(profile.begin(), profile.end(), s,
                             [](double v, const CubicBezier& b) { return v < b.p0.x; });
  const CubicBezier& span = it == profile.begin() ? profile.front() : *(it - 1);
  const double t = std::clamp((s - span.p0.x) / (span.p3.x - span.p0.x), 0.0, 1.0);
  return bezier_point(span, t).y;
}

}  // namespace

std::vector<PerceivedVehicle> perturb_perception(std::span<const AgentState> truth, std::span<const PathPolyline> paths,
                                                 const NoiseConfig& cfg, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PerceivedVehicle> out;
  out.reserve(truth.size());
  for (const AgentState& a : truth) {
    PerceivedVehicle v = perceive_exact(a, paths);
    if (cfg.perception) {
      v.center.x += cfg.sigma_pos * gauss(rng);
      v.center.y += cfg.sigma_pos * gauss(rng);
      v.footprint.length = std::max(kMinPerceivedDimension, v.footprint.length + cfg.sigma_size * gauss(rng));
      v.footprint.width = std::max(kMinPerceivedDimension, v.footprint.width + cfg.sigma_size * gauss(rng));
      const double dh = cfg.sigma_heading * gauss(rng);
      if (dh != 0.0) {
        v.heading += dh;
        v.dir = {std::cos(v.heading), std::sin(v.heading)};
      }
    }
    if (cfg.detection) v.detected = !(unit(rng) < cfg.p_dropout);
    out.push_back(v);
  }
  return out;
}

std::vector<CubicBezier> lateral_offset_profile(const PathPolyline& original, double span, double magnitude,
                                                Rng& rng) {
  if (!(span > 0.0)) throw DomainError("lateral_offset_profile: span must be positive");
  const double len = original.length();
  const int n = std::max(1, static_cast<int>(std::lround(len / span)));
  const double h = len / n;
  std::vector<CubicBezier> profile;
  profile.reserve(static_cast<std::size_t>(n));
  double d1 = symmetric_uniform(rng, magnitude);
  for (int k = 0; k < n; ++k) {
    const double s0 = h * k;
    const double s1 = k + 1 == n ? len : h * (k + 1);
    const double d2 = symmetric_uniform(rng, magnitude);
    profile.push_back({{s0, 0.0}, {s0 + h / 3.0, d1}, {s0 + 2.0 * h / 3.0, d2}, {s1, 0.0}});
    d1 = -d2;
  }
  return profile;
}

PathPolyline apply_lateral_offset(const PathPolyline& original, std::span<const CubicBezier> profile, double resample) {
  const auto& verts = original.vertices();
  const auto& cum = original.cumulative_arclength();
  std::vector<Point2> out;
  out.reserve(verts.size() + static_cast<std::size_t>(original.length() / resample) + 1);
  auto emit = [&](double s) {
    const Pose pose = original.pose_at(s);
    const double off = profile_offset(profile, s);
    out.push_back(off == 0.0 ? pose.position : pose.position + off * perp(pose.dir));
  };
  for (std::size_t i = 0; i + 1 < verts.size(); ++i) {
    const double seg = cum[i + 1] - cum[i];
    if (seg == 0.0) continue;
    const int pieces = std::max(1, static_cast<int>(std::ceil(seg / resample)));
    for (int k = 0; k < pieces; ++k) emit(cum[i] + seg * k / pieces);
  }
  out.push_back(verts.back());
  out.front() = verts.front();
  return PathPolyline(std::move(out));
}

PathPolyline perturb_path_bezier(const PathPolyline& original, const NoiseConfig& cfg, Rng& rng) {
  if (original.length() < 10.0) throw DomainError("perturb_path_bezier needs a path of at least 10 m");
  if (!cfg.localization || cfg.path_magnitude == 0.0) return original;
  const auto profile = lateral_offset_profile(original, cfg.path_span, cfg.path_magnitude, rng);
  return apply_lateral_offset(original, profile);
}

LaneShape reshape_entry_lane(const LaneShape& lane, std::uint64_t seed, double magnitude) {
  if (magnitude < 0.0) throw DomainError("reshape_entry_lane: magnitude must be >= 0");
  Rng rng(seed);
  const double len = lane.centerline.length();
  const double d1 = symmetric_uniform(rng, magnitude);
  const double d2 = symmetric_uniform(rng, magnitude);
  const CubicBezier profile{{0.0, 0.0}, {len / 3.0, d1}, {2.0 * len / 3.0, d2}, {len, 0.0}};
  return {apply_lateral_offset(lane.centerline, std::span(&profile, 1)), lane.width};
}

TrackMap maybe_reshape(std::int64_t episode_index, const TrackMap& map, const NoiseConfig& cfg, Rng& rng) {
  if (episode_index < 0) throw DomainError("maybe_reshape: negative episode index");
  if (!cfg.reshape || episode_index % cfg.reshape_period != 0) return map;
  TrackMap out = map;
  for (std::size_t i = 0; i < out.entry_lanes.size(); ++i) {
    const double setback = stop_line_setback(map.entry_lanes[i], map.stop_lines[i]);
    out.entry_lanes[i] = reshape_entry_lane(map.entry_lanes[i], rng(), cfg.reshape_magnitude);
    out.stop_lines[i] = stop_line_for(out.entry_lanes[i], setback);
  }
  out.refresh_navigable();
  return out;
}

}  // namespace rondo
