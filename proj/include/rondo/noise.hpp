#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rondo/geometry.hpp"
#include "rondo/perception.hpp"
#include "rondo/sim.hpp"
#include "rondo/track_map.hpp"

namespace rondo {

using Rng = std::mt19937_64;

struct NoiseConfig {
  double sigma_pos = 0.3;        // m
  double sigma_size = 0.2;       // m
  double sigma_heading = 0.05;   // rad
  double p_dropout = 0.05;       // per passive per step
  double path_magnitude = 1.5;   // m
  double path_span = 20.0;       // m
  double reshape_magnitude = 2.0;  // m
  int reshape_period = 1000;     // episodes

  bool perception = true;
  bool detection = true;
  bool localization = true;
  bool reshape = true;

  void validate() const;
  // Every mechanism switched off.
  static NoiseConfig disabled();
  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

inline constexpr double kMinPerceivedDimension = 0.5;

// Gaussian jitter on centre, length, width and heading of each passive, and
// Bernoulli dropout. Dropped vehicles come back with detected = false; they
// stay in the world for collision purposes.
std::vector<PerceivedVehicle> perturb_perception(std::span<const AgentState> truth,
                                                 std::span<const PathPolyline> paths, const NoiseConfig& cfg,
                                                 Rng& rng);

// Lateral offset profile for perturbing a route. The route is cut into spans
// of about `span` metres; along each span the offset is the cubic
// Bezier with control points (s0, 0), (s0 + h/3, d1), (s0 + 2h/3, d2),
// (s1, 0) in (arclength, offset) coordinates, d1 and d2 uniform in
// [-magnitude, magnitude]. Each span after the first reuses the
// mirrored d2 of its predecessor as its d1, so the profile is C1 at joints.
std::vector<CubicBezier> lateral_offset_profile(const PathPolyline& original, double span, double magnitude,
                                                Rng& rng);

// Offsets every point of `original` along its left normal by the profile
// value at its arclength, after resampling to at most `resample` metres
// between vertices. Both ends stay fixed since the profile vanishes there.
PathPolyline apply_lateral_offset(const PathPolyline& original, std::span<const CubicBezier> profile,
                                  double resample = 0.5);

// Localization noise on the active route. Requires a route of at least 10 m;
// returns the original when the mechanism is disabled or the magnitude is 0.
PathPolyline perturb_path_bezier(const PathPolyline& original, const NoiseConfig& cfg, Rng& rng);

// Entry lane reshaped by a single-span offset profile with independent d1,
// d2 drawn from [-magnitude, magnitude] (seeded by `seed`). For a lane that
// is itself a cubic Bezier this is the same as shifting its two inner
// control points by those amounts. Endpoints and width are unchanged.
LaneShape reshape_entry_lane(const LaneShape& lane, std::uint64_t seed, double magnitude);

// On episodes that are multiples of reshape_period every entry lane is
// reshaped, stop lines are re-placed at their original setback and the
// navigable bands rebuilt. Otherwise `map` is returned as is.
TrackMap maybe_reshape(std::int64_t episode_index, const TrackMap& map, const NoiseConfig& cfg, Rng& rng);

}  // namespace rondo
