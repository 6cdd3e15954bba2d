#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rondo/noise.hpp"
#include "rondo/perception.hpp"
#include "rondo/sim.hpp"
#include "test_support.hpp"

using namespace rondo;
using rondo::test::bundled;

namespace {

double hausdorff(const PathPolyline& a, const PathPolyline& b) {
  auto one_way = [](const PathPolyline& x, const PathPolyline& y) {
    double worst = 0;
    for (const Point2& p : x.vertices()) {
      double best = INFINITY;
      const auto& v = y.vertices();
      for (std::size_t k = 0; k + 1 < v.size(); ++k) best = std::min(best, point_segment_distance(p, v[k], v[k + 1]));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_way(a, b), one_way(b, a));
}

std::vector<AgentState> ring_traffic(const TrackMap& m, int n) {
  std::vector<AgentState> out;
  for (int i = 0; i < n; ++i) {
    AgentState a;
    a.path_id = 0;
    a.s = i * m.traffic_paths[0].length() / n;
    out.push_back(a);
  }
  return out;
}

}  // namespace

TEST(PerceptionNoise, ZeroNoiseIsGroundTruth) {
  const auto m = bundled("training_1");
  const auto truth = ring_traffic(*m, 6);
  NoiseConfig cfg;
  cfg.sigma_pos = cfg.sigma_size = cfg.sigma_heading = cfg.p_dropout = 0.0;
  Rng rng(1);
  const auto seen = perturb_perception(truth, m->traffic_paths, cfg, rng);
  for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_EQ(seen[i], perceive_exact(truth[i], m->traffic_paths));
  const auto off = perturb_perception(truth, m->traffic_paths, NoiseConfig::disabled(), rng);
  for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_EQ(off[i], perceive_exact(truth[i], m->traffic_paths));
}

TEST(PerceptionNoise, FullDropoutHidesEverything) {
  const auto m = bundled("training_1");
  const auto truth = ring_traffic(*m, 6);
  NoiseConfig cfg;
  cfg.p_dropout = 0.999999999;
  Rng rng(2);
  const auto seen = perturb_perception(truth, m->traffic_paths, cfg, rng);
  EXPECT_EQ(seen.size(), truth.size());  // still there for collisions
  for (const auto& v : seen) EXPECT_FALSE(v.detected);
  const Pose o = world_pose(truth[0], m->traffic_paths);
  EXPECT_EQ(rasterize_obstacles(o, std::span(seen).subspan(1)).count(), 0);
}

TEST(PerceptionNoise, Statistics) {
  const auto m = bundled("training_1");
  const auto truth = ring_traffic(*m, 1);
  const PerceivedVehicle exact = perceive_exact(truth[0], m->traffic_paths);
  NoiseConfig cfg;
  cfg.sigma_pos = 0.3;
  cfg.p_dropout = 0.05;
  Rng rng(99);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  int dropped = 0;
  for (int i = 0; i < n; ++i) {
    const PerceivedVehicle v = perturb_perception(truth, m->traffic_paths, cfg, rng)[0];
    const double e = v.center.x - exact.center.x;
    sum += e;
    sum2 += e * e;
    dropped += v.detected ? 0 : 1;
    EXPECT_GE(v.footprint.length, kMinPerceivedDimension);
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  EXPECT_LT(std::abs(mean), 3 * 0.3 / std::sqrt(n));
  EXPECT_LT(std::abs(sd - 0.3) / 0.3, 0.02);
  EXPECT_LT(std::abs(static_cast<double>(dropped) / n - 0.05), 0.01);
}

TEST(PathNoise, ZeroMagnitudeIdentity) {
  const auto m = bundled("training_2");
  const PathPolyline route = active_route(*m, 1);
  NoiseConfig cfg;
  cfg.path_magnitude = 0.0;
  Rng rng(3);
  EXPECT_LE(hausdorff(perturb_path_bezier(route, cfg, rng), route), 1e-6);
  EXPECT_LE(hausdorff(perturb_path_bezier(route, NoiseConfig::disabled(), rng), route), 1e-6);
  // The offset machinery itself with a zero profile.
  const auto flat = lateral_offset_profile(route, 20.0, 0.0, rng);
  EXPECT_LE(hausdorff(apply_lateral_offset(route, flat), route), 1e-6);
}

TEST(PathNoise, EndpointsBoundAndContinuity) {
  const auto m = bundled("training_4");
  NoiseConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PathPolyline route = active_route(*m, seed % m->entry_count());
    Rng rng(seed);
    const auto profile = lateral_offset_profile(route, cfg.path_span, cfg.path_magnitude, rng);
    const PathPolyline p = apply_lateral_offset(route, profile);
    EXPECT_EQ(p.vertices().front(), route.vertices().front());
    EXPECT_EQ(p.vertices().back(), route.vertices().back());
    // Offsets stay inside the Bernstein bound of each span (peak weight 0.75).
    for (const Point2& v : p.vertices()) {
      double best = INFINITY;
      const auto& r = route.vertices();
      for (std::size_t k = 0; k + 1 < r.size(); ++k) best = std::min(best, point_segment_distance(v, r[k], r[k + 1]));
      EXPECT_LE(best, cfg.path_magnitude * 0.75 + 1e-9);
    }
    // C1 at span joints: offset slopes match on both sides.
    for (std::size_t k = 0; k + 1 < profile.size(); ++k) {
      const CubicBezier& a = profile[k];
      const CubicBezier& b = profile[k + 1];
      EXPECT_EQ(a.p3, b.p0);
      const double left = std::atan2(a.p3.y - a.p2.y, a.p3.x - a.p2.x);
      const double right = std::atan2(b.p1.y - b.p0.y, b.p1.x - b.p0.x);
      EXPECT_LT(std::abs(left - right), 1e-9);
    }
  }
}

TEST(PathNoise, Deterministic) {
  const auto m = bundled("training_1");
  const PathPolyline route = active_route(*m, 0);
  NoiseConfig cfg;
  Rng a(5), b(5);
  EXPECT_EQ(perturb_path_bezier(route, cfg, a), perturb_path_bezier(route, cfg, b));
}

TEST(Reshape, PeriodTrigger) {
  const auto m = bundled("training_1");
  NoiseConfig cfg;
  Rng rng(1);
  EXPECT_EQ(maybe_reshape(999, *m, cfg, rng).entry_lanes[0].centerline, m->entry_lanes[0].centerline);
  const TrackMap r = maybe_reshape(1000, *m, cfg, rng);
  EXPECT_FALSE(r.entry_lanes[0].centerline == m->entry_lanes[0].centerline);
  for (std::size_t i = 0; i < r.entry_count(); ++i) {
    const Point2 end = r.entry_lanes[i].centerline.vertices().back();
    EXPECT_LE(point_segment_distance(end, r.stop_lines[i].a, r.stop_lines[i].b), r.entry_lanes[i].width);
  }
  cfg.reshape = false;
  for (std::int64_t e : {0, 1000, 2000}) {
    EXPECT_EQ(maybe_reshape(e, *m, cfg, rng).entry_lanes[0].centerline, m->entry_lanes[0].centerline);
  }
  cfg.reshape = true;
  cfg.reshape_magnitude = 0.0;
  const TrackMap z = maybe_reshape(0, *m, cfg, rng);
  for (std::size_t i = 0; i < z.entry_count(); ++i) {
    EXPECT_LE(hausdorff(z.entry_lanes[i].centerline, m->entry_lanes[i].centerline), 1e-9);
  }
}

TEST(NoiseConfig, Validation) {
  NoiseConfig c;
  EXPECT_NO_THROW(c.validate());
  c.p_dropout = 1.0;
  EXPECT_ANY_THROW(c.validate());
  c = NoiseConfig{};
  c.sigma_pos = -0.1;
  EXPECT_ANY_THROW(c.validate());
  c = NoiseConfig{};
  c.reshape_period = 0;
  EXPECT_ANY_THROW(c.validate());
}
