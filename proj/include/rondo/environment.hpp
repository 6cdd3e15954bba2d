#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rondo/learner.hpp"
#include "rondo/network.hpp"
#include "rondo/noise.hpp"
#include "rondo/perception.hpp"
#include "rondo/sim.hpp"
#include "rondo/track_map.hpp"

namespace rondo {

// splitmix64 finaliser; used to derive every per-instance and per-episode seed.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

struct RewardConfig {
  double reach = 1.0;
  double crash = -1.0;
  double active_step = -0.001;
  double command_switch = -0.05;
  double passive_complete = 1.0;
  double passive_collision = -1.0;
  double passive_speed = -0.002;  // times |v - target_speed|
  friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

struct PerceptionConfig {
  double path_lookahead = 50.0;  // m of route drawn ahead of the observer
  double path_half_width = 1.0;  // m
  int sample_interval = 1;       // steps between stacked frames
  friend bool operator==(const PerceptionConfig&, const PerceptionConfig&) = default;
};

// One rendered frame for the active agent: obstacles, path, navigable, stop line.
Frame active_frame(const World& world, std::span<const PerceivedVehicle> perceived, std::size_t entry,
                   const PerceptionConfig& cfg);
// Passive `index` sees every other passive (and `active` when given), its
// own traffic path and the navigable area.
Frame passive_frame(const TrackMap& map, std::span<const PathPolyline> paths, std::span<const AgentState> passives,
                    std::size_t index, const AgentState* active, const PerceptionConfig& cfg);

// Rolling history long enough for one FrameStack.
class FrameHistory {
 public:
  explicit FrameHistory(int sample_interval = 1);
  void push(Frame f);
  void clear() { frames_.clear(); }
  bool empty() const { return frames_.empty(); }
  FrameStack stack() const;
  const Frame& newest() const { return frames_.back(); }

 private:
  int interval_;
  std::deque<Frame> frames_;
};

Observation make_observation(const FrameStack& stack, const NonVisualInput& nonvisual);

enum class PassiveControl { Constant, Following, Policy };

const char* to_string(PassiveControl c);
PassiveControl parse_passive_control(const std::string& s);

// Shared, read-only passive policy.
struct PassivePolicy {
  NetworkShape shape;
  std::shared_ptr<const std::vector<double>> params;
};

// Picks the passive actions each step. Constant keeps the spawn speed;
// Following accelerates to target speed and brakes when the gap to the
// vehicle ahead on the same path drops below a speed-dependent headway;
// Policy runs the passive network greedily on each passive's own frames.
class PassiveDriver {
 public:
  explicit PassiveDriver(PassiveControl mode, std::shared_ptr<const PassivePolicy> policy = {},
                         PerceptionConfig perception = {});

  PassiveControl mode() const { return mode_; }
  void reset(const World& world);
  std::vector<PassiveAction> act(const World& world);
  // Called after each world step so policy passives can record a new frame.
  void observe(const World& world);

 private:
  PassiveControl mode_;
  std::shared_ptr<const PassivePolicy> policy_;
  PerceptionConfig perception_;
  std::vector<FrameHistory> history_;
};

// Bumper-to-bumper gap from passive `i` to the next vehicle ahead on the same
// path (wrapping on closed paths); infinity when there is none.
double gap_ahead(const World& world, std::size_t i);

struct EpisodeSpec {
  std::shared_ptr<const TrackMap> map;
  std::size_t entry = 0;
  int max_passives = 0;
  int min_passives = 0;
  std::uint64_t seed = 0;
  NoiseConfig noise = NoiseConfig::disabled();
  SimConfig sim;
  RewardConfig rewards;
  PerceptionConfig perception;
  double active_target_speed = 8.0;
  double active_initial_speed = 0.0;
};

// The active agent's MDP on one map entry. Passive actions come from the
// supplied driver. Noise draws come from a generator seeded by spec.seed.
class ActiveEpisode final : public Environment {
 public:
  ActiveEpisode(EpisodeSpec spec, PassiveDriver& passives);

  Observation observe() override;
  double act(int action) override;
  bool terminal() const override { return world_.status.terminal(); }

  const World& world() const { return world_; }
  const EpisodeSpec& spec() const { return spec_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const Frame& current_frame() const { return history_.newest(); }
  const std::vector<PerceivedVehicle>& perceived() const { return perceived_; }

 private:
  void sense();

  EpisodeSpec spec_;
  PassiveDriver* passives_;
  World world_;
  Rng noise_rng_;
  FrameHistory history_;
  std::vector<PerceivedVehicle> perceived_;
  std::vector<std::string> warnings_;
};

}  // namespace rondo
