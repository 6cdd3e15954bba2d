#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rondo/geometry.hpp"
#include "rondo/track_map.hpp"

namespace rondo {

struct VehicleFootprint {
  double length = 4.5;
  double width = 1.8;
  friend bool operator==(const VehicleFootprint&, const VehicleFootprint&) = default;
};

enum class AgentRole { Passive, Active };

// Index order is the policy-head output order.
enum class PassiveAction : int { Accelerate = 0, Keep = 1, Brake = 2 };
enum class ActiveCommand : int { Permitted = 0, NotPermitted = 1, Caution = 2 };

inline constexpr int kActionCount = 3;

const char* to_string(PassiveAction a);
const char* to_string(ActiveCommand c);

enum class Outcome { Running, Reached, Crashed };

const char* to_string(Outcome o);

struct EpisodeStatus {
  Outcome outcome = Outcome::Running;
  std::int64_t step_count = 0;

  bool terminal() const noexcept { return outcome != Outcome::Running; }
};

struct SimConfig {
  double dt = 0.1;
  double comfort_decel = 2.0;  // magnitude
  double caution_speed = 2.0;
  double accel = 1.0;
  double passive_brake = 2.0;  // magnitude

  void validate() const;
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct AgentState {
  std::size_t path_id = 0;  // index into World::paths
  double s = 0.0;
  double v = 0.0;
  VehicleFootprint footprint;
  double target_speed = 8.0;
  double aggressiveness = 0.5;
  AgentRole role = AgentRole::Passive;
  ActiveCommand last_command = ActiveCommand::NotPermitted;
  // Active: arclength on the route at which the insertion counts as done.
  // Passive: distance to drive (see `odometer`) before its segment is done.
  double goal_s = 0.0;
  double odometer = 0.0;
};

// Semi-implicit Euler: the new speed is used for the position update.
// Passive positions wrap modulo the path length (vehicles leaving the end of
// an open highway re-enter at its start).
AgentState step_passive(const AgentState& state, PassiveAction action, const SimConfig& cfg,
                        const PathPolyline& path);
AgentState step_active(const AgentState& state, ActiveCommand cmd, const SimConfig& cfg,
                       const PathPolyline& path);

Pose world_pose(const AgentState& state, std::span<const PathPolyline> paths);

struct OrientedBox {
  Point2 center;
  Point2 dir;  // unit, along the length
  double length = 0.0;
  double width = 0.0;
};

OrientedBox box_of(const AgentState& state, std::span<const PathPolyline> paths);
// Separating-axis test; touching boxes count as overlapping.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);
bool collision_check(const AgentState& a, const AgentState& b, std::span<const PathPolyline> paths);

inline constexpr double kMinSpawnSeparation = 8.0;

struct SpawnResult {
  std::vector<AgentState> agents;
  std::vector<std::string> warnings;
};

// Draws a count uniformly from [min_count, max_count] and places that many
// passives on distinct spawn points at least kMinSpawnSeparation apart.
SpawnResult spawn_passives(const TrackMap& map, int max_count, std::uint64_t seed, int min_count = 0);

// One episode in progress. `paths` holds the map's traffic paths followed by
// the active agent's (possibly perturbed) route.
struct World {
  std::shared_ptr<const TrackMap> map;
  std::vector<PathPolyline> paths;
  AgentState active;
  std::vector<AgentState> passives;
  EpisodeStatus status;
  // Passive/passive overlaps seen on the last step; non-terminal.
  std::vector<std::pair<std::size_t, std::size_t>> passive_contacts;

  std::size_t route_index() const noexcept { return paths.size() - 1; }
  const PathPolyline& route() const { return paths.back(); }
};

World make_world(std::shared_ptr<const TrackMap> map, PathPolyline route, AgentState active,
                 std::vector<AgentState> passives);

// Advances every agent by one dt. Throws ContractError on a finished
// episode or when the passive action count does not match.
EpisodeStatus episode_step(World& world, ActiveCommand active_cmd, std::span<const PassiveAction> passive_actions,
                           const SimConfig& cfg);

}  // namespace rondo
