#include "rondo/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "rondo/errors.hpp"

namespace rondo {

const char* to_string(PassiveAction a) {
  switch (a) {
    case PassiveAction::Accelerate: return "accelerate";
    case PassiveAction::Keep: return "keep";
    case PassiveAction::Brake: return "brake";
  }
  return "?";
}

const char* to_string(ActiveCommand c) {
  switch (c) {
    case ActiveCommand::Permitted: return "permitted";
    case ActiveCommand::NotPermitted: return "not_permitted";
    case ActiveCommand::Caution: return "caution";
  }
  return "?";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Running: return "running";
    case Outcome::Reached: return "reached";
    case Outcome::Crashed: return "crashed";
  }
  return "?";
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw ValidationError("sim.dt must be positive");
  if (!(comfort_decel > 0.0 && caution_speed > 0.0 && accel > 0.0 && passive_brake > 0.0)) {
    throw ValidationError("sim accelerations and caution_speed must be positive");
  }
}

AgentState step_passive(const AgentState& state, PassiveAction action, const SimConfig& cfg,
                        const PathPolyline& path) {
  double a = 0.0;
  if (action == PassiveAction::Accelerate) a = cfg.accel;
  if (action == PassiveAction::Brake) a = -cfg.passive_brake;
  AgentState next = state;
  next.v = std::clamp(state.v + a * cfg.dt, 0.0, state.target_speed);
  const double ds = next.v * cfg.dt;
  next.odometer += ds;
  next.s = std::fmod(state.s + ds, path.length());
  return next;
}

AgentState step_active(const AgentState& state, ActiveCommand cmd, const SimConfig& cfg, const PathPolyline& path) {
  const double v = state.v;
  double v_next = v;
  switch (cmd) {
    case ActiveCommand::Permitted:
      v_next = v >= state.target_speed ? v : std::min(v + cfg.accel * cfg.dt, state.target_speed);
      break;
    case ActiveCommand::NotPermitted:
      v_next = std::max(v - cfg.comfort_decel * cfg.dt, 0.0);
      break;
    case ActiveCommand::Caution:
      if (v < cfg.caution_speed) {
        v_next = std::min(v + cfg.accel * cfg.dt, cfg.caution_speed);
      } else if (v > cfg.caution_speed) {
        v_next = std::max(v - cfg.comfort_decel * cfg.dt, cfg.caution_speed);
      }
      break;
  }
  AgentState next = state;
  next.v = v_next;
  next.s = std::min(state.s + v_next * cfg.dt, path.length());
  next.odometer += next.s - state.s;
  next.last_command = cmd;
  return next;
}

Pose world_pose(const AgentState& state, std::span<const PathPolyline> paths) {
  return paths[state.path_id].pose_at(state.s);
}

OrientedBox box_of(const AgentState& state, std::span<const PathPolyline> paths) {
  const Pose p = world_pose(state, paths);
  return {p.position, p.dir, state.footprint.length, state.footprint.width};
}

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const Point2 axes[4] = {a.dir, perp(a.dir), b.dir, perp(b.dir)};
  const Point2 d = b.center - a.center;
  for (const Point2& axis : axes) {
    const double ra = 0.5 * a.length * std::abs(dot(a.dir, axis)) + 0.5 * a.width * std::abs(dot(perp(a.dir), axis));
    const double rb = 0.5 * b.length * std::abs(dot(b.dir, axis)) + 0.5 * b.width * std::abs(dot(perp(b.dir), axis));
    if (std::abs(dot(d, axis)) > ra + rb) return false;
  }
  return true;
}

bool collision_check(const AgentState& a, const AgentState& b, std::span<const PathPolyline> paths) {
  return boxes_overlap(box_of(a, paths), box_of(b, paths));
}

SpawnResult spawn_passives(const TrackMap& map, int max_count, std::uint64_t seed, int min_count) {
  if (max_count < 0 || min_count < 0 || min_count > max_count) {
    throw DomainError("spawn_passives: need 0 <= min_count <= max_count");
  }
  SpawnResult result;
  std::mt19937_64 rng(seed);
  const int count = std::uniform_int_distribution<int>(min_count, max_count)(rng);
  std::vector<std::size_t> order(map.spawn_points.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  auto separation = [&](const SpawnPoint& a, const SpawnPoint& b) {
    if (a.path != b.path) return std::numeric_limits<double>::infinity();
    const PathPolyline& p = map.traffic_paths[a.path];
    const double d = std::abs(a.s - b.s);
    return p.closed() ? std::min(d, p.length() - d) : d;
  };

  std::vector<SpawnPoint> chosen;
  for (std::size_t idx : order) {
    if (static_cast<int>(chosen.size()) == count) break;
    const SpawnPoint& cand = map.spawn_points[idx];
    const bool clear = std::all_of(chosen.begin(), chosen.end(), [&](const SpawnPoint& c) {
      return separation(c, cand) >= kMinSpawnSeparation;
    });
    if (clear) chosen.push_back(cand);
  }
  if (static_cast<int>(chosen.size()) < count) {
    result.warnings.push_back("map '" + map.name + "': requested " + std::to_string(count) +
                              " passives but only " + std::to_string(chosen.size()) +
                              " non-overlapping spawn slots are available; capped");
  }
  std::uniform_real_distribution<double> speed(7.0, 10.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const SpawnPoint& sp : chosen) {
    AgentState a;
    a.role = AgentRole::Passive;
    a.path_id = sp.path;
    a.s = sp.s;
    a.aggressiveness = unit(rng);
    a.target_speed = speed(rng) * (0.8 + 0.4 * a.aggressiveness);
    a.v = a.target_speed;
    a.goal_s = map.traffic_paths[sp.path].length();
    result.agents.push_back(a);
  }
  return result;
}

World make_world(std::shared_ptr<const TrackMap> map, PathPolyline route, AgentState active,
                 std::vector<AgentState> passives) {
  World w;
  w.paths = map->traffic_paths;
  w.paths.push_back(std::move(route));
  w.map = std::move(map);
  active.role = AgentRole::Active;
  active.path_id = w.route_index();
  w.active = active;
  w.passives = std::move(passives);
  return w;
}

EpisodeStatus episode_step(World& world, ActiveCommand active_cmd, std::span<const PassiveAction> passive_actions,
                           const SimConfig& cfg) {
  if (world.status.terminal()) {
    throw ContractError(std::string("episode_step called on a finished episode (") +
                        to_string(world.status.outcome) + ")");
  }
  if (passive_actions.size() != world.passives.size()) {
    throw ContractError("episode_step: " + std::to_string(passive_actions.size()) + " passive actions for " +
                        std::to_string(world.passives.size()) + " passives");
  }
  world.active = step_active(world.active, active_cmd, cfg, world.route());
  for (std::size_t i = 0; i < world.passives.size(); ++i) {
    AgentState& p = world.passives[i];
    p = step_passive(p, passive_actions[i], cfg, world.paths[p.path_id]);
  }
  ++world.status.step_count;

  world.passive_contacts.clear();
  std::vector<OrientedBox> boxes;
  boxes.reserve(world.passives.size());
  for (const AgentState& p : world.passives) boxes.push_back(box_of(p, world.paths));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (boxes_overlap(boxes[i], boxes[j])) world.passive_contacts.emplace_back(i, j);
    }
  }
  const OrientedBox ego = box_of(world.active, world.paths);
  const bool crashed = std::any_of(boxes.begin(), boxes.end(), [&](const OrientedBox& b) { return boxes_overlap(ego, b); });
  if (crashed) {
    world.status.outcome = Outcome::Crashed;
  } else if (world.active.s >= world.active.goal_s) {
    world.status.outcome = Outcome::Reached;
  }
  return world.status;
}

}  // namespace rondo
