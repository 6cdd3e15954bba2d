#include "rondo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rondo/errors.hpp"

namespace rondo {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(mix_seed(master) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL));
}

Frame active_frame(const World& world, std::span<const PerceivedVehicle> perceived, std::size_t entry,
                   const PerceptionConfig& cfg) {
  const Pose pose = world_pose(world.active, world.paths);
  const auto ahead = forward_points(world.route(), world.active.s, cfg.path_lookahead);
  Frame f;
  f.layers.reserve(4);
  f.layers.push_back(rasterize_obstacles(pose, perceived));
  f.layers.push_back(rasterize_path(pose, ahead, cfg.path_half_width));
  f.layers.push_back(rasterize_navigable(pose, world.map->navigable));
  f.layers.push_back(rasterize_stopline(pose, world.map->stop_lines.at(entry)));
  return f;
}

Frame passive_frame(const TrackMap& map, std::span<const PathPolyline> paths, std::span<const AgentState> passives,
                    std::size_t index, const AgentState* active, const PerceptionConfig& cfg) {
  const AgentState& self = passives[index];
  const Pose pose = world_pose(self, paths);
  std::vector<PerceivedVehicle> others;
  others.reserve(passives.size());
  for (std::size_t j = 0; j < passives.size(); ++j) {
    if (j != index) others.push_back(perceive_exact(passives[j], paths));
  }
  if (active) others.push_back(perceive_exact(*active, paths));
  const auto ahead = forward_points(paths[self.path_id], self.s, cfg.path_lookahead);
  Frame f;
  f.layers.reserve(3);
  f.layers.push_back(rasterize_obstacles(pose, others));
  f.layers.push_back(rasterize_path(pose, ahead, cfg.path_half_width));
  f.layers.push_back(rasterize_navigable(pose, map.navigable));
  return f;
}

FrameHistory::FrameHistory(int sample_interval) : interval_(sample_interval) {
  if (sample_interval < 1) throw ContractError("sample_interval must be >= 1");
}

void FrameHistory::push(Frame f) {
  frames_.push_back(std::move(f));
  const std::size_t keep = static_cast<std::size_t>((kFramesPerStack - 1) * interval_ + 1);
  while (frames_.size() > keep) frames_.pop_front();
}

FrameStack FrameHistory::stack() const {
  const std::vector<Frame> v(frames_.begin(), frames_.end());
  return build_frame_stack(v, interval_);
}

Observation make_observation(const FrameStack& stack, const NonVisualInput& nonvisual) {
  return {stack.flatten(), nonvisual.features};
}

const char* to_string(PassiveControl c) {
  switch (c) {
    case PassiveControl::Constant: return "constant";
    case PassiveControl::Following: return "following";
    case PassiveControl::Policy: return "policy";
  }
  return "?";
}

PassiveControl parse_passive_control(const std::string& s) {
  if (s == "constant") return PassiveControl::Constant;
  if (s == "following") return PassiveControl::Following;
  if (s == "policy") return PassiveControl::Policy;
  throw ValidationError("passive control must be constant, following or policy; got \"" + s + "\"");
}

double gap_ahead(const World& world, std::size_t i) {
  const AgentState& me = world.passives.at(i);
  const PathPolyline& path = world.paths[me.path_id];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < world.passives.size(); ++j) {
    const AgentState& o = world.passives[j];
    if (j == i || o.path_id != me.path_id) continue;
    double d = o.s - me.s;
    if (path.closed() && d < 0.0) d += path.length();
    if (d < 0.0) continue;
    best = std::min(best, d - 0.5 * (me.footprint.length + o.footprint.length));
  }
  return best;
}

PassiveDriver::PassiveDriver(PassiveControl mode, std::shared_ptr<const PassivePolicy> policy,
                             PerceptionConfig perception)
    : mode_(mode), policy_(std::move(policy)), perception_(perception) {
  if (mode_ == PassiveControl::Policy && !policy_) throw ContractError("policy passives need a passive policy");
  if (policy_) {
    if (policy_->shape.input_channels != kFramesPerStack * channel_count(AgentRole::Passive) ||
        policy_->shape.nonvisual != nonvisual_size(AgentRole::Passive) || policy_->shape.input_size != kGridSize) {
      throw ContractError("passive policy shape does not match passive inputs");
    }
  }
}

void PassiveDriver::reset(const World& world) {
  history_.clear();
  if (mode_ != PassiveControl::Policy) return;
  history_.assign(world.passives.size(), FrameHistory(perception_.sample_interval));
  observe(world);
}

void PassiveDriver::observe(const World& world) {
  if (mode_ != PassiveControl::Policy) return;
  for (std::size_t i = 0; i < world.passives.size(); ++i) history_[i].push(passive_frame(*world.map, world.paths, world.passives, i, &world.active, perception_));
}

std::vector<PassiveAction> PassiveDriver::act(const World& world) {
  std::vector<PassiveAction> out(world.passives.size(), PassiveAction::Keep);
  if (mode_ == PassiveControl::Constant) return out;
  for (std::size_t i = 0; i < world.passives.size(); ++i) {
    const AgentState& p = world.passives[i];
    if (mode_ == PassiveControl::Following) {
      const double headway = 2.0 + 1.5 * p.v;
      const double gap = gap_ahead(world, i);
      if (gap < headway) {
        out[i] = PassiveAction::Brake;
      } else if (p.v < p.target_speed) {
        out[i] = PassiveAction::Accelerate;
      }
      continue;
    }
    const double goal_len = world.paths[p.path_id].length();
    const Observation obs = make_observation(history_[i].stack(), encode_nonvisual(p, goal_len));
    const NetOutput o = forward(policy_->shape, *policy_->params, obs);
    out[i] = static_cast<PassiveAction>(greedy_action(o.policy));
  }
  return out;
}

ActiveEpisode::ActiveEpisode(EpisodeSpec spec, PassiveDriver& passives)
    : spec_(std::move(spec)), passives_(&passives), noise_rng_(derive_seed(spec_.seed, 1)),
      history_(spec_.perception.sample_interval) {
  if (!spec_.map) throw ContractError("episode needs a map");
  if (spec_.entry >= spec_.map->entry_lanes.size()) {
    throw ContractError("entry index " + std::to_string(spec_.entry) + " out of range for map '" + spec_.map->name +
                        "'");
  }
  spec_.sim.validate();
  spec_.noise.validate();
  SpawnResult spawn =
      spawn_passives(*spec_.map, spec_.max_passives, derive_seed(spec_.seed, 2), spec_.min_passives);
  warnings_ = std::move(spawn.warnings);

  PathPolyline route = active_route(*spec_.map, spec_.entry);
  if (spec_.noise.localization) route = perturb_path_bezier(route, spec_.noise, noise_rng_);

  AgentState active;
  active.role = AgentRole::Active;
  active.v = spec_.active_initial_speed;
  active.target_speed = spec_.active_target_speed;
  active.aggressiveness = std::uniform_real_distribution<double>(0.0, 1.0)(noise_rng_);
  active.last_command = ActiveCommand::NotPermitted;
  active.goal_s = route.length();
  world_ = make_world(spec_.map, std::move(route), active, std::move(spawn.agents));
  passives_->reset(world_);
  sense();
}

void ActiveEpisode::sense() {
  if (spec_.noise.perception || spec_.noise.detection) {
    perceived_ = perturb_perception(world_.passives, world_.paths, spec_.noise, noise_rng_);
  } else {
    perceived_.clear();
    for (const AgentState& p : world_.passives) perceived_.push_back(perceive_exact(p, world_.paths));
  }
  history_.push(active_frame(world_, perceived_, spec_.entry, spec_.perception));
}

Observation ActiveEpisode::observe() {
  return make_observation(history_.stack(), encode_nonvisual(world_.active, world_.route().length()));
}

double ActiveEpisode::act(int action) {
  if (action < 0 || action >= kActionCount) throw ContractError("active action index out of range");
  const auto cmd = static_cast<ActiveCommand>(action);
  const RewardConfig& r = spec_.rewards;
  double reward = r.active_step;
  if (cmd != world_.active.last_command) reward += r.command_switch;
  const auto passive_actions = passives_->act(world_);
  episode_step(world_, cmd, passive_actions, spec_.sim);
  if (world_.status.outcome == Outcome::Reached) reward += r.reach;
  if (world_.status.outcome == Outcome::Crashed) reward += r.crash;
  if (!terminal()) {
    passives_->observe(world_);
    sense();
  }
  return reward;
}

}  // namespace rondo
