#include "rondo/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rondo/errors.hpp"

#ifndef RONDO_DEFAULT_MAP_DIR
#define RONDO_DEFAULT_MAP_DIR "maps"
#endif

namespace rondo {

using nlohmann::json;

namespace {

json slot_json(const MapSlot& s) { return {{"map", s.map}, {"max_passives", s.max_passives}, {"entries", s.entries}}; }

json slots_json(const std::vector<MapSlot>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(slot_json(s));
  return a;
}

json shape_json(const NetworkShape& s) {
  return {{"input_channels", s.input_channels}, {"input_size", s.input_size},
          {"conv1_filters", s.conv1_filters},   {"conv1_kernel", s.conv1_kernel},
          {"conv1_stride", s.conv1_stride},     {"conv2_filters", s.conv2_filters},
          {"conv2_kernel", s.conv2_kernel},     {"conv2_stride", s.conv2_stride},
          {"hidden", s.hidden},                 {"nonvisual", s.nonvisual}};
}

json to_json(const RunConfig& c) {
  json j;
  j["run"] = {{"name", c.run.name}, {"master_seed", c.run.master_seed}, {"workers", c.run.workers},
              {"map_dir", c.run.map_dir}};
  j["train"] = {{"training", slots_json(c.train.training)},
                {"validation", slot_json(c.train.validation)},
                {"cadence", c.train.cadence},
                {"episodes_per_instance", c.train.episodes_per_instance},
                {"validation_episodes", c.train.validation_episodes},
                {"passive_control", c.train.passive_control},
                {"passive_checkpoint", c.train.passive_checkpoint}};
  j["passive_train"] = {{"maps", slots_json(c.passive_train.maps)},
                        {"episodes_per_instance", c.passive_train.episodes_per_instance},
                        {"ratio_window", c.passive_train.ratio_window}};
  const NoiseConfig& n = c.noise;
  j["noise"] = {{"sigma_pos", n.sigma_pos},
                {"sigma_size", n.sigma_size},
                {"sigma_heading", n.sigma_heading},
                {"p_dropout", n.p_dropout},
                {"path_magnitude", n.path_magnitude},
                {"path_span", n.path_span},
                {"reshape_magnitude", n.reshape_magnitude},
                {"reshape_period", n.reshape_period},
                {"perception", n.perception},
                {"detection", n.detection},
                {"localization", n.localization},
                {"reshape", n.reshape}};
  const LearnerConfig& l = c.learner;
  j["learner"] = {{"gamma", l.gamma},
                  {"learning_rate", l.learning_rate},
                  {"rms_decay", l.rms_decay},
                  {"rms_epsilon", l.rms_epsilon},
                  {"grad_clip_norm", l.grad_clip_norm},
                  {"value_loss_weight", l.loss.value_loss_weight},
                  {"entropy_beta", l.loss.entropy_beta},
                  {"rule", to_string(l.rule)},
                  {"t_max", l.t_max},
                  {"max_episode_steps", l.max_episode_steps}};
  j["sim"] = {{"dt", c.sim.dt},
              {"comfort_decel", c.sim.comfort_decel},
              {"caution_speed", c.sim.caution_speed},
              {"accel", c.sim.accel},
              {"passive_brake", c.sim.passive_brake}};
  j["network"] = {{"active", shape_json(c.network.active)}, {"passive", shape_json(c.network.passive)}};
  j["evaluation"] = {{"map", c.evaluation.map},
                     {"traffic", c.evaluation.traffic},
                     {"episodes", c.evaluation.episodes},
                     {"noise", c.evaluation.noise},
                     {"stall_limit", c.evaluation.stall_limit},
                     {"max_passives", c.evaluation.max_passives}};
  j["perception"] = {{"path_lookahead", c.perception.path_lookahead},
                     {"path_half_width", c.perception.path_half_width},
                     {"sample_interval", c.perception.sample_interval}};
  const RewardConfig& r = c.rewards;
  j["rewards"] = {{"reach", r.reach},
                  {"crash", r.crash},
                  {"active_step", r.active_step},
                  {"command_switch", r.command_switch},
                  {"passive_complete", r.passive_complete},
                  {"passive_collision", r.passive_collision},
                  {"passive_speed", r.passive_speed}};
  j["active"] = {{"target_speed", c.active.target_speed}, {"initial_speed", c.active.initial_speed}};
  return j;
}

// Typed reads that report the dotted field path on failure.
class Field {
 public:
  Field(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  Field at(const std::string& key) const {
    if (!j_.is_object() || !j_.contains(key)) throw ParseError("missing field " + join(key), 0, join(key));
    return {j_.at(key), join(key)};
  }
  Field at(std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }
  std::size_t size() const { return j_.size(); }

  template <typename T>
  void get(T& out) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!j_.is_number()) throw ParseError(path_ + ": expected a number", 0, path_);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!j_.is_boolean()) throw ParseError(path_ + ": expected true or false", 0, path_);
      } else if constexpr (std::is_integral_v<T>) {
        if (!j_.is_number_integer()) throw ParseError(path_ + ": expected an integer", 0, path_);
        if constexpr (std::is_unsigned_v<T>) {
          if (j_.is_number_integer() && !j_.is_number_unsigned() && j_.get<std::int64_t>() < 0) {
            throw ParseError(path_ + ": expected a non-negative integer", 0, path_);
          }
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j_.is_string()) throw ParseError(path_ + ": expected a string", 0, path_);
      }
      out = j_.get<T>();
    } catch (const json::exception& e) {
      throw ParseError(path_ + ": " + e.what(), 0, path_);
    }
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& j_;
  std::string path_;
};

MapSlot read_slot(const Field& f) {
  MapSlot s;
  f.at("map").get(s.map);
  f.at("max_passives").get(s.max_passives);
  f.at("entries").get(s.entries);
  return s;
}

std::vector<MapSlot> read_slots(const Field& f) {
  std::vector<MapSlot> v;
  for (std::size_t i = 0; i < f.size(); ++i) v.push_back(read_slot(f.at(i)));
  return v;
}

NetworkShape read_shape(const Field& f) {
  NetworkShape s;
  f.at("input_channels").get(s.input_channels);
  f.at("input_size").get(s.input_size);
  f.at("conv1_filters").get(s.conv1_filters);
  f.at("conv1_kernel").get(s.conv1_kernel);
  f.at("conv1_stride").get(s.conv1_stride);
  f.at("conv2_filters").get(s.conv2_filters);
  f.at("conv2_kernel").get(s.conv2_kernel);
  f.at("conv2_stride").get(s.conv2_stride);
  f.at("hidden").get(s.hidden);
  f.at("nonvisual").get(s.nonvisual);
  return s;
}

RunConfig from_json(const json& root) {
  const Field j(root, "");
  RunConfig c;
  const Field run = j.at("run");
  run.at("name").get(c.run.name);
  run.at("master_seed").get(c.run.master_seed);
  run.at("workers").get(c.run.workers);
  run.at("map_dir").get(c.run.map_dir);

  const Field train = j.at("train");
  c.train.training = read_slots(train.at("training"));
  c.train.validation = read_slot(train.at("validation"));
  train.at("cadence").get(c.train.cadence);
  train.at("episodes_per_instance").get(c.train.episodes_per_instance);
  train.at("validation_episodes").get(c.train.validation_episodes);
  train.at("passive_control").get(c.train.passive_control);
  train.at("passive_checkpoint").get(c.train.passive_checkpoint);

  const Field pt = j.at("passive_train");
  c.passive_train.maps = read_slots(pt.at("maps"));
  pt.at("episodes_per_instance").get(c.passive_train.episodes_per_instance);
  pt.at("ratio_window").get(c.passive_train.ratio_window);

  const Field n = j.at("noise");
  n.at("sigma_pos").get(c.noise.sigma_pos);
  n.at("sigma_size").get(c.noise.sigma_size);
  n.at("sigma_heading").get(c.noise.sigma_heading);
  n.at("p_dropout").get(c.noise.p_dropout);
  n.at("path_magnitude").get(c.noise.path_magnitude);
  n.at("path_span").get(c.noise.path_span);
  n.at("reshape_magnitude").get(c.noise.reshape_magnitude);
  n.at("reshape_period").get(c.noise.reshape_period);
  n.at("perception").get(c.noise.perception);
  n.at("detection").get(c.noise.detection);
  n.at("localization").get(c.noise.localization);
  n.at("reshape").get(c.noise.reshape);

  const Field l = j.at("learner");
  l.at("gamma").get(c.learner.gamma);
  l.at("learning_rate").get(c.learner.learning_rate);
  l.at("rms_decay").get(c.learner.rms_decay);
  l.at("rms_epsilon").get(c.learner.rms_epsilon);
  l.at("grad_clip_norm").get(c.learner.grad_clip_norm);
  l.at("value_loss_weight").get(c.learner.loss.value_loss_weight);
  l.at("entropy_beta").get(c.learner.loss.entropy_beta);
  std::string rule;
  l.at("rule").get(rule);
  try {
    c.learner.rule = parse_update_rule(rule);
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), 0, "learner.rule");
  }
  l.at("t_max").get(c.learner.t_max);
  l.at("max_episode_steps").get(c.learner.max_episode_steps);

  const Field s = j.at("sim");
  s.at("dt").get(c.sim.dt);
  s.at("comfort_decel").get(c.sim.comfort_decel);
  s.at("caution_speed").get(c.sim.caution_speed);
  s.at("accel").get(c.sim.accel);
  s.at("passive_brake").get(c.sim.passive_brake);

  const Field net = j.at("network");
  c.network.active = read_shape(net.at("active"));
  c.network.passive = read_shape(net.at("passive"));

  const Field ev = j.at("evaluation");
  ev.at("map").get(c.evaluation.map);
  ev.at("traffic").get(c.evaluation.traffic);
  ev.at("episodes").get(c.evaluation.episodes);
  ev.at("noise").get(c.evaluation.noise);
  ev.at("stall_limit").get(c.evaluation.stall_limit);
  ev.at("max_passives").get(c.evaluation.max_passives);

  const Field p = j.at("perception");
  p.at("path_lookahead").get(c.perception.path_lookahead);
  p.at("path_half_width").get(c.perception.path_half_width);
  p.at("sample_interval").get(c.perception.sample_interval);

  const Field r = j.at("rewards");
  r.at("reach").get(c.rewards.reach);
  r.at("crash").get(c.rewards.crash);
  r.at("active_step").get(c.rewards.active_step);
  r.at("command_switch").get(c.rewards.command_switch);
  r.at("passive_complete").get(c.rewards.passive_complete);
  r.at("passive_collision").get(c.rewards.passive_collision);
  r.at("passive_speed").get(c.rewards.passive_speed);

  const Field a = j.at("active");
  a.at("target_speed").get(c.active.target_speed);
  a.at("initial_speed").get(c.active.initial_speed);
  return c;
}

// Overlays `patch` on `base`. Objects merge key by key and must only use
// keys that exist in `base`; anything else replaces the value.
void overlay(json& base, const json& patch, const std::string& path) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ParseError("unknown config key " + key, 0, key);
    overlay(base[it.key()], it.value(), key);
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParseError("override must look like key=value, got '" + assignment + "'", 0, assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &root;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked += (walked.empty() ? "" : ".") + part;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw ParseError("expected an array index in override key " + walked, 0, walked);
      }
      if (idx >= node->size()) throw ParseError("array index out of range in override key " + walked, 0, walked);
      node = &(*node)[idx];
    } else {
      if (!node->is_object() || !node->contains(part)) throw ParseError("unknown config key " + walked, 0, walked);
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // A plain string that happens to look like a number stays a string when
  // the target field is a string.
  if (node->is_string() && !value.is_string()) value = text;
  overlay(*node, value, key);
}

}  // namespace

void RunConfig::validate() const {
  if (run.workers < 1) throw ValidationError("run.workers must be >= 1");
  if (run.name.empty()) throw ValidationError("run.name must not be empty");
  auto check_slots = [](const std::vector<MapSlot>& v, const std::string& where) {
    if (v.empty()) throw ValidationError(where + " must list at least one map");
    for (const MapSlot& s : v) {
      if (s.map.empty()) throw ValidationError(where + ": empty map name");
      if (s.max_passives < 0) throw ValidationError(where + ": max_passives must be >= 0");
      if (s.entries < 1) throw ValidationError(where + ": map '" + s.map + "' must have at least one entry");
    }
  };
  check_slots(train.training, "train.training");
  check_slots({train.validation}, "train.validation");
  check_slots(passive_train.maps, "passive_train.maps");
  if (train.cadence < 1) throw ValidationError("train.cadence must be >= 1");
  if (train.episodes_per_instance < 0) throw ValidationError("train.episodes_per_instance must be >= 0");
  if (train.validation_episodes < 1) throw ValidationError("train.validation_episodes must be >= 1");
  parse_passive_control(train.passive_control);
  if (train.passive_control == "policy" && train.passive_checkpoint.empty()) {
    throw ValidationError("train.passive_control = policy needs train.passive_checkpoint");
  }
  if (passive_train.episodes_per_instance < 0) throw ValidationError("passive_train.episodes_per_instance must be >= 0");
  if (passive_train.ratio_window < 1) throw ValidationError("passive_train.ratio_window must be >= 1");
  noise.validate();
  learner.validate();
  sim.validate();
  network.active.validate();
  network.passive.validate();
  auto check_role = [](const NetworkShape& s, AgentRole role, const std::string& where) {
    if (s.input_channels != kFramesPerStack * channel_count(role) || s.nonvisual != nonvisual_size(role) ||
        s.input_size != kGridSize) {
      throw ValidationError(where + ": input_channels, input_size and nonvisual are fixed by the agent role (" +
                            std::to_string(kFramesPerStack * channel_count(role)) + ", " + std::to_string(kGridSize) +
                            ", " + std::to_string(nonvisual_size(role)) + ")");
    }
  };
  check_role(network.active, AgentRole::Active, "network.active");
  check_role(network.passive, AgentRole::Passive, "network.passive");
  if (evaluation.traffic != "low" && evaluation.traffic != "medium" && evaluation.traffic != "high") {
    throw ValidationError("evaluation.traffic must be low, medium or high");
  }
  if (evaluation.episodes < 1) throw ValidationError("evaluation.episodes must be >= 1");
  if (evaluation.stall_limit < 1) throw ValidationError("evaluation.stall_limit must be >= 1");
  if (evaluation.max_passives < -1) throw ValidationError("evaluation.max_passives must be >= -1");
  if (!(perception.path_lookahead > 0.0 && perception.path_half_width > 0.0)) {
    throw ValidationError("perception path lookahead and half width must be positive");
  }
  if (perception.sample_interval < 1) throw ValidationError("perception.sample_interval must be >= 1");
  if (!(active.target_speed > 0.0) || active.initial_speed < 0.0 || active.initial_speed > active.target_speed) {
    throw ValidationError("active: need target_speed > 0 and 0 <= initial_speed <= target_speed");
  }
}

std::filesystem::path default_map_dir() {
  if (const char* env = std::getenv("RONDO_MAP_DIR"); env && *env) return env;
  return RONDO_DEFAULT_MAP_DIR;
}

std::filesystem::path RunConfig::map_path(const std::string& name) const {
  const std::filesystem::path p(name);
  if (p.has_extension() || p.has_parent_path()) return p;
  const std::filesystem::path dir = run.map_dir.empty() ? default_map_dir() : std::filesystem::path(run.map_dir);
  return dir / (name + ".json");
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  json root = to_json(RunConfig{});
  if (!text.empty()) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      int line = 1;
      for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
      throw ParseError(std::string("config syntax error: ") + e.what(), line);
    }
    if (!doc.is_object()) throw ParseError("config document must be a JSON object", 1);
    overlay(root, doc, "");
  }
  for (const std::string& o : overrides) apply_override(root, o);
  RunConfig c = from_json(root);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open config " + file.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string run_config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace rondo
