#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rondo/environment.hpp"
#include "rondo/learner.hpp"
#include "rondo/network.hpp"
#include "rondo/noise.hpp"
#include "rondo/sim.hpp"

namespace rondo {

// One scenario in a training set. `entries` is the expected entry-lane
// count; it must match the map file.
struct MapSlot {
  std::string map;
  int max_passives = 0;
  int entries = 0;
  friend bool operator==(const MapSlot&, const MapSlot&) = default;
};

struct RunSection {
  std::string name = "run";
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::string map_dir;  // empty: the bundled maps directory
  friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct TrainSection {
  std::vector<MapSlot> training = {
      {"training_1", 6, 4}, {"training_2", 3, 4}, {"training_3", 6, 3}, {"training_4", 6, 4}};
  MapSlot validation = {"validation_roundabout", 9, 4};
  std::int64_t cadence = 500;                 // episodes per instance between validation sweeps
  std::int64_t episodes_per_instance = 2000;
  std::int64_t validation_episodes = 100;     // per validation instance
  std::string passive_control = "following";  // constant | following | policy
  std::string passive_checkpoint;             // required for "policy"
  friend bool operator==(const TrainSection&, const TrainSection&) = default;
};

struct PassiveTrainSection {
  std::vector<MapSlot> maps = {{"training_1", 16, 4}, {"training_2", 8, 4},           {"training_3", 12, 3},
                               {"training_4", 16, 4}, {"validation_roundabout", 16, 4}, {"test_roundabout", 24, 4}};
  std::int64_t episodes_per_instance = 2000;
  int ratio_window = 100;  // moving-average window for the positive-episode ratio
  friend bool operator==(const PassiveTrainSection&, const PassiveTrainSection&) = default;
};

struct EvaluationSection {
  std::string map = "test_roundabout";
  std::string traffic = "high";
  std::int64_t episodes = 3000;
  bool noise = false;
  // Evaluation has no step cap; an episode this long is recorded as a
  // crash flagged "stalled" so a frozen policy cannot hang a run.
  std::int64_t stall_limit = 3000;
  int max_passives = -1;  // -1: from the traffic table of the map's role
  friend bool operator==(const EvaluationSection&, const EvaluationSection&) = default;
};

struct ActiveSection {
  double target_speed = 8.0;
  double initial_speed = 0.0;
  friend bool operator==(const ActiveSection&, const ActiveSection&) = default;
};

struct NetworkSection {
  NetworkShape active = NetworkShape::for_role(AgentRole::Active);
  NetworkShape passive = NetworkShape::for_role(AgentRole::Passive);
  friend bool operator==(const NetworkSection&, const NetworkSection&) = default;
};

struct RunConfig {
  RunSection run;
  TrainSection train;
  PassiveTrainSection passive_train;
  NoiseConfig noise;
  LearnerConfig learner;
  SimConfig sim;
  NetworkSection network;
  EvaluationSection evaluation;
  PerceptionConfig perception;
  RewardConfig rewards;
  ActiveSection active;

  void validate() const;
  std::filesystem::path map_path(const std::string& name) const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Builds a config from the defaults, then the JSON document `text` (keys it
// omits keep their defaults; unknown keys are a ParseError), then each
// "dotted.key=value" override in order. Values parse as JSON when they can
// and as plain strings otherwise.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});
RunConfig default_run_config();

// Full resolved config as JSON; parse_run_config() of this text returns an
// equal config.
std::string run_config_to_json(const RunConfig& cfg);

std::filesystem::path default_map_dir();

}  // namespace rondo
