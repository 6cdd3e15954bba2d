#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rondo/checkpoint.hpp"
#include "rondo/config.hpp"
#include "rondo/environment.hpp"
#include "rondo/evaluation.hpp"
#include "rondo/learner.hpp"
#include "rondo/track_map.hpp"

namespace rondo {

// Loads and caches maps by config name.
class MapLibrary {
 public:
  explicit MapLibrary(const RunConfig& cfg) : cfg_(&cfg) {}
  std::shared_ptr<const TrackMap> get(const std::string& name);

 private:
  const RunConfig* cfg_;
  std::map<std::string, std::shared_ptr<const TrackMap>> cache_;
};

struct InstanceSpec {
  std::size_t id = 0;
  std::string map_name;
  std::size_t map_index = 0;  // position in the training list; validation comes after
  std::shared_ptr<const TrackMap> map;
  std::size_t entry = 0;
  int max_passives = 0;
  std::uint64_t seed = 0;  // derive_seed(master, map_index, entry)
  bool validation = false;
};

// One instance per (training map, entry lane), then one per validation entry
// lane (flagged pull-only). Throws ValidationError when a map has no entry
// lanes or its entry count differs from the config.
std::vector<InstanceSpec> build_instances(const RunConfig& cfg, MapLibrary& maps);

struct InstanceTotals {
  int training_instances = 0;
  int validation_instances = 0;
  int passive_capacity = 0;  // sum of max_passives over all instances
};

InstanceTotals instance_totals(std::span<const InstanceSpec> instances);

// A training or validation slot with its own episode counter and reshaped
// lanes.
class EnvironmentInstance {
 public:
  explicit EnvironmentInstance(InstanceSpec spec);

  // Spec for the next training episode: reshapes the entry lanes when the
  // counter hits the reshape period, derives the episode seed and advances
  // the counter.
  EpisodeSpec next_episode(const RunConfig& cfg);
  // Spec for validation episode k (same k gives the same episode in every
  // sweep); never touches the counter.
  EpisodeSpec validation_episode(const RunConfig& cfg, std::int64_t k) const;

  const InstanceSpec& spec() const { return spec_; }
  std::int64_t episode_counter() const { return counter_; }
  const TrackMap& current_map() const { return *current_; }

 private:
  InstanceSpec spec_;
  std::shared_ptr<const TrackMap> current_;
  std::int64_t counter_ = 0;
  Rng reshape_rng_;
};

struct Candidate {
  Checkpoint checkpoint;
  double reaches = 0.0;
  double steps = 0.0;
};

// Ordering used for model selection: higher reaches, then fewer mean steps,
// then the earlier (lower) version.
bool better_candidate(const Candidate& a, const Candidate& b);
std::size_t select_best_index(std::span<const Candidate> history);
const Candidate& select_best(std::span<const Candidate> history);

// Incremental best tracking across sweeps.
class BestTracker {
 public:
  // Returns true when `c` becomes the new best.
  bool offer(Candidate c);
  bool has_best() const { return best_.has_value(); }
  const Candidate& best() const { return *best_; }
  // Best score after each offer; monotone non-decreasing.
  const std::vector<double>& best_scores() const { return scores_; }

 private:
  std::optional<Candidate> best_;
  std::vector<double> scores_;
};

struct ValidationResult {
  double reaches = 0.0;
  double steps = 0.0;
  std::int64_t episodes = 0;
};

struct SweepRecord {
  int sweep = 0;
  std::uint64_t version = 0;
  std::int64_t episodes_per_instance = 0;
  ValidationResult result;
  bool improved = false;
};

struct TrainOptions {
  std::ostream* log = nullptr;              // one JSON record per line
  std::filesystem::path checkpoint_dir;     // empty: nothing written
  // Replaces the validation sweep (tests inject scores with it).
  std::function<ValidationResult(int sweep, const ParameterSnapshot&)> validator;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<SweepRecord> sweeps;
  std::vector<double> best_scores;
  std::vector<std::string> warnings;
  std::int64_t episodes = 0;  // all training episodes, all instances
};

// Frozen-weight sweep over the validation instances: greedy, pull-only.
ValidationResult validation_sweep(const RunConfig& cfg, std::span<const EnvironmentInstance> validation,
                                  const ParameterSnapshot& snapshot, PassiveDriver& passives);

// Builds the passive driver used by active training from the config.
std::unique_ptr<PassiveDriver> make_passive_driver(const RunConfig& cfg);

TrainResult train_active(const RunConfig& cfg, ParameterStore& store, const TrainOptions& opts = {});

struct PassiveEpisodeStats {
  int agents = 0;
  int completed = 0;
  int collided = 0;
  std::int64_t steps = 0;
  double positive_ratio = 0.0;
  std::uint64_t version = 0;
};

// One multi-agent episode on `map`: all passives share the policy pulled at
// the start, each agent's returns are scaled by l / l_max with l its path
// length, and the summed gradient is pushed once at the end.
PassiveEpisodeStats run_passive_episode(std::shared_ptr<const TrackMap> map, int max_passives, double l_max,
                                        std::uint64_t seed, const RunConfig& cfg, ParameterStore& store,
                                        std::mt19937_64& rng);

// Longest traffic path over the passive training maps.
double passive_l_max(const RunConfig& cfg, MapLibrary& maps);

TrainResult train_passives(const RunConfig& cfg, ParameterStore& store, const TrainOptions& opts = {});

}  // namespace rondo
