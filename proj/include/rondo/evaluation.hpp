#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rondo/config.hpp"
#include "rondo/environment.hpp"
#include "rondo/network.hpp"
#include "rondo/sim.hpp"
#include "rondo/track_map.hpp"

namespace rondo {

enum class TrafficLevel { Low, Medium, High };

const char* to_string(TrafficLevel t);
TrafficLevel parse_traffic_level(const std::string& s);

// Passive cap for a scenario by its role: test 10/15/20, validation 6/12/18,
// junction 2/4/6. Other roles throw ValidationError.
int traffic_capacity(const TrackMap& map, TrafficLevel level);

// Active policy used to drive an episode. A null `params` means uniformly
// random commands.
struct ActivePolicy {
  NetworkShape shape;
  std::shared_ptr<const std::vector<double>> params;

  static ActivePolicy uniform_random() { return {}; }
};

struct EpisodeRecord {
  std::int64_t index = 0;
  std::size_t entry = 0;
  Outcome outcome = Outcome::Running;
  std::int64_t steps = 0;
  double ret = 0.0;
  bool stalled = false;  // hit the stall limit; counted as a crash
  int passives = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

// One decision of a recorded episode: the observed frame, the world before
// the command and the command issued.
struct RecordedStep {
  Frame frame;
  AgentState active;
  std::vector<AgentState> passives;
  std::vector<PerceivedVehicle> perceived;
  ActiveCommand command = ActiveCommand::NotPermitted;
};

struct EpisodeTrace {
  std::shared_ptr<const TrackMap> map;
  std::vector<PathPolyline> paths;  // traffic paths, then the active route
  std::size_t entry = 0;
  std::vector<RecordedStep> steps;
  EpisodeRecord record;
};

struct EpisodeOptions {
  bool greedy = true;
  std::int64_t stall_limit = 3000;
  std::uint64_t action_seed = 0;  // sampling / random-policy draws
  EpisodeTrace* trace = nullptr;
};

// Runs one episode to Reached or Crashed (or the stall limit).
EpisodeRecord run_episode(const EpisodeSpec& spec, PassiveDriver& passives, const ActivePolicy& policy,
                          const EpisodeOptions& opts);

struct MetricsReport {
  double reaches_pct = 0.0;
  double crashes_pct = 0.0;
  double total_steps = 0.0;          // mean episode length
  std::int64_t total_steps_sum = 0;  // raw sum over episodes
  double mean_return = 0.0;
  std::int64_t episodes = 0;
  std::int64_t stalled = 0;
  std::vector<EpisodeRecord> records;
};

// Metrics from raw records. crashes_pct is 1 - reaches_pct so the pair sums
// to exactly 1.
MetricsReport summarize(std::vector<EpisodeRecord> records);

struct ExperimentSetup {
  std::shared_ptr<const TrackMap> map;
  ActivePolicy policy;
  std::int64_t episodes = 3000;
  int max_passives = 0;
  bool noise = false;
  // Every episode gets freshly reshaped entry lanes (junction tests vary the
  // junction angle this way).
  bool reshape_entries = false;
  std::uint64_t seed = 0;
  int workers = 1;
  std::int64_t stall_limit = 3000;
  bool greedy = true;
  PassiveControl passive_control = PassiveControl::Following;
  std::shared_ptr<const PassivePolicy> passive_policy;
  NoiseConfig noise_config;
  SimConfig sim;
  RewardConfig rewards;
  PerceptionConfig perception;
  double active_target_speed = 8.0;
  double active_initial_speed = 0.0;
};

// Policies from checkpoint files; the role must match (ValidationError).
ActivePolicy load_active_policy(const std::filesystem::path& file);
std::shared_ptr<const PassivePolicy> load_passive_policy(const std::filesystem::path& file);

// Experiment on `map` at `level` with episodes, seed, workers, noise, passive
// control and dynamics taken from `cfg`. Junction maps get per-episode entry
// reshaping.
ExperimentSetup experiment_from_config(const RunConfig& cfg, std::shared_ptr<const TrackMap> map,
                                       ActivePolicy policy, TrafficLevel level);

// Episode i enters from entry i mod entry_count with seed derived from
// (seed, i); records come back in episode order whatever the worker count.
MetricsReport run_experiment(const ExperimentSetup& setup);

// Spec of episode i of an experiment, as run_experiment() builds it.
EpisodeSpec experiment_episode(const ExperimentSetup& setup, std::int64_t i);

// Arithmetic mean of three reports (low, medium, high); records are pooled.
MetricsReport average_over_levels(const std::vector<MetricsReport>& reports);

// Rows Reaches %, Crashes %, Total Steps; one column per model, in the
// order given.
struct ComparisonTable {
  std::vector<std::string> models;
  std::vector<std::string> rows = {"Reaches %", "Crashes %", "Total Steps"};
  std::vector<std::vector<double>> values;  // [row][model]

  std::string to_csv() const;
  std::string to_text() const;
};

ComparisonTable compare_models(const std::vector<std::pair<std::string, MetricsReport>>& reports);

// Published reference tables, kept for layout checks.
std::vector<std::pair<std::string, MetricsReport>> reference_unseen_roundabout();
std::vector<std::pair<std::string, MetricsReport>> reference_validation_roundabout();
std::vector<std::pair<std::string, MetricsReport>> reference_junction();

// Per-episode CSV: index,entry,outcome,steps,return,stalled,passives,seed.
void write_episode_csv(const std::filesystem::path& file, const MetricsReport& report);
// Summary JSON with the metrics, `config_json` echoed verbatim, the seed
// and the checkpoint hash.
void write_summary_json(const std::filesystem::path& file, const MetricsReport& report, const std::string& config_json,
                        std::uint64_t seed, const std::string& checkpoint_hash);

// Top-view composite of a recorded step (RGB).
std::vector<std::uint8_t> render_composite(const EpisodeTrace& trace, std::size_t step, int size_px);

// Writes, for every recorded step, "{episode}_{step}_composite.png" plus the
// four "{episode}_{step}_{channel}.png" semantic layers. Returns the paths
// written.
std::vector<std::filesystem::path> render_episode(const EpisodeTrace& trace, const std::filesystem::path& dir,
                                                  int composite_px = 400);

}  // namespace rondo
