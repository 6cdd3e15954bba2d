#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "rondo/environment.hpp"
#include "rondo/errors.hpp"
#include "rondo/orchestrator.hpp"
#include "test_support.hpp"
#include "tiny_run.hpp"

using namespace rondo;
using rondo::test::tiny_run;

namespace {

Candidate cand(double reaches, double steps, std::uint64_t version) {
  Candidate c;
  c.reaches = reaches;
  c.steps = steps;
  c.checkpoint.version = version;
  return c;
}

std::unique_ptr<ParameterStore> active_store(const RunConfig& c) {
  return std::make_unique<ParameterStore>(c.network.active, init_params(c.network.active, 1), c.learner);
}

}  // namespace

TEST(Instances, DefaultsGiveNineteenActivesAndCapacity114) {
  const RunConfig cfg;
  MapLibrary maps(cfg);
  const auto inst = build_instances(cfg, maps);
  const InstanceTotals t = instance_totals(inst);
  EXPECT_EQ(t.training_instances, 15);
  EXPECT_EQ(t.validation_instances, 4);
  EXPECT_EQ(t.training_instances + t.validation_instances, 19);
  EXPECT_EQ(t.passive_capacity, 114);
  EXPECT_EQ(t.passive_capacity, 6 * 4 + 3 * 4 + 6 * 3 + 6 * 4 + 9 * 4);
}

TEST(Instances, DefaultTablesAreVerbatim) {
  const RunConfig cfg;
  std::vector<int> caps, entries;
  for (const auto& s : cfg.train.training) {
    caps.push_back(s.max_passives);
    entries.push_back(s.entries);
  }
  caps.push_back(cfg.train.validation.max_passives);
  entries.push_back(cfg.train.validation.entries);
  EXPECT_EQ(caps, (std::vector<int>{6, 3, 6, 6, 9}));
  EXPECT_EQ(entries, (std::vector<int>{4, 4, 3, 4, 4}));
  std::vector<int> passive;
  for (const auto& s : cfg.passive_train.maps) passive.push_back(s.max_passives);
  EXPECT_EQ(passive, (std::vector<int>{16, 8, 12, 16, 16, 24}));
}

TEST(Instances, SeedsAreDistinctAndReproducible) {
  const RunConfig cfg;
  MapLibrary maps(cfg);
  const auto a = build_instances(cfg, maps);
  const auto b = build_instances(cfg, maps);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.size(); ++i) {
    seeds.insert(a[i].seed);
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].seed, derive_seed(cfg.run.master_seed, a[i].map_index, a[i].entry));
    EXPECT_EQ(a[i].validation, i >= 15);
  }
  EXPECT_EQ(seeds.size(), a.size());
}

TEST(Instances, OneMapOneEntry) {
  RunConfig cfg;
  cfg.train.training = {{"junction", 2, 1}};
  cfg.train.validation = {"junction", 2, 1};
  MapLibrary maps(cfg);
  const InstanceTotals t = instance_totals(build_instances(cfg, maps));
  EXPECT_EQ(t.training_instances, 1);
  EXPECT_EQ(t.validation_instances, 1);
}

TEST(Instances, EntryCountMustMatchTheMap) {
  RunConfig cfg;
  cfg.train.training[2].entries = 4;  // training_3 has three
  MapLibrary maps(cfg);
  EXPECT_THROW(build_instances(cfg, maps), ValidationError);
}

TEST(Instances, MapWithoutEntriesIsRejected) {
  rondo::test::TempDir dir("noentry");
  TrackMap m = load_map(rondo::test::map_file("training_3"));
  m.entry_lanes.clear();
  m.stop_lines.clear();
  RunConfig cfg;
  cfg.run.map_dir = dir.path().string();
  cfg.train.training = {{"empty", 2, 1}};
  cfg.train.validation = {"empty", 2, 1};
  bool rejected = false;
  try {
    save_map(m, dir.path() / "empty.json");
    MapLibrary maps(cfg);
    build_instances(cfg, maps);
  } catch (const ValidationError&) {
    rejected = true;
  } catch (const ParseError&) {
    rejected = true;
  }
  EXPECT_TRUE(rejected);
}

TEST(Instances, EpisodeCounterAndValidationEpisodes) {
  RunConfig cfg = tiny_run();
  MapLibrary maps(cfg);
  auto specs = build_instances(cfg, maps);
  EnvironmentInstance train(specs[0]);
  const EpisodeSpec e0 = train.next_episode(cfg);
  const EpisodeSpec e1 = train.next_episode(cfg);
  EXPECT_EQ(train.episode_counter(), 2);
  EXPECT_NE(e0.seed, e1.seed);
  EXPECT_EQ(e0.entry, specs[0].entry);

  const EnvironmentInstance val(specs[3]);
  EXPECT_TRUE(val.spec().validation);
  EXPECT_EQ(val.validation_episode(cfg, 5).seed, val.validation_episode(cfg, 5).seed);
  EXPECT_NE(val.validation_episode(cfg, 5).seed, val.validation_episode(cfg, 6).seed);
  EXPECT_EQ(val.episode_counter(), 0);
}

TEST(Instances, ReshapeFollowsTheEpisodeCounter) {
  RunConfig cfg = tiny_run();
  cfg.noise.reshape = true;
  cfg.noise.reshape_period = 3;
  MapLibrary maps(cfg);
  EnvironmentInstance inst(build_instances(cfg, maps)[0]);
  const auto original = maps.get("training_3");
  std::vector<PathPolyline> lanes;
  for (int k = 0; k < 7; ++k) lanes.push_back(inst.next_episode(cfg).map->entry_lanes[0].centerline);
  EXPECT_NE(lanes[0], original->entry_lanes[0].centerline);  // episode 0 reshapes
  EXPECT_EQ(lanes[1], lanes[0]);
  EXPECT_EQ(lanes[2], lanes[0]);
  EXPECT_NE(lanes[3], lanes[2]);
  EXPECT_EQ(lanes[5], lanes[3]);
  EXPECT_NE(lanes[6], lanes[5]);
}

TEST(Selection, HighestReachesThenFewerStepsThenEarlier) {
  const std::vector<Candidate> a{cand(0.90, 100, 1), cand(0.95, 100, 2), cand(0.93, 100, 3)};
  EXPECT_EQ(select_best_index(a), 1u);
  const std::vector<Candidate> tie{cand(0.95, 120, 1), cand(0.95, 110, 2)};
  EXPECT_EQ(select_best_index(tie), 1u);
  const std::vector<Candidate> same{cand(0.95, 110, 4), cand(0.95, 110, 2)};
  EXPECT_EQ(select_best(same).checkpoint.version, 2u);
  const std::vector<Candidate> one{cand(0.1, 5, 9)};
  EXPECT_EQ(select_best_index(one), 0u);
  EXPECT_THROW(select_best(std::vector<Candidate>{}), ContractError);
}

TEST(Selection, TrackerScoresAreMonotone) {
  BestTracker t;
  for (double r : {0.6, 0.9, 0.7, 0.85, 0.95, 0.2}) t.offer(cand(r, 100, 0));
  const auto& s = t.best_scores();
  ASSERT_EQ(s.size(), 6u);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i], s[i - 1]);
  EXPECT_EQ(s.back(), 0.95);
}

TEST(Training, ValidationSweepDoesNotTouchTheStore) {
  const RunConfig cfg = tiny_run();
  auto store = active_store(cfg);
  MapLibrary maps(cfg);
  std::vector<EnvironmentInstance> val;
  for (auto& s : build_instances(cfg, maps))
    if (s.validation) val.emplace_back(std::move(s));
  store->push(std::vector<double>(cfg.network.active.param_count(), 0.01));
  const auto before = *store->pull().params;
  auto driver = make_passive_driver(cfg);
  const ValidationResult r = validation_sweep(cfg, val, store->pull(), *driver);
  EXPECT_EQ(store->version(), 1u);
  EXPECT_EQ(*store->pull().params, before);
  EXPECT_EQ(r.episodes, 3 * cfg.train.validation_episodes);
  EXPECT_GE(r.reaches, 0.0);
  EXPECT_LE(r.reaches, 1.0);
}

TEST(Training, SweepsFollowTheCadenceAndBestIsKept) {
  RunConfig cfg = tiny_run();
  cfg.train.cadence = 1;
  cfg.train.episodes_per_instance = 4;
  auto store = active_store(cfg);
  rondo::test::TempDir dir("train");
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  opts.checkpoint_dir = dir.path();
  const double scores[] = {0.5, 0.8, 0.8, 0.4};
  const double steps[] = {90, 120, 100, 80};
  opts.validator = [&](int sweep, const ParameterSnapshot&) {
    return ValidationResult{scores[sweep - 1], steps[sweep - 1], 1};
  };
  const TrainResult r = train_active(cfg, *store, opts);
  ASSERT_EQ(r.sweeps.size(), 4u);
  EXPECT_EQ(r.episodes, 12);
  EXPECT_EQ(r.best.validation_reaches, 0.8);
  EXPECT_EQ(r.best.validation_steps, 100);
  EXPECT_EQ(r.best.counters.at("sweep"), 3);
  EXPECT_EQ(r.best_scores, (std::vector<double>{0.5, 0.8, 0.8, 0.8}));
  EXPECT_EQ(r.last.version, store->version());
  EXPECT_EQ(load_checkpoint(dir.path() / "best.ckpt"), r.best);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "last.ckpt"));

  int train_lines = 0, val_lines = 0;
  std::istringstream in(log.str());
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    (j["kind"] == "train" ? train_lines : val_lines)++;
  }
  EXPECT_EQ(train_lines, 12);
  EXPECT_EQ(val_lines, 4);
}

TEST(Training, SweepCountIsEpisodesOverCadence) {
  RunConfig cfg = tiny_run();
  cfg.train.training = {{"junction", 0, 1}};
  cfg.train.validation = {"junction", 0, 1};
  cfg.train.cadence = 5;
  cfg.train.episodes_per_instance = 20;
  cfg.learner.max_episode_steps = 20;
  auto store = active_store(cfg);
  TrainOptions opts;
  int calls = 0;
  opts.validator = [&](int, const ParameterSnapshot&) {
    ++calls;
    return ValidationResult{0.5, 10, 1};
  };
  const TrainResult r = train_active(cfg, *store, opts);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(r.sweeps.back().episodes_per_instance, 20);
}

TEST(Training, NoEpisodesMeansLastWithWarning) {
  RunConfig cfg = tiny_run();
  cfg.train.episodes_per_instance = 0;
  auto store = active_store(cfg);
  const TrainResult r = train_active(cfg, *store);
  EXPECT_TRUE(r.sweeps.empty());
  EXPECT_EQ(r.best, r.last);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Training, SingleWorkerRunsAreBitIdentical) {
  const RunConfig cfg = tiny_run(11);
  auto a = active_store(cfg);
  auto b = active_store(cfg);
  const TrainResult ra = train_active(cfg, *a);
  const TrainResult rb = train_active(cfg, *b);
  EXPECT_EQ(ra.best, rb.best);
  EXPECT_EQ(ra.last, rb.last);
  EXPECT_EQ(ra.last.version, 12u);
}

TEST(Training, PassivesLearnTogetherAndLogTheRatio) {
  RunConfig cfg = tiny_run();
  cfg.passive_train.maps = {{"training_3", 3, 3}, {"junction", 2, 1}};
  cfg.passive_train.episodes_per_instance = 1;
  cfg.passive_train.ratio_window = 10;
  cfg.learner.max_episode_steps = 60;
  cfg.network.passive.conv1_filters = 2;
  cfg.network.passive.conv2_filters = 2;
  cfg.network.passive.hidden = 8;
  ParameterStore store(cfg.network.passive, init_params(cfg.network.passive, 2), cfg.learner);
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  const TrainResult r = train_passives(cfg, store, opts);
  EXPECT_EQ(r.episodes, 2);
  EXPECT_EQ(store.version(), 2u);  // one push per multi-agent episode
  EXPECT_EQ(r.last.role, AgentRole::Passive);
  std::istringstream in(log.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("positive_ratio_avg"));
    EXPECT_GE(j["agents"].get<int>(), 1);
    ++n;
  }
  EXPECT_EQ(n, 2);
}

TEST(Training, PassiveLengthNormalisation) {
  RunConfig cfg;
  MapLibrary maps(cfg);
  const double l_max = passive_l_max(cfg, maps);
  for (const auto& s : cfg.passive_train.maps) {
    const double l = maps.get(s.map)->longest_traffic_path();
    EXPECT_GT(normalization_factor(l, l_max), 0.0);
    EXPECT_LE(normalization_factor(l, l_max), 1.0);
  }
  EXPECT_EQ(normalization_factor(l_max, l_max), 1.0);
}

TEST(Training, SeveralWorkersShareTheStore) {
  RunConfig cfg = tiny_run();
  cfg.run.workers = 3;
  cfg.train.cadence = 1;
  cfg.train.episodes_per_instance = 2;
  auto store = active_store(cfg);
  TrainOptions opts;
  opts.validator = [&](int, const ParameterSnapshot& snap) {
    EXPECT_EQ(snap.version, store->version());  // training is paused during a sweep
    return ValidationResult{0.5, 10, 1};
  };
  const TrainResult r = train_active(cfg, *store, opts);
  EXPECT_EQ(store->version(), 6u);
  EXPECT_EQ(r.sweeps.size(), 2u);
}
