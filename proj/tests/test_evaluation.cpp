#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "rondo/errors.hpp"
#include "rondo/evaluation.hpp"
#include "test_support.hpp"

using namespace rondo;
using rondo::test::bundled;

namespace {

EpisodeRecord rec(Outcome o, std::int64_t steps, double ret = 0.0) {
  EpisodeRecord r;
  r.outcome = o;
  r.steps = steps;
  r.ret = ret;
  return r;
}

MetricsReport report_with(int reached, int crashed, std::int64_t steps_each) {
  std::vector<EpisodeRecord> v;
  for (int i = 0; i < reached; ++i) v.push_back(rec(Outcome::Reached, steps_each, 1.0));
  for (int i = 0; i < crashed; ++i) v.push_back(rec(Outcome::Crashed, steps_each + 1, -1.0));
  return summarize(v);
}

// Always picks Permitted.
ActivePolicy permitted_policy() {
  ActivePolicy p;
  p.shape = NetworkShape::for_role(AgentRole::Active);
  auto params = std::vector<double>(p.shape.param_count(), 0.0);
  params[ParamLayout(p.shape).policy_b + static_cast<int>(ActiveCommand::Permitted)] = 10.0;
  p.params = std::make_shared<const std::vector<double>>(std::move(params));
  return p;
}

std::string slurp(const std::filesystem::path& f) {
  std::ifstream is(f, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Metrics, ReachesAndCrashesSumToOneExactly) {
  for (int n = 1; n <= 60; ++n) {
    for (int k = 0; k <= n; ++k) {
      const MetricsReport r = report_with(k, n - k, 10);
      ASSERT_EQ(r.reaches_pct + r.crashes_pct, 1.0) << k << "/" << n;
    }
  }
  for (const auto& table : {reference_unseen_roundabout(), reference_validation_roundabout(), reference_junction()})
    for (const auto& [name, r] : table) EXPECT_EQ(r.reaches_pct + r.crashes_pct, 1.0) << name;
}

TEST(Metrics, TotalStepsIsTheMeanAndTheSumIsKept) {
  const MetricsReport r = summarize({rec(Outcome::Reached, 10, 1), rec(Outcome::Crashed, 20, -1),
                                     rec(Outcome::Reached, 33, 0.5)});
  EXPECT_EQ(r.total_steps_sum, 63);
  EXPECT_DOUBLE_EQ(r.total_steps, 21.0);
  EXPECT_DOUBLE_EQ(r.reaches_pct, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean_return, 0.5 / 3.0);
  EXPECT_EQ(r.episodes, 3);
  EXPECT_THROW(summarize({}), ContractError);
  EXPECT_THROW(summarize({rec(Outcome::Running, 1)}), ContractError);
}

TEST(Metrics, AverageOverLevels) {
  const MetricsReport a = report_with(9, 1, 100), b = report_with(10, 0, 120), c = report_with(8, 2, 90);
  const MetricsReport m = average_over_levels({a, b, c});
  EXPECT_NEAR(m.reaches_pct, 0.9, 1e-12);
  EXPECT_EQ(m.reaches_pct + m.crashes_pct, 1.0);
  EXPECT_EQ(m.records.size(), 30u);
  const MetricsReport same = average_over_levels({a, a, a});
  EXPECT_DOUBLE_EQ(same.reaches_pct, a.reaches_pct);
  EXPECT_DOUBLE_EQ(same.total_steps, a.total_steps);
  EXPECT_THROW(average_over_levels({a, b}), ContractError);
  EXPECT_THROW(average_over_levels({a, b, c, a}), ContractError);
}

TEST(Metrics, AverageMatchesPooledRecordsForEqualSizes) {
  const MetricsReport a = report_with(7, 3, 50), b = report_with(2, 8, 80), c = report_with(5, 5, 65);
  const MetricsReport m = average_over_levels({a, b, c});
  const MetricsReport pooled = summarize(m.records);
  EXPECT_NEAR(m.reaches_pct, pooled.reaches_pct, 1e-12);
  EXPECT_NEAR(m.total_steps, pooled.total_steps, 1e-12);
  EXPECT_NEAR(m.mean_return, pooled.mean_return, 1e-12);
}

TEST(Compare, ReferenceTablesKeepTheirLayout) {
  const ComparisonTable t = compare_models(reference_unseen_roundabout());
  ASSERT_EQ(t.models.size(), 5u);
  EXPECT_EQ(t.models.back(), "Multi_env&noise");
  EXPECT_DOUBLE_EQ(t.values[0][4], 0.991);
  EXPECT_DOUBLE_EQ(t.values[1][4], 0.009);
  EXPECT_DOUBLE_EQ(t.values[2][4], 137.438);
  EXPECT_EQ(t.to_csv(),
            "metric,Single_env,Five_envs,Five_envs&noise,Multi_env,Multi_env&noise\n"
            "Reaches %,0.907,0.891,0.979,0.952,0.991\n"
            "Crashes %,0.093,0.109,0.021,0.048,0.009\n"
            "Total Steps,103.489,100.460,116.356,108.237,137.438\n");

  const ComparisonTable v = compare_models(reference_validation_roundabout());
  EXPECT_DOUBLE_EQ(v.values[0][0], 0.920);
  EXPECT_DOUBLE_EQ(v.values[0][1], 0.994);
  const ComparisonTable j = compare_models(reference_junction());
  EXPECT_DOUBLE_EQ(j.values[0][0], 0.919);
  EXPECT_DOUBLE_EQ(j.values[0][1], 0.970);
  EXPECT_EQ(j.to_text(),
            "             Single_env  Multi_env&noise\n"
            "Reaches %         0.919            0.970\n"
            "Crashes %         0.081            0.030\n"
            "Total Steps      97.011          128.182\n");
  EXPECT_THROW(compare_models({reference_junction()[0]}), ContractError);
}

TEST(Traffic, CapacitiesFollowTheMapRole) {
  const auto test_map = bundled("test_roundabout");
  const auto junction = bundled("junction");
  const auto validation = bundled("validation_roundabout");
  EXPECT_EQ(traffic_capacity(*test_map, TrafficLevel::Low), 10);
  EXPECT_EQ(traffic_capacity(*test_map, TrafficLevel::Medium), 15);
  EXPECT_EQ(traffic_capacity(*test_map, TrafficLevel::High), 20);
  EXPECT_EQ(traffic_capacity(*validation, TrafficLevel::Low), 6);
  EXPECT_EQ(traffic_capacity(*validation, TrafficLevel::High), 18);
  EXPECT_EQ(traffic_capacity(*junction, TrafficLevel::Low), 2);
  EXPECT_EQ(traffic_capacity(*junction, TrafficLevel::Medium), 4);
  EXPECT_EQ(traffic_capacity(*junction, TrafficLevel::High), 6);
  EXPECT_THROW(traffic_capacity(*bundled("training_1"), TrafficLevel::Low), ValidationError);
  EXPECT_THROW(parse_traffic_level("rush"), ValidationError);
}

TEST(Experiment, EmptyRoadAlwaysReached) {
  ExperimentSetup s;
  s.map = bundled("test_roundabout");
  s.policy = permitted_policy();
  s.episodes = 12;
  s.max_passives = 0;
  s.seed = 5;
  const MetricsReport r = run_experiment(s);
  EXPECT_EQ(r.reaches_pct, 1.0);
  EXPECT_EQ(r.crashes_pct, 0.0);
  EXPECT_EQ(r.stalled, 0);
  for (const auto& e : r.records) EXPECT_EQ(e.entry, static_cast<std::size_t>(e.index) % s.map->entry_count());
}

TEST(Experiment, RecordsDoNotDependOnWorkerCount) {
  RunConfig cfg;
  cfg.run.master_seed = 31;
  cfg.evaluation.episodes = 16;
  ExperimentSetup s = experiment_from_config(cfg, bundled("validation_roundabout"), ActivePolicy::uniform_random(),
                                             TrafficLevel::Low);
  EXPECT_EQ(s.max_passives, 6);
  const MetricsReport one = run_experiment(s);
  s.workers = 3;
  const MetricsReport three = run_experiment(s);
  EXPECT_EQ(one.records, three.records);
  s.workers = 1;
  EXPECT_EQ(run_experiment(s).records, one.records);
  s.seed = 32;
  EXPECT_NE(run_experiment(s).records, one.records);
}

TEST(Experiment, JunctionEpisodesReshapeTheEntry) {
  RunConfig cfg;
  const auto junction = bundled("junction");
  const ExperimentSetup s = experiment_from_config(cfg, junction, ActivePolicy::uniform_random(), TrafficLevel::Low);
  EXPECT_TRUE(s.reshape_entries);
  const EpisodeSpec a = experiment_episode(s, 0), b = experiment_episode(s, 1);
  EXPECT_NE(a.map->entry_lanes[0].centerline, junction->entry_lanes[0].centerline);
  EXPECT_NE(a.map->entry_lanes[0].centerline, b.map->entry_lanes[0].centerline);
  EXPECT_EQ(experiment_episode(s, 0).map->entry_lanes[0].centerline, a.map->entry_lanes[0].centerline);
  const ExperimentSetup t =
      experiment_from_config(cfg, bundled("test_roundabout"), ActivePolicy::uniform_random(), TrafficLevel::Low);
  EXPECT_FALSE(t.reshape_entries);
}

TEST(Experiment, RejectsMismatchedCheckpointShape) {
  ExperimentSetup s;
  s.map = bundled("test_roundabout");
  s.policy.shape = NetworkShape::for_role(AgentRole::Passive);
  s.policy.params = std::make_shared<const std::vector<double>>(s.policy.shape.param_count(), 0.0);
  s.episodes = 1;
  EXPECT_THROW(run_experiment(s), ContractError);
}

TEST(Reports, CsvAndSummaryJson) {
  rondo::test::TempDir dir("reports");
  MetricsReport r = summarize({rec(Outcome::Reached, 10, 1), rec(Outcome::Crashed, 20, -1)});
  write_episode_csv(dir.path() / "e.csv", r);
  std::istringstream csv(slurp(dir.path() / "e.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "index,entry,outcome,steps,return,stalled,passives,seed");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 2);

  write_summary_json(dir.path() / "s.json", r, R"({"run":{"name":"x"}})", 77, "abcd");
  const auto j = nlohmann::json::parse(slurp(dir.path() / "s.json"));
  EXPECT_EQ(j["metrics"]["reaches_pct"].get<double>(), 0.5);
  EXPECT_EQ(j["metrics"]["total_steps_sum"].get<int>(), 30);
  EXPECT_EQ(j["seed"].get<std::uint64_t>(), 77u);
  EXPECT_EQ(j["checkpoint_hash"].get<std::string>(), "abcd");
  EXPECT_EQ(j["config"]["run"]["name"].get<std::string>(), "x");
}

TEST(Render, OneStepGivesCompositePlusFourLayers) {
  rondo::test::TempDir dir("render");
  ExperimentSetup s;
  s.map = bundled("test_roundabout");
  s.max_passives = 6;
  s.seed = 3;
  const EpisodeSpec spec = experiment_episode(s, 4);
  PassiveDriver driver(PassiveControl::Following);
  EpisodeTrace trace;
  EpisodeOptions opts;
  opts.trace = &trace;
  opts.action_seed = 1;
  run_episode(spec, driver, ActivePolicy::uniform_random(), opts);
  ASSERT_GE(trace.steps.size(), 1u);
  trace.steps.resize(1);
  trace.record.index = 4;

  const auto files = render_episode(trace, dir.path(), 120);
  ASSERT_EQ(files.size(), 5u);
  EXPECT_EQ(files[0].filename(), "4_0_composite.png");
  for (int c = 0; c < 4; ++c) {
    EXPECT_EQ(files[1 + c].filename(), layer_filename(4, 0, static_cast<Channel>(c)));
  }

  // Layers straight from the perception module for the recorded state.
  const RecordedStep& st = trace.steps[0];
  const Pose pose = world_pose(st.active, trace.paths);
  const PathPolyline& route = trace.paths.back();
  const SemanticLayer fresh[4] = {
      rasterize_obstacles(pose, st.perceived),
      rasterize_path(pose, forward_points(route, st.active.s, spec.perception.path_lookahead),
                     spec.perception.path_half_width),
      rasterize_navigable(pose, trace.map->navigable),
      rasterize_stopline(pose, trace.map->stop_lines[trace.entry]),
  };
  for (int c = 0; c < 4; ++c) {
    const auto dump = dir.path() / ("dump_" + std::to_string(c) + ".png");
    write_layer_png(fresh[c], dump);
    EXPECT_EQ(slurp(files[1 + c]), slurp(dump)) << to_string(static_cast<Channel>(c));
  }
  EXPECT_GT(fresh[2].count(), 0);
}
