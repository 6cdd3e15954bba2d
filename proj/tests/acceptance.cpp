// Acceptance suite: one PASS/FAIL line per criterion. Run all of them, or
// pass criterion numbers to run a subset (e.g. `acceptance 1 4 11`).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "net_oracle.hpp"
#include "raster_oracle.hpp"
#include "rondo/checkpoint.hpp"
#include "rondo/config.hpp"
#include "rondo/environment.hpp"
#include "rondo/evaluation.hpp"
#include "rondo/learner.hpp"
#include "rondo/noise.hpp"
#include "rondo/orchestrator.hpp"
#include "test_support.hpp"
#include "tiny_run.hpp"
#include "toy_env.hpp"

using namespace rondo;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const fs::path kSource = fs::path(RONDO_TEST_MAP_DIR).parent_path();

// 1. Every rasterized layer equals the per-cell oracle.
Verdict raster_oracle() {
  const char* maps[] = {"training_1", "training_2", "training_3", "training_4", "validation_roundabout",
                        "test_roundabout", "junction"};
  std::mt19937_64 rng(20240601);
  int exact[4] = {0, 0, 0, 0};
  const int scenes = 100;
  for (int i = 0; i < scenes; ++i) {
    const auto m = test::bundled(maps[i % 7]);
    const oracle::Scene sc = oracle::random_scene(*m, rng);
    exact[0] += rasterize_obstacles(sc.observer, sc.vehicles) == oracle::obstacles(sc.observer, sc.vehicles);
    exact[1] += rasterize_path(sc.observer, sc.route, 1.0) == oracle::path(sc.observer, sc.route, 1.0);
    exact[2] += rasterize_navigable(sc.observer, m->navigable) == oracle::navigable(sc.observer, m->navigable);
    exact[3] += rasterize_stopline(sc.observer, sc.stop_line) == oracle::stopline(sc.observer, sc.stop_line);
  }
  const bool ok = exact[0] == scenes && exact[1] == scenes && exact[2] == scenes && exact[3] == scenes;
  return {ok, fmt("exact layers obstacles %g/100, path %g/100, navigable %g/100, ", exact[0], exact[1], exact[2]) +
                  fmt("stop line %g/100", exact[3])};
}

// 2. Analytic gradients against central differences on the miniature net.
Verdict gradient_check() {
  const NetworkShape s = oracle::tiny_shape();
  const LossWeights w{0.5, 0.01};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    const auto p = oracle::random_params(s, rng);
    const auto obs = oracle::random_observation(s, rng);
    const int action = static_cast<int>(rng() % kActionCount);
    const double ret = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    ForwardCache cache;
    const NetOutput out = forward(s, p, obs, &cache);
    std::vector<double> g(p.size(), 0.0);
    add_step_gradient(s, p, obs, cache, out, action, ret - out.value, ret, w, g);
    const auto fd = oracle::fd_gradient(s, p, obs, action, ret - out.value, ret, w, 1e-5);
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, oracle::rel_error(g[i], fd[i]));
  }
  return {worst <= 1e-4, fmt("20 seeds x %g parameters, worst relative error %.3g (limit 1e-4)",
                             static_cast<double>(s.param_count()), worst)};
}

// Wraps a real episode and keeps what the learner saw.
class Recording final : public Environment {
 public:
  explicit Recording(Environment& inner) : inner_(inner) {}
  Observation observe() override {
    obs.push_back(inner_.observe());
    return obs.back();
  }
  double act(int a) override {
    actions.push_back(a);
    rewards.push_back(inner_.act(a));
    return rewards.back();
  }
  bool terminal() const override { return inner_.terminal(); }
  double reward_scale() const override { return inner_.reward_scale(); }

  std::vector<Observation> obs;
  std::vector<int> actions;
  std::vector<double> rewards;

 private:
  Environment& inner_;
};

// 3. Delayed update: accumulator equals the per-step sum at the start
// snapshot, and does not move when other pushes land mid-episode.
Verdict delay_identity() {
  RunConfig cfg = test::tiny_run();
  cfg.learner.max_episode_steps = 400;
  const NetworkShape shape = cfg.network.active;
  const auto init = init_params(shape, 77);
  MapLibrary maps(cfg);
  EpisodeSpec spec;
  spec.map = maps.get("training_3");
  spec.entry = 1;
  spec.max_passives = 3;
  spec.seed = 4242;

  auto run = [&](bool inject, std::vector<double>& acc, Recording*& keep, std::uint64_t& version) {
    ParameterStore store(shape, init, cfg.learner);
    PassiveDriver driver(PassiveControl::Constant);
    auto ep = std::make_unique<ActiveEpisode>(spec, driver);
    auto rec = new Recording(*ep);
    std::mt19937_64 rng(9);
    std::mt19937_64 noise(3);
    const auto dummy = oracle::random_params(shape, noise, 0.05);
    const UpdateStats st = run_delayed_episode(*rec, store, rng, inject ? StepHook([&](std::int64_t) {
      store.push(dummy);
    }) : StepHook{}, &acc);
    version = st.version;
    keep = rec;
    return st;
  };
  std::vector<double> quiet, busy;
  Recording *rq = nullptr, *rb = nullptr;
  std::uint64_t vq = 0, vb = 0;
  const UpdateStats sq = run(false, quiet, rq, vq);
  run(true, busy, rb, vb);

  // Per-step recomputation at the start snapshot.
  // A truncated episode bootstraps from V of the observation taken after the last step.
  double boot = 0.0;
  if (!sq.terminal) boot = forward(shape, init, rq->obs.at(rq->actions.size())).value;
  const auto ret = oracle::returns_double_loop(rq->rewards, cfg.learner.gamma, 1.0, 1.0, boot);
  std::vector<double> sum(init.size(), 0.0);
  for (std::size_t k = 0; k < rq->actions.size(); ++k) {
    ForwardCache c;
    const NetOutput out = forward(shape, init, rq->obs[k], &c);
    std::vector<double> one(init.size(), 0.0);
    add_step_gradient(shape, init, rq->obs[k], c, out, rq->actions[k], ret[k] - out.value, ret[k], cfg.learner.loss,
                      one);
    for (std::size_t i = 0; i < one.size(); ++i) sum[i] += one[i];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) worst = std::max(worst, std::abs(sum[i] - quiet[i]));
  const bool identical = quiet == busy && rq->actions == rb->actions;
  const bool ok = worst <= 1e-6 && identical && vb == static_cast<std::uint64_t>(sq.steps) + 1;
  std::string detail = fmt("%g-step episode, max |accumulated - per-step sum| %.3g (limit 1e-6); ",
                           static_cast<double>(sq.steps), worst) +
                       fmt("%g injected pushes, accumulator ", static_cast<double>(vb - 1)) +
                       (identical ? "bit-identical" : "CHANGED");
  detail += sq.terminal ? " (terminal)" : " (truncated, bootstrapped)";
  delete rq;
  delete rb;
  return {ok, detail};
}

// 4. Returns against the double loop.
Verdict returns_oracle() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
  double worst = 0.0;
  int unit_factor = 0, boot = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 80;
    std::vector<double> r(n);
    for (auto& v : r) v = u(rng);
    const double gamma = trial % 10 == 0 ? 1.0 : unit(rng);
    const double l_max = 20.0 + 200.0 * unit(rng);
    const double l = trial % 3 == 0 ? l_max : l_max * (0.01 + 0.99 * unit(rng));
    const double b = trial % 2 == 0 ? 0.0 : 3.0 * u(rng);
    unit_factor += l == l_max;
    boot += b != 0.0;
    const auto got = normalized_returns(r, gamma, l, l_max, b);
    const auto want = oracle::returns_double_loop(r, gamma, l, l_max, b);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  return {worst <= 1e-12, fmt("1000 trajectories (%g with l = l_max, %g bootstrapped), max error %.3g (limit 1e-12)",
                              unit_factor, boot, worst)};
}

// 5. Default instance arithmetic and capacity tables.
Verdict configuration_arithmetic() {
  const RunConfig cfg = default_run_config();
  MapLibrary maps(cfg);
  const InstanceTotals t = instance_totals(build_instances(cfg, maps));
  std::vector<int> table1, table2;
  for (const auto& s : cfg.train.training) table1.push_back(s.max_passives);
  table1.push_back(cfg.train.validation.max_passives);
  for (const auto& s : cfg.passive_train.maps) table2.push_back(s.max_passives);
  const bool ok = t.training_instances + t.validation_instances == 19 && t.passive_capacity == 114 &&
                  table1 == std::vector<int>{6, 3, 6, 6, 9} && table2 == std::vector<int>{16, 8, 12, 16, 16, 24};
  std::ostringstream os;
  os << t.training_instances + t.validation_instances << " instances, passive capacity " << t.passive_capacity
     << ", capacities (";
  for (std::size_t i = 0; i < table1.size(); ++i) os << (i ? "," : "") << table1[i];
  os << ") and (";
  for (std::size_t i = 0; i < table2.size(); ++i) os << (i ? "," : "") << table2[i];
  os << ")";
  return {ok, os.str()};
}

// 6. reaches + crashes = 1 exactly.
Verdict metric_identity() {
  int reports = 0, bad = 0;
  std::mt19937_64 rng(6);
  for (int i = 0; i < 2000; ++i) {
    const int n = 1 + static_cast<int>(rng() % 3000);
    std::vector<EpisodeRecord> recs(static_cast<std::size_t>(n));
    for (auto& r : recs) {
      r.outcome = rng() % 7 ? Outcome::Reached : Outcome::Crashed;
      r.steps = 1 + static_cast<std::int64_t>(rng() % 400);
    }
    const MetricsReport m = summarize(recs);
    ++reports;
    bad += m.reaches_pct + m.crashes_pct != 1.0;
    if (i % 3 == 2) {
      const MetricsReport a = average_over_levels({m, summarize(recs), summarize({recs.front()})});
      ++reports;
      bad += a.reaches_pct + a.crashes_pct != 1.0;
    }
  }
  ExperimentSetup s;
  s.map = test::bundled("validation_roundabout");
  s.episodes = 30;
  s.max_passives = 12;
  s.seed = 66;
  const MetricsReport live = run_experiment(s);
  ++reports;
  bad += live.reaches_pct + live.crashes_pct != 1.0;
  for (const auto& table : {reference_unseen_roundabout(), reference_validation_roundabout(), reference_junction()}) {
    for (const auto& [name, r] : table) {
      ++reports;
      bad += r.reaches_pct + r.crashes_pct != 1.0;
    }
  }
  return {bad == 0, fmt("%g reports (random, averaged, a live experiment and the 9 reference columns), %g violations",
                        reports, bad)};
}

double hausdorff(const PathPolyline& a, const PathPolyline& b) {
  auto one_way = [](const PathPolyline& x, const PathPolyline& y) {
    double worst = 0;
    for (const Point2& p : x.vertices()) {
      double best = INFINITY;
      const auto& v = y.vertices();
      for (std::size_t k = 0; k + 1 < v.size(); ++k) best = std::min(best, point_segment_distance(p, v[k], v[k + 1]));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_way(a, b), one_way(b, a));
}

// 7. With noise off: perception is ground truth, paths and lanes unchanged.
Verdict zero_noise() {
  const NoiseConfig off = NoiseConfig::disabled();
  int perceived_bad = 0, perceived_total = 0;
  // Whole episodes: every perceived vehicle equals the exact one.
  for (const char* name : {"training_1", "test_roundabout", "junction"}) {
    EpisodeSpec spec;
    spec.map = test::bundled(name);
    spec.max_passives = 8;
    spec.seed = 17;
    spec.noise = off;
    PassiveDriver driver(PassiveControl::Following);
    ActiveEpisode ep(spec, driver);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 400 && !ep.terminal(); ++k) {
      const World& w = ep.world();
      for (std::size_t i = 0; i < w.passives.size(); ++i) {
        ++perceived_total;
        perceived_bad += !(ep.perceived()[i] == perceive_exact(w.passives[i], w.paths));
      }
      ep.act(static_cast<int>(rng() % kActionCount));
    }
  }
  double path_err = 0.0, lane_err = 0.0;
  NoiseConfig zero_reshape;
  zero_reshape.reshape_magnitude = 0.0;
  for (const char* name : {"training_1", "training_2", "training_3", "training_4", "validation_roundabout",
                           "test_roundabout", "junction"}) {
    const auto m = test::bundled(name);
    for (std::size_t e = 0; e < m->entry_count(); ++e) {
      const PathPolyline route = active_route(*m, e);
      Rng rng(e);
      path_err = std::max(path_err, hausdorff(perturb_path_bezier(route, off, rng), route));
    }
    Rng rng(3);
    const TrackMap r = maybe_reshape(0, *m, zero_reshape, rng);
    for (std::size_t e = 0; e < m->entry_count(); ++e) {
      lane_err = std::max(lane_err, hausdorff(r.entry_lanes[e].centerline, m->entry_lanes[e].centerline));
    }
  }
  const bool ok = perceived_bad == 0 && perceived_total > 0 && path_err <= 1e-6 && lane_err <= 1e-9;
  return {ok, fmt("%g/%g perceived vehicles differ from truth; path Hausdorff %.3g m (limit 1e-6); ", perceived_bad,
                  perceived_total, path_err) +
                  fmt("reshaped lane Hausdorff %.3g m (limit 1e-9)", lane_err)};
}

RunConfig smoke_config() { return load_run_config(kSource / "configs" / "smoke.json"); }

std::unique_ptr<ParameterStore> fresh_store(const RunConfig& cfg) {
  const NetworkShape& s = cfg.network.active;
  return std::make_unique<ParameterStore>(s, init_params(s, derive_seed(cfg.run.master_seed, 0xC0FFEE)), cfg.learner);
}

// 8. Same seed, single worker: identical checkpoints and evaluation records.
Verdict determinism() {
  RunConfig cfg = smoke_config();
  // 200 episodes: training_3 (3 entries) plus the junction (1 entry), 50 each.
  cfg.train.training = {{"training_3", 3, 3}, {"junction", 2, 1}};
  cfg.train.episodes_per_instance = 50;
  cfg.train.cadence = 25;
  cfg.train.validation_episodes = 5;
  cfg.run.workers = 1;
  cfg.learner.max_episode_steps = 300;
  test::TempDir a("det-a"), b("det-b");
  std::int64_t episodes = 0;
  for (const auto* dir : {&a, &b}) {
    auto store = fresh_store(cfg);
    TrainOptions opts;
    opts.checkpoint_dir = dir->path();
    episodes = train_active(cfg, *store, opts).episodes;
  }
  const bool best_same = file_hash(a.path() / "best.ckpt") == file_hash(b.path() / "best.ckpt");
  const bool last_same = file_hash(a.path() / "last.ckpt") == file_hash(b.path() / "last.ckpt");

  RunConfig ev = cfg;
  ev.evaluation.episodes = 60;
  const ActivePolicy policy = load_active_policy(a.path() / "best.ckpt");
  const auto map = test::bundled("training_3");
  const MetricsReport r1 = run_experiment(experiment_from_config(ev, map, policy, TrafficLevel::High));
  const MetricsReport r2 = run_experiment(experiment_from_config(ev, map, policy, TrafficLevel::High));
  const bool eval_same = r1.records == r2.records;
  const bool ok = episodes == 200 && best_same && last_same && eval_same;
  return {ok, fmt("%g training episodes per run; ", static_cast<double>(episodes)) +
                  "best checkpoint " + (best_same ? "identical" : "DIFFERS") + ", last checkpoint " +
                  (last_same ? "identical" : "DIFFERS") + ", 60 evaluation records " +
                  (eval_same ? "identical" : "DIFFER")};
}

// 9. Scaled-down learning run against a uniform-random policy.
Verdict learning_smoke() {
  const RunConfig cfg = smoke_config();
  auto store = fresh_store(cfg);
  test::TempDir dir("smoke");
  TrainOptions opts;
  opts.checkpoint_dir = dir.path();
  const TrainResult tr = train_active(cfg, *store, opts);

  const auto map = test::bundled(cfg.evaluation.map);
  const ActivePolicy trained = load_active_policy(dir.path() / "best.ckpt");
  const MetricsReport t =
      run_experiment(experiment_from_config(cfg, map, trained, parse_traffic_level(cfg.evaluation.traffic)));
  const MetricsReport r = run_experiment(
      experiment_from_config(cfg, map, ActivePolicy::uniform_random(), parse_traffic_level(cfg.evaluation.traffic)));
  const bool ok = tr.episodes <= 20000 && t.episodes == 500 && t.reaches_pct >= 0.80 && r.reaches_pct <= 0.55;
  return {ok, fmt("%g training episodes; trained reaches %.3f (need >= 0.80), random %.3f (need <= 0.55) ",
                  static_cast<double>(tr.episodes), t.reaches_pct, r.reaches_pct) +
                  fmt("over %g episodes; best from sweep %g", static_cast<double>(t.episodes),
                      static_cast<double>(tr.best.counters.count("sweep") ? tr.best.counters.at("sweep") : 0))};
}

// 10. Injected validation scores (0.6, 0.9, 0.7).
Verdict validation_selection() {
  RunConfig cfg = test::tiny_run();
  cfg.train.training = {{"junction", 0, 1}};
  cfg.train.validation = {"junction", 0, 1};
  cfg.train.cadence = 1;
  cfg.train.episodes_per_instance = 3;
  cfg.learner.max_episode_steps = 30;
  auto store = fresh_store(cfg);
  const double scores[] = {0.6, 0.9, 0.7};
  std::vector<Candidate> history;
  TrainOptions opts;
  opts.validator = [&](int sweep, const ParameterSnapshot& snap) {
    Candidate c;
    c.reaches = scores[sweep - 1];
    c.steps = 100;
    c.checkpoint.version = snap.version;
    history.push_back(c);
    return ValidationResult{scores[sweep - 1], 100, 1};
  };
  const TrainResult r = train_active(cfg, *store, opts);
  const std::size_t pick = select_best_index(history);
  bool monotone = r.best_scores.size() == 3;
  for (std::size_t i = 1; i < r.best_scores.size(); ++i) monotone = monotone && r.best_scores[i] >= r.best_scores[i - 1];
  const bool ok = pick == 1 && r.best.version == history[1].checkpoint.version && r.best.validation_reaches == 0.9 &&
                  monotone;
  std::ostringstream os;
  os << "select_best picks #" << pick + 1 << " (version " << history[pick].checkpoint.version
     << "), kept best has version " << r.best.version << ", best-score sequence";
  for (double s : r.best_scores) os << ' ' << s;
  os << (monotone ? " (monotone)" : " (NOT monotone)");
  return {ok, os.str()};
}

// 11. Position noise spread and dropout rate.
Verdict noise_statistics() {
  const auto m = test::bundled("training_1");
  AgentState a;
  a.s = 12.0;
  const std::vector<AgentState> truth{a};
  const PerceivedVehicle exact = perceive_exact(a, m->traffic_paths);
  NoiseConfig cfg;
  cfg.sigma_pos = 0.3;
  Rng rng(1111);
  const int n = 100000;
  double sx = 0, sxx = 0, sy = 0, syy = 0;
  int dropped = 0;
  for (int i = 0; i < n; ++i) {
    const PerceivedVehicle v = perturb_perception(truth, m->traffic_paths, cfg, rng)[0];
    const double ex = v.center.x - exact.center.x, ey = v.center.y - exact.center.y;
    sx += ex;
    sxx += ex * ex;
    sy += ey;
    syy += ey * ey;
    dropped += !v.detected;
  }
  const double sdx = std::sqrt((sxx - sx * sx / n) / (n - 1));
  const double sdy = std::sqrt((syy - sy * sy / n) / (n - 1));
  const double rate = static_cast<double>(dropped) / n;
  const bool ok = std::abs(sdx - 0.3) <= 0.02 * 0.3 && std::abs(sdy - 0.3) <= 0.02 * 0.3 &&
                  std::abs(rate - cfg.p_dropout) <= 0.01;
  return {ok, fmt("positional sd x %.4f, y %.4f (0.3 +- 2%%); dropout %.4f (p = %.2f +- 0.01, ", sdx, sdy, rate,
                  cfg.p_dropout) +
                  fmt("relative deviation %.1f%%)", 100.0 * std::abs(rate - cfg.p_dropout) / cfg.p_dropout)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"rasterizer oracle equivalence", raster_oracle},
      {"gradient check", gradient_check},
      {"delayed-update identity", delay_identity},
      {"normalized returns", returns_oracle},
      {"configuration arithmetic", configuration_arithmetic},
      {"metric identity", metric_identity},
      {"zero-noise identities", zero_noise},
      {"determinism", determinism},
      {"learning smoke test", learning_smoke},
      {"validation selection", validation_selection},
      {"noise statistics", noise_statistics},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %2d  %-30s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
