#include "rondo/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "rondo/errors.hpp"

namespace rondo {

std::shared_ptr<const TrackMap> MapLibrary::get(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  auto map = std::make_shared<const TrackMap>(load_map(cfg_->map_path(name)));
  cache_.emplace(name, map);
  return map;
}

std::vector<InstanceSpec> build_instances(const RunConfig& cfg, MapLibrary& maps) {
  std::vector<InstanceSpec> out;
  auto add = [&](const MapSlot& slot, std::size_t map_index, bool validation) {
    auto map = maps.get(slot.map);
    const std::size_t n = map->entry_count();
    if (n == 0) throw ValidationError("map '" + slot.map + "' has no entry lanes");
    if (slot.entries != static_cast<int>(n)) {
      throw ValidationError("map '" + slot.map + "' has " + std::to_string(n) + " entry lanes but the config expects " +
                            std::to_string(slot.entries));
    }
    for (std::size_t e = 0; e < n; ++e) {
      InstanceSpec s;
      s.id = out.size();
      s.map_name = slot.map;
      s.map_index = map_index;
      s.map = map;
      s.entry = e;
      s.max_passives = slot.max_passives;
      s.seed = derive_seed(cfg.run.master_seed, map_index, e);
      s.validation = validation;
      out.push_back(std::move(s));
    }
  };
  for (std::size_t i = 0; i < cfg.train.training.size(); ++i) add(cfg.train.training[i], i, false);
  add(cfg.train.validation, cfg.train.training.size(), true);
  return out;
}

InstanceTotals instance_totals(std::span<const InstanceSpec> instances) {
  InstanceTotals t;
  for (const InstanceSpec& s : instances) {
    (s.validation ? t.validation_instances : t.training_instances) += 1;
    t.passive_capacity += s.max_passives;
  }
  return t;
}

EnvironmentInstance::EnvironmentInstance(InstanceSpec spec)
    : spec_(std::move(spec)), current_(spec_.map), reshape_rng_(derive_seed(spec_.seed, 0x5e5a9e)) {}

namespace {

EpisodeSpec base_episode(const RunConfig& cfg, std::shared_ptr<const TrackMap> map, std::size_t entry,
                         int max_passives, std::uint64_t seed) {
  EpisodeSpec e;
  e.map = std::move(map);
  e.entry = entry;
  e.max_passives = max_passives;
  e.seed = seed;
  e.sim = cfg.sim;
  e.rewards = cfg.rewards;
  e.perception = cfg.perception;
  e.active_target_speed = cfg.active.target_speed;
  e.active_initial_speed = cfg.active.initial_speed;
  return e;
}

}  // namespace

EpisodeSpec EnvironmentInstance::next_episode(const RunConfig& cfg) {
  if (cfg.noise.reshape && counter_ % cfg.noise.reshape_period == 0) {
    current_ = std::make_shared<const TrackMap>(maybe_reshape(counter_, *spec_.map, cfg.noise, reshape_rng_));
  }
  EpisodeSpec e = base_episode(cfg, current_, spec_.entry, spec_.max_passives,
                               derive_seed(spec_.seed, static_cast<std::uint64_t>(counter_), 1));
  e.noise = cfg.noise;
  e.noise.reshape = false;  // handled above, per instance
  ++counter_;
  return e;
}

EpisodeSpec EnvironmentInstance::validation_episode(const RunConfig& cfg, std::int64_t k) const {
  EpisodeSpec e = base_episode(cfg, spec_.map, spec_.entry, spec_.max_passives,
                               derive_seed(spec_.seed, static_cast<std::uint64_t>(k), 2));
  e.noise = cfg.evaluation.noise ? cfg.noise : NoiseConfig::disabled();
  e.noise.reshape = false;
  return e;
}

bool better_candidate(const Candidate& a, const Candidate& b) {
  if (a.reaches != b.reaches) return a.reaches > b.reaches;
  if (a.steps != b.steps) return a.steps < b.steps;
  return a.checkpoint.version < b.checkpoint.version;
}

std::size_t select_best_index(std::span<const Candidate> history) {
  if (history.empty()) throw ContractError("select_best: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (better_candidate(history[i], history[best])) best = i;
  }
  return best;
}

const Candidate& select_best(std::span<const Candidate> history) { return history[select_best_index(history)]; }

bool BestTracker::offer(Candidate c) {
  const bool improved = !best_ || better_candidate(c, *best_);
  if (improved) best_ = std::move(c);
  scores_.push_back(best_->reaches);
  return improved;
}

ValidationResult validation_sweep(const RunConfig& cfg, std::span<const EnvironmentInstance> validation,
                                  const ParameterSnapshot& snapshot, PassiveDriver& passives) {
  const ActivePolicy policy{cfg.network.active, snapshot.params};
  std::vector<EpisodeRecord> records;
  for (const EnvironmentInstance& inst : validation) {
    for (std::int64_t k = 0; k < cfg.train.validation_episodes; ++k) {
      const EpisodeSpec spec = inst.validation_episode(cfg, k);
      EpisodeOptions opts;
      opts.greedy = true;
      opts.stall_limit = cfg.evaluation.stall_limit;
      opts.action_seed = derive_seed(spec.seed, 7);
      records.push_back(run_episode(spec, passives, policy, opts));
    }
  }
  if (records.empty()) return {};
  const MetricsReport m = summarize(std::move(records));
  return {m.reaches_pct, m.total_steps, m.episodes};
}

std::unique_ptr<PassiveDriver> make_passive_driver(const RunConfig& cfg) {
  const PassiveControl mode = parse_passive_control(cfg.train.passive_control);
  std::shared_ptr<const PassivePolicy> policy;
  if (mode == PassiveControl::Policy) policy = load_passive_policy(cfg.train.passive_checkpoint);
  return std::make_unique<PassiveDriver>(mode, policy, cfg.perception);
}

namespace {

class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  void write(const nlohmann::json& j) {
    if (!os_) return;
    std::lock_guard lock(mu_);
    *os_ << j.dump() << '\n';
    os_->flush();
  }

 private:
  std::ostream* os_;
  std::mutex mu_;
};

Checkpoint snapshot_checkpoint(const ParameterStore& store, AgentRole role, std::uint64_t seed) {
  const ParameterSnapshot snap = store.pull();
  Checkpoint c;
  c.role = role;
  c.shape = store.shape();
  c.params = *snap.params;
  c.optimizer = store.optimizer_state();
  c.version = snap.version;
  c.master_seed = seed;
  return c;
}

// Runs `episodes` training episodes on every instance. Single worker: round
// robin in instance order, fully deterministic. Several workers: instance i
// belongs to worker i mod W.
template <typename EpisodeFn>
void run_round(std::vector<EnvironmentInstance>& instances, int workers, std::int64_t episodes, EpisodeFn&& fn) {
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(instances.size())));
  if (w == 1) {
    for (std::int64_t k = 0; k < episodes; ++k) {
      for (std::size_t i = 0; i < instances.size(); ++i) fn(0, instances[i]);
    }
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::int64_t k = 0; k < episodes; ++k) {
          for (std::size_t i = static_cast<std::size_t>(t); i < instances.size(); i += static_cast<std::size_t>(w)) {
            fn(t, instances[i]);
          }
        }
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void save_if(const std::filesystem::path& dir, const std::string& name, const Checkpoint& c) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / name, c);
}

}  // namespace

TrainResult train_active(const RunConfig& cfg, ParameterStore& store, const TrainOptions& opts) {
  cfg.validate();
  if (!(store.shape() == cfg.network.active)) throw ContractError("train_active: store shape differs from config");
  MapLibrary maps(cfg);
  std::vector<EnvironmentInstance> training, validation;
  for (InstanceSpec& s : build_instances(cfg, maps)) {
    (s.validation ? validation : training).emplace_back(std::move(s));
  }
  const int workers = std::max(1, std::min<int>(cfg.run.workers, static_cast<int>(training.size())));
  std::vector<std::unique_ptr<PassiveDriver>> drivers;
  for (int w = 0; w < workers; ++w) drivers.push_back(make_passive_driver(cfg));
  std::vector<std::mt19937_64> action_rngs;
  for (const auto& inst : training) action_rngs.emplace_back(derive_seed(inst.spec().seed, 3));

  Logger log(opts.log);
  TrainResult result;
  BestTracker tracker;
  std::mutex warn_mu;
  std::int64_t done = 0;
  int sweep = 0;
  while (done < cfg.train.episodes_per_instance) {
    const std::int64_t n = std::min(cfg.train.cadence, cfg.train.episodes_per_instance - done);
    run_round(training, workers, n, [&](int worker, EnvironmentInstance& inst) {
      const EpisodeSpec spec = inst.next_episode(cfg);
      const std::int64_t index = inst.episode_counter() - 1;
      ActiveEpisode ep(spec, *drivers[static_cast<std::size_t>(worker)]);
      if (!ep.warnings().empty() && index == 0) {
        std::lock_guard lock(warn_mu);
        result.warnings.insert(result.warnings.end(), ep.warnings().begin(), ep.warnings().end());
      }
      const UpdateStats st = run_training_episode(ep, store, action_rngs[inst.spec().id]);
      log.write({{"kind", "train"},
                 {"instance", inst.spec().id},
                 {"map", inst.spec().map_name},
                 {"entry", inst.spec().entry},
                 {"episode", index},
                 {"outcome", st.truncated ? "truncated" : to_string(ep.world().status.outcome)},
                 {"steps", st.steps},
                 {"return", st.raw_return},
                 {"version", st.version}});
    });
    done += n;
    result.episodes += n * static_cast<std::int64_t>(training.size());

    ++sweep;
    const ParameterSnapshot snap = store.pull();
    ValidationResult v;
    if (opts.validator) {
      v = opts.validator(sweep, snap);
    } else {
      v = validation_sweep(cfg, validation, snap, *drivers[0]);
    }
    Checkpoint ck = snapshot_checkpoint(store, AgentRole::Active, cfg.run.master_seed);
    ck.validation_reaches = v.reaches;
    ck.validation_steps = v.steps;
    ck.counters = {{"episodes_per_instance", done}, {"sweep", sweep}};
    const bool improved = tracker.offer({ck, v.reaches, v.steps});
    result.sweeps.push_back({sweep, snap.version, done, v, improved});
    log.write({{"kind", "validation"},
               {"sweep", sweep},
               {"version", snap.version},
               {"reaches", v.reaches},
               {"steps", v.steps},
               {"episodes", v.episodes},
               {"improved", improved},
               {"best", tracker.best().reaches}});
    if (improved) save_if(opts.checkpoint_dir, "best.ckpt", tracker.best().checkpoint);
    save_if(opts.checkpoint_dir, "last.ckpt", ck);
  }
  result.last = snapshot_checkpoint(store, AgentRole::Active, cfg.run.master_seed);
  result.last.counters = {{"episodes_per_instance", done}, {"sweep", sweep}};
  if (tracker.has_best()) {
    result.best = tracker.best().checkpoint;
  } else {
    result.best = result.last;
    result.warnings.push_back("no validation sweep ran; returning the last parameters");
  }
  result.best_scores = tracker.best_scores();
  return result;
}

double passive_l_max(const RunConfig& cfg, MapLibrary& maps) {
  double l = 0.0;
  for (const MapSlot& s : cfg.passive_train.maps) l = std::max(l, maps.get(s.map)->longest_traffic_path());
  return l;
}

namespace {

// Frames of one passive, bit-packed to keep long multi-agent episodes small.
struct PackedFrame {
  std::vector<std::uint64_t> bits;
  int layers = 0;
};

PackedFrame pack(const Frame& f) {
  PackedFrame p;
  p.layers = static_cast<int>(f.layers.size());
  p.bits.assign((f.layers.size() * kGridCells + 63) / 64, 0);
  std::size_t k = 0;
  for (const SemanticLayer& l : f.layers) {
    for (std::uint8_t c : l.cells) {
      if (c) p.bits[k / 64] |= std::uint64_t{1} << (k % 64);
      ++k;
    }
  }
  return p;
}

// Visual input for step t from packed frames 0..t, in FrameStack order.
std::vector<std::uint8_t> unpack_stack(const std::vector<PackedFrame>& frames, std::size_t t, int interval) {
  const int layers = frames[t].layers;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(kFramesPerStack * layers * kGridCells));
  std::size_t o = 0;
  for (int k = 0; k < kFramesPerStack; ++k) {
    const std::ptrdiff_t back = static_cast<std::ptrdiff_t>(kFramesPerStack - 1 - k) * interval;
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - back));
    const PackedFrame& f = frames[idx];
    const std::size_t n = static_cast<std::size_t>(layers) * kGridCells;
    for (std::size_t i = 0; i < n; ++i) out[o++] = (f.bits[i / 64] >> (i % 64)) & 1u;
  }
  return out;
}

struct AgentTrace {
  std::vector<PackedFrame> frames;
  std::vector<std::vector<double>> nonvisual;
  std::vector<int> actions;
  std::vector<double> rewards;
  bool alive = true;
  bool completed = false;
  bool collided = false;
};

}  // namespace

PassiveEpisodeStats run_passive_episode(std::shared_ptr<const TrackMap> map, int max_passives, double l_max,
                                        std::uint64_t seed, const RunConfig& cfg, ParameterStore& store,
                                        std::mt19937_64& rng) {
  const ParameterSnapshot snap = store.pull();
  const NetworkShape& shape = store.shape();
  const int interval = cfg.perception.sample_interval;
  SpawnResult spawn = spawn_passives(*map, max_passives, seed, std::min(1, max_passives));
  std::vector<AgentState> agents = std::move(spawn.agents);
  const std::vector<PathPolyline>& paths = map->traffic_paths;
  std::vector<AgentTrace> traces(agents.size());

  PassiveEpisodeStats stats;
  stats.agents = static_cast<int>(agents.size());
  if (agents.empty()) return stats;

  // Observations for live agents only; dead ones leave the road.
  auto observe_all = [&](std::vector<std::size_t>& live) {
    live.clear();
    std::vector<AgentState> view;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      if (traces[i].alive) {
        live.push_back(i);
        view.push_back(agents[i]);
      }
    }
    for (std::size_t k = 0; k < live.size(); ++k) {
      AgentTrace& tr = traces[live[k]];
      tr.frames.push_back(pack(passive_frame(*map, paths, view, k, nullptr, cfg.perception)));
      tr.nonvisual.push_back(encode_nonvisual(agents[live[k]], paths[agents[live[k]].path_id].length()).features);
    }
  };

  std::vector<std::size_t> live;
  observe_all(live);
  std::vector<OrientedBox> boxes(agents.size());
  while (!live.empty() && stats.steps < cfg.learner.max_episode_steps) {
    std::vector<PassiveAction> actions(agents.size(), PassiveAction::Keep);
    for (std::size_t i : live) {
      AgentTrace& tr = traces[i];
      const std::size_t t = tr.frames.size() - 1;
      const Observation obs{unpack_stack(tr.frames, t, interval), tr.nonvisual[t]};
      const NetOutput out = forward(shape, *snap.params, obs);
      const int a = sample_action(out.policy, rng);
      tr.actions.push_back(a);
      actions[i] = static_cast<PassiveAction>(a);
    }
    for (std::size_t i : live) {
      agents[i] = step_passive(agents[i], actions[i], cfg.sim, paths[agents[i].path_id]);
      traces[i].rewards.push_back(cfg.rewards.passive_speed * std::abs(agents[i].v - agents[i].target_speed));
      boxes[i] = box_of(agents[i], paths);
    }
    ++stats.steps;
    std::vector<bool> hit(agents.size(), false);
    for (std::size_t a = 0; a < live.size(); ++a) {
      for (std::size_t b = a + 1; b < live.size(); ++b) {
        if (boxes_overlap(boxes[live[a]], boxes[live[b]])) hit[live[a]] = hit[live[b]] = true;
      }
    }
    for (std::size_t i : live) {
      AgentTrace& tr = traces[i];
      if (hit[i]) {
        tr.rewards.back() += cfg.rewards.passive_collision;
        tr.alive = false;
        tr.collided = true;
      } else if (agents[i].odometer >= agents[i].goal_s) {
        tr.rewards.back() += cfg.rewards.passive_complete;
        tr.alive = false;
        tr.completed = true;
      }
    }
    observe_all(live);
  }

  GradientAccumulator acc(snap.params->size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    AgentTrace& tr = traces[i];
    stats.completed += tr.completed;
    stats.collided += tr.collided;
    const std::size_t T = tr.actions.size();
    if (T == 0) continue;
    double bootstrap = 0.0;
    if (tr.alive) {
      const Observation last{unpack_stack(tr.frames, T, interval), tr.nonvisual[T]};
      bootstrap = forward(shape, *snap.params, last).value;
    }
    const double l = paths[agents[i].path_id].length();
    const auto returns = normalized_returns(tr.rewards, cfg.learner.gamma, l, l_max, bootstrap);
    for (std::size_t t = 0; t < T; ++t) {
      const Observation obs{unpack_stack(tr.frames, t, interval), tr.nonvisual[t]};
      ForwardCache cache;
      const NetOutput out = forward(shape, *snap.params, obs, &cache);
      add_step_gradient(shape, *snap.params, obs, cache, out, tr.actions[t], returns[t] - out.value, returns[t],
                        cfg.learner.loss, acc.buffer());
      acc.count_step();
    }
  }
  if (acc.steps() > 0) stats.version = store.push(acc.values());
  stats.positive_ratio = static_cast<double>(stats.completed) / stats.agents;
  return stats;
}

TrainResult train_passives(const RunConfig& cfg, ParameterStore& store, const TrainOptions& opts) {
  cfg.validate();
  if (!(store.shape() == cfg.network.passive)) throw ContractError("train_passives: store shape differs from config");
  MapLibrary maps(cfg);
  const double l_max = passive_l_max(cfg, maps);
  std::vector<EnvironmentInstance> instances;
  for (std::size_t i = 0; i < cfg.passive_train.maps.size(); ++i) {
    const MapSlot& slot = cfg.passive_train.maps[i];
    InstanceSpec s;
    s.id = i;
    s.map_name = slot.map;
    s.map_index = i;
    s.map = maps.get(slot.map);
    s.max_passives = slot.max_passives;
    s.seed = derive_seed(cfg.run.master_seed, 1000 + i);
    instances.emplace_back(std::move(s));
  }
  std::vector<std::mt19937_64> rngs;
  std::vector<std::int64_t> counters(instances.size(), 0);
  for (const auto& inst : instances) rngs.emplace_back(derive_seed(inst.spec().seed, 3));

  Logger log(opts.log);
  std::mutex ratio_mu;
  std::deque<double> window;
  double window_sum = 0.0;
  TrainResult result;
  run_round(instances, cfg.run.workers, cfg.passive_train.episodes_per_instance,
            [&](int, EnvironmentInstance& inst) {
              const std::size_t id = inst.spec().id;
              const std::int64_t k = counters[id]++;
              const PassiveEpisodeStats st =
                  run_passive_episode(inst.spec().map, inst.spec().max_passives, l_max,
                                      derive_seed(inst.spec().seed, static_cast<std::uint64_t>(k), 1), cfg, store,
                                      rngs[id]);
              double avg;
              {
                std::lock_guard lock(ratio_mu);
                window.push_back(st.positive_ratio);
                window_sum += st.positive_ratio;
                if (static_cast<int>(window.size()) > cfg.passive_train.ratio_window) {
                  window_sum -= window.front();
                  window.pop_front();
                }
                avg = window_sum / static_cast<double>(window.size());
              }
              log.write({{"kind", "passive"},
                         {"instance", id},
                         {"map", inst.spec().map_name},
                         {"episode", k},
                         {"agents", st.agents},
                         {"completed", st.completed},
                         {"collided", st.collided},
                         {"steps", st.steps},
                         {"positive_ratio", st.positive_ratio},
                         {"positive_ratio_avg", avg},
                         {"version", st.version}});
            });
  result.episodes = cfg.passive_train.episodes_per_instance * static_cast<std::int64_t>(instances.size());
  result.last = snapshot_checkpoint(store, AgentRole::Passive, cfg.run.master_seed);
  result.last.counters = {{"episodes_per_instance", cfg.passive_train.episodes_per_instance}};
  result.best = result.last;
  save_if(opts.checkpoint_dir, "passive.ckpt", result.last);
  return result;
}

}  // namespace rondo
