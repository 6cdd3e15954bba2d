#include "rondo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rondo/checkpoint.hpp"
#include "rondo/errors.hpp"
#include "rondo/image_io.hpp"
#include "rondo/learner.hpp"

namespace rondo {

const char* to_string(TrafficLevel t) {
  switch (t) {
    case TrafficLevel::Low: return "low";
    case TrafficLevel::Medium: return "medium";
    case TrafficLevel::High: return "high";
  }
  return "?";
}

TrafficLevel parse_traffic_level(const std::string& s) {
  if (s == "low") return TrafficLevel::Low;
  if (s == "medium") return TrafficLevel::Medium;
  if (s == "high") return TrafficLevel::High;
  throw ValidationError("traffic level must be low, medium or high; got \"" + s + "\"");
}

int traffic_capacity(const TrackMap& map, TrafficLevel level) {
  const int i = static_cast<int>(level);
  static constexpr int kTest[3] = {10, 15, 20};
  static constexpr int kValidation[3] = {6, 12, 18};
  static constexpr int kJunction[3] = {2, 4, 6};
  if (map.kind == MapKind::Junction || map.role == "junction") return kJunction[i];
  if (map.role == "test") return kTest[i];
  if (map.role == "validation") return kValidation[i];
  throw ValidationError("map '" + map.name + "' (role '" + map.role +
                        "') has no traffic table; pass an explicit passive count");
}

EpisodeRecord run_episode(const EpisodeSpec& spec, PassiveDriver& passives, const ActivePolicy& policy,
                          const EpisodeOptions& opts) {
  if (policy.params && policy.params->size() != policy.shape.param_count()) {
    throw ContractError("active policy parameters do not match its shape");
  }
  ActiveEpisode ep(spec, passives);
  std::mt19937_64 rng(opts.action_seed);
  EpisodeRecord rec;
  rec.entry = spec.entry;
  rec.seed = spec.seed;
  rec.passives = static_cast<int>(ep.world().passives.size());
  if (opts.trace) {
    opts.trace->map = spec.map;
    opts.trace->paths = ep.world().paths;
    opts.trace->entry = spec.entry;
    opts.trace->steps.clear();
  }
  while (!ep.terminal()) {
    if (ep.world().status.step_count >= opts.stall_limit) {
      rec.stalled = true;
      break;
    }
    int action;
    if (!policy.params) {
      action = std::uniform_int_distribution<int>(0, kActionCount - 1)(rng);
    } else {
      const NetOutput out = forward(policy.shape, *policy.params, ep.observe());
      action = opts.greedy ? greedy_action(out.policy) : sample_action(out.policy, rng);
    }
    if (opts.trace) {
      opts.trace->steps.push_back({ep.current_frame(), ep.world().active, ep.world().passives, ep.perceived(),
                                   static_cast<ActiveCommand>(action)});
    }
    rec.ret += ep.act(action);
  }
  rec.steps = ep.world().status.step_count;
  rec.outcome = rec.stalled ? Outcome::Crashed : ep.world().status.outcome;
  if (opts.trace) opts.trace->record = rec;
  return rec;
}

MetricsReport summarize(std::vector<EpisodeRecord> records) {
  MetricsReport m;
  m.episodes = static_cast<std::int64_t>(records.size());
  if (records.empty()) throw ContractError("summarize: no episodes");
  std::int64_t reached = 0;
  double ret = 0.0;
  for (const EpisodeRecord& r : records) {
    if (r.outcome == Outcome::Running) throw ContractError("summarize: unfinished episode");
    reached += r.outcome == Outcome::Reached;
    m.stalled += r.stalled;
    m.total_steps_sum += r.steps;
    ret += r.ret;
  }
  const double n = static_cast<double>(m.episodes);
  m.reaches_pct = static_cast<double>(reached) / n;
  m.crashes_pct = 1.0 - m.reaches_pct;
  m.total_steps = static_cast<double>(m.total_steps_sum) / n;
  m.mean_return = ret / n;
  m.records = std::move(records);
  return m;
}

ActivePolicy load_active_policy(const std::filesystem::path& file) {
  Checkpoint ck = load_checkpoint(file);
  if (ck.role != AgentRole::Active) throw ValidationError(file.string() + " is not an active-agent checkpoint");
  return {ck.shape, std::make_shared<const std::vector<double>>(std::move(ck.params))};
}

std::shared_ptr<const PassivePolicy> load_passive_policy(const std::filesystem::path& file) {
  Checkpoint ck = load_checkpoint(file);
  if (ck.role != AgentRole::Passive) throw ValidationError(file.string() + " is not a passive-agent checkpoint");
  return std::make_shared<const PassivePolicy>(
      PassivePolicy{ck.shape, std::make_shared<const std::vector<double>>(std::move(ck.params))});
}

ExperimentSetup experiment_from_config(const RunConfig& cfg, std::shared_ptr<const TrackMap> map,
                                       ActivePolicy policy, TrafficLevel level) {
  ExperimentSetup s;
  s.max_passives = cfg.evaluation.max_passives >= 0 ? cfg.evaluation.max_passives : traffic_capacity(*map, level);
  s.map = std::move(map);
  s.policy = std::move(policy);
  s.episodes = cfg.evaluation.episodes;
  s.noise = cfg.evaluation.noise;
  s.reshape_entries = s.map->kind == MapKind::Junction;
  s.seed = cfg.run.master_seed;
  s.workers = cfg.run.workers;
  s.stall_limit = cfg.evaluation.stall_limit;
  s.passive_control = parse_passive_control(cfg.train.passive_control);
  if (s.passive_control == PassiveControl::Policy) s.passive_policy = load_passive_policy(cfg.train.passive_checkpoint);
  s.noise_config = cfg.noise;
  s.sim = cfg.sim;
  s.rewards = cfg.rewards;
  s.perception = cfg.perception;
  s.active_target_speed = cfg.active.target_speed;
  s.active_initial_speed = cfg.active.initial_speed;
  return s;
}

EpisodeSpec experiment_episode(const ExperimentSetup& s, std::int64_t i) {
  EpisodeSpec spec;
  spec.map = s.map;
  spec.entry = static_cast<std::size_t>(i) % s.map->entry_count();
  spec.max_passives = s.max_passives;
  spec.seed = derive_seed(s.seed, static_cast<std::uint64_t>(i));
  spec.noise = s.noise ? s.noise_config : NoiseConfig::disabled();
  spec.noise.reshape = false;
  if (s.reshape_entries) {
    NoiseConfig every = s.noise_config;
    every.reshape = true;
    every.reshape_period = 1;
    Rng rng(derive_seed(spec.seed, 0x5e5a9e));
    spec.map = std::make_shared<const TrackMap>(maybe_reshape(0, *s.map, every, rng));
  }
  spec.sim = s.sim;
  spec.rewards = s.rewards;
  spec.perception = s.perception;
  spec.active_target_speed = s.active_target_speed;
  spec.active_initial_speed = s.active_initial_speed;
  return spec;
}

MetricsReport run_experiment(const ExperimentSetup& s) {
  if (!s.map) throw ContractError("experiment needs a map");
  if (s.episodes < 1) throw ValidationError("experiment needs at least one episode");
  if (s.max_passives < 0) throw ValidationError("max_passives must be >= 0");
  if (s.policy.params) {
    if (s.policy.shape.input_channels != kFramesPerStack * channel_count(AgentRole::Active) ||
        s.policy.shape.nonvisual != nonvisual_size(AgentRole::Active) || s.policy.shape.input_size != kGridSize) {
      throw ContractError("checkpoint does not match the active agent's input shapes");
    }
  }
  const std::size_t entries = s.map->entry_count();
  if (entries == 0) throw ValidationError("map '" + s.map->name + "' has no entry lanes");

  std::vector<EpisodeRecord> records(static_cast<std::size_t>(s.episodes));
  auto run_range = [&](std::int64_t first, std::int64_t stride) {
    PassiveDriver driver(s.passive_control, s.passive_policy, s.perception);
    for (std::int64_t i = first; i < s.episodes; i += stride) {
      const EpisodeSpec spec = experiment_episode(s, i);
      EpisodeOptions opts;
      opts.greedy = s.greedy;
      opts.stall_limit = s.stall_limit;
      opts.action_seed = derive_seed(spec.seed, 7);
      EpisodeRecord r = run_episode(spec, driver, s.policy, opts);
      r.index = i;
      records[static_cast<std::size_t>(i)] = r;
    }
  };
  const int workers = std::max(1, std::min<int>(s.workers, static_cast<int>(s.episodes)));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run_range(w, workers);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return summarize(std::move(records));
}

MetricsReport average_over_levels(const std::vector<MetricsReport>& reports) {
  if (reports.size() != 3) {
    throw ContractError("average_over_levels needs exactly 3 reports (low, medium, high), got " +
                        std::to_string(reports.size()));
  }
  MetricsReport m;
  for (const MetricsReport& r : reports) {
    m.reaches_pct += r.reaches_pct;
    m.total_steps += r.total_steps;
    m.total_steps_sum += r.total_steps_sum;
    m.mean_return += r.mean_return;
    m.episodes += r.episodes;
    m.stalled += r.stalled;
    m.records.insert(m.records.end(), r.records.begin(), r.records.end());
  }
  m.reaches_pct /= 3.0;
  m.crashes_pct = 1.0 - m.reaches_pct;
  m.total_steps /= 3.0;
  m.mean_return /= 3.0;
  return m;
}

ComparisonTable compare_models(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  if (reports.size() < 2) throw ContractError("compare_models needs at least two models");
  ComparisonTable t;
  t.values.assign(3, {});
  for (const auto& [name, r] : reports) {
    t.models.push_back(name);
    t.values[0].push_back(r.reaches_pct);
    t.values[1].push_back(r.crashes_pct);
    t.values[2].push_back(r.total_steps);
  }
  return t;
}

namespace {

std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

MetricsReport reference(double reaches, double crashes, double steps) {
  MetricsReport m;
  m.reaches_pct = reaches;
  m.crashes_pct = crashes;
  m.total_steps = steps;
  return m;
}

}  // namespace

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << "metric";
  for (const auto& m : models) os << ',' << m;
  os << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    os << rows[r];
    for (double v : values[r]) os << ',' << fixed3(v);
    os << '\n';
  }
  return os.str();
}

std::string ComparisonTable::to_text() const {
  std::size_t first = 0;
  for (const auto& r : rows) first = std::max(first, r.size());
  std::vector<std::size_t> width;
  for (std::size_t c = 0; c < models.size(); ++c) {
    std::size_t w = models[c].size();
    for (std::size_t r = 0; r < rows.size(); ++r) w = std::max(w, fixed3(values[r][c]).size());
    width.push_back(w);
  }
  std::ostringstream os;
  os << std::string(first, ' ');
  for (std::size_t c = 0; c < models.size(); ++c) os << "  " << std::setw(static_cast<int>(width[c])) << models[c];
  os << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    os << std::left << std::setw(static_cast<int>(first)) << rows[r] << std::right;
    for (std::size_t c = 0; c < models.size(); ++c) {
      os << "  " << std::setw(static_cast<int>(width[c])) << fixed3(values[r][c]);
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::pair<std::string, MetricsReport>> reference_unseen_roundabout() {
  return {{"Single_env", reference(0.907, 0.093, 103.489)},
          {"Five_envs", reference(0.891, 0.109, 100.460)},
          {"Five_envs&noise", reference(0.979, 0.021, 116.356)},
          {"Multi_env", reference(0.952, 0.048, 108.237)},
          {"Multi_env&noise", reference(0.991, 0.009, 137.438)}};
}

std::vector<std::pair<std::string, MetricsReport>> reference_validation_roundabout() {
  return {{"Single_env", reference(0.920, 0.080, 88.906)}, {"Multi_env&noise", reference(0.994, 0.006, 115.741)}};
}

std::vector<std::pair<std::string, MetricsReport>> reference_junction() {
  return {{"Single_env", reference(0.919, 0.081, 97.011)}, {"Multi_env&noise", reference(0.970, 0.030, 128.182)}};
}

void write_episode_csv(const std::filesystem::path& file, const MetricsReport& report) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << "index,entry,outcome,steps,return,stalled,passives,seed\n";
  os << std::setprecision(17);
  for (const EpisodeRecord& r : report.records) {
    os << r.index << ',' << r.entry << ',' << to_string(r.outcome) << ',' << r.steps << ',' << r.ret << ','
       << (r.stalled ? 1 : 0) << ',' << r.passives << ',' << r.seed << '\n';
  }
  if (!os) throw IoError("failed writing " + file.string());
}

void write_summary_json(const std::filesystem::path& file, const MetricsReport& report, const std::string& config_json,
                        std::uint64_t seed, const std::string& checkpoint_hash) {
  nlohmann::json j;
  j["metrics"] = {{"reaches_pct", report.reaches_pct},
                  {"crashes_pct", report.crashes_pct},
                  {"total_steps_mean", report.total_steps},
                  {"total_steps_sum", report.total_steps_sum},
                  {"mean_return", report.mean_return},
                  {"episodes", report.episodes},
                  {"stalled", report.stalled}};
  j["seed"] = seed;
  j["checkpoint_hash"] = checkpoint_hash;
  try {
    j["config"] = config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception&) {
    j["config"] = config_json;
  }
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing " + file.string());
}

std::vector<std::uint8_t> render_composite(const EpisodeTrace& trace, std::size_t step, int size_px) {
  if (!trace.map) throw ContractError("render: trace has no map");
  if (step >= trace.steps.size()) throw ContractError("render: step out of range");
  if (size_px < 8) throw ContractError("render: image too small");
  const TrackMap& map = *trace.map;
  const RecordedStep& rs = trace.steps[step];

  std::vector<Point2> all;
  for (const Polygon& p : map.navigable) all.insert(all.end(), p.points.begin(), p.points.end());
  for (const PathPolyline& p : trace.paths) all.insert(all.end(), p.vertices().begin(), p.vertices().end());
  const Box b = bounding_box(all);
  const double span = std::max(b.hi.x - b.lo.x, b.hi.y - b.lo.y) + 10.0;
  const Point2 mid{0.5 * (b.lo.x + b.hi.x), 0.5 * (b.lo.y + b.hi.y)};
  const double scale = span / size_px;  // metres per pixel
  const Point2 origin{mid.x - 0.5 * span, mid.y + 0.5 * span};
  const std::size_t n = static_cast<std::size_t>(size_px);

  std::vector<std::uint8_t> img(n * n * 3, 0);
  auto set = [&](std::size_t r, std::size_t c, std::uint8_t R, std::uint8_t G, std::uint8_t B) {
    std::uint8_t* px = &img[(r * n + c) * 3];
    px[0] = R;
    px[1] = G;
    px[2] = B;
  };
  auto world_at = [&](std::size_t r, std::size_t c) {
    return Point2{origin.x + (static_cast<double>(c) + 0.5) * scale, origin.y - (static_cast<double>(r) + 0.5) * scale};
  };
  auto plot = [&](Point2 p, std::uint8_t R, std::uint8_t G, std::uint8_t B) {
    const double c = (p.x - origin.x) / scale;
    const double r = (origin.y - p.y) / scale;
    if (c < 0 || r < 0 || c >= size_px || r >= size_px) return;
    set(static_cast<std::size_t>(r), static_cast<std::size_t>(c), R, G, B);
  };
  auto polyline = [&](const std::vector<Point2>& pts, std::uint8_t R, std::uint8_t G, std::uint8_t B) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const double len = distance(pts[i], pts[i + 1]);
      const int k = std::max(1, static_cast<int>(std::ceil(len / (0.5 * scale))));
      for (int j = 0; j <= k; ++j) plot(pts[i] + (static_cast<double>(j) / k) * (pts[i + 1] - pts[i]), R, G, B);
    }
  };

  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Point2 q = world_at(r, c);
      bool nav = false;
      for (const Polygon& p : map.navigable) {
        if (p.box.contains(q) && point_in_polygon(q, p.points)) {
          nav = true;
          break;
        }
      }
      if (nav) set(r, c, 90, 90, 90);
    }
  }
  for (std::size_t i = 0; i + 1 < trace.paths.size(); ++i) polyline(trace.paths[i].vertices(), 140, 140, 60);
  polyline(trace.paths.back().vertices(), 60, 90, 220);
  const Segment2& sl = map.stop_lines.at(trace.entry);
  polyline({sl.a, sl.b}, 255, 255, 255);

  auto vehicle = [&](const PerceivedVehicle& v, std::uint8_t R, std::uint8_t G, std::uint8_t B) {
    const double reach = 0.5 * std::hypot(v.footprint.length, v.footprint.width);
    const double c0 = (v.center.x - reach - origin.x) / scale, c1 = (v.center.x + reach - origin.x) / scale;
    const double r0 = (origin.y - v.center.y - reach) / scale, r1 = (origin.y - v.center.y + reach) / scale;
    for (long r = std::max(0L, static_cast<long>(r0)); r <= std::min<long>(size_px - 1, static_cast<long>(r1)); ++r) {
      for (long c = std::max(0L, static_cast<long>(c0)); c <= std::min<long>(size_px - 1, static_cast<long>(c1));
           ++c) {
        if (rect_contains(v, world_at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)))) {
          set(static_cast<std::size_t>(r), static_cast<std::size_t>(c), R, G, B);
        }
      }
    }
  };
  for (const AgentState& p : rs.passives) vehicle(perceive_exact(p, trace.paths), 60, 110, 255);
  vehicle(perceive_exact(rs.active, trace.paths), 40, 220, 60);
  return img;
}

std::vector<std::filesystem::path> render_episode(const EpisodeTrace& trace, const std::filesystem::path& dir,
                                                  int composite_px) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  const std::int64_t episode = trace.record.index;
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto step = static_cast<std::int64_t>(k);
    const auto composite = dir / (std::to_string(episode) + "_" + std::to_string(step) + "_composite.png");
    write_rgb_png(composite, composite_px, composite_px, render_composite(trace, k, composite_px));
    written.push_back(composite);
    for (const SemanticLayer& layer : trace.steps[k].frame.layers) {
      const auto file = dir / layer_filename(episode, step, layer.channel);
      write_layer_png(layer, file);
      written.push_back(file);
    }
  }
  return written;
}

}  // namespace rondo
