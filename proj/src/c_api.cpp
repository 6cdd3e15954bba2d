#include "rondo/rondo.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "rondo/checkpoint.hpp"
#include "rondo/config.hpp"
#include "rondo/errors.hpp"
#include "rondo/evaluation.hpp"
#include "rondo/orchestrator.hpp"

struct rondo_config {
  rondo::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

rondo_status fail(rondo_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
rondo_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return RONDO_OK;
  } catch (const rondo::ParseError& e) {
    std::string msg = e.what();
    if (!e.field().empty() && msg.find(e.field()) == std::string::npos) msg += " (" + e.field() + ")";
    if (e.line() > 0) msg += " at line " + std::to_string(e.line());
    return fail(RONDO_ERR_PARSE, msg);
  } catch (const nlohmann::json::exception& e) {
    return fail(RONDO_ERR_PARSE, e.what());
  } catch (const rondo::ValidationError& e) {
    return fail(RONDO_ERR_VALIDATION, e.what());
  } catch (const rondo::DomainError& e) {
    return fail(RONDO_ERR_DOMAIN, e.what());
  } catch (const rondo::ContractError& e) {
    return fail(RONDO_ERR_CONTRACT, e.what());
  } catch (const rondo::IoError& e) {
    return fail(RONDO_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(RONDO_ERR_IO, e.what());
  } catch (const rondo::NonFiniteGradient& e) {
    return fail(RONDO_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(RONDO_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RONDO_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

rondo_metrics to_c(const rondo::MetricsReport& m) {
  return {m.reaches_pct, m.crashes_pct, m.total_steps, m.total_steps_sum, m.mean_return, m.episodes, m.stalled};
}

std::filesystem::path out_path(const char* dir) {
  std::filesystem::path p = dir ? dir : "";
  if (!p.empty()) std::filesystem::create_directories(p);
  return p;
}

rondo::ActivePolicy policy_for(const char* checkpoint) {
  if (!checkpoint || std::strcmp(checkpoint, "random") == 0) return rondo::ActivePolicy::uniform_random();
  return rondo::load_active_policy(checkpoint);
}

// Runs the configured experiment at one traffic level, or averages the three
// levels for "all".
rondo::MetricsReport experiment(const rondo::RunConfig& cfg, const rondo::ActivePolicy& policy, const char* traffic) {
  rondo::MapLibrary maps(cfg);
  auto map = maps.get(cfg.evaluation.map);
  const std::string level = traffic ? traffic : cfg.evaluation.traffic;
  if (level == "all") {
    std::vector<rondo::MetricsReport> reports;
    for (auto t : {rondo::TrafficLevel::Low, rondo::TrafficLevel::Medium, rondo::TrafficLevel::High}) {
      reports.push_back(rondo::run_experiment(rondo::experiment_from_config(cfg, map, policy, t)));
    }
    return rondo::average_over_levels(reports);
  }
  return rondo::run_experiment(rondo::experiment_from_config(cfg, map, policy, rondo::parse_traffic_level(level)));
}

std::string checkpoint_hash(const char* checkpoint) {
  if (!checkpoint || std::strcmp(checkpoint, "random") == 0) return "";
  return rondo::file_hash(checkpoint);
}

std::unique_ptr<rondo::ParameterStore> make_store(const rondo::NetworkShape& shape, const rondo::RunConfig& cfg,
                                                  rondo::AgentRole role, const char* resume) {
  if (!resume) {
    return std::make_unique<rondo::ParameterStore>(
        shape, rondo::init_params(shape, rondo::derive_seed(cfg.run.master_seed, 0xC0FFEE)), cfg.learner);
  }
  rondo::Checkpoint ck = rondo::load_checkpoint(resume);
  if (ck.role != role || !(ck.shape == shape)) {
    throw rondo::ValidationError(std::string(resume) + " does not match the configured network");
  }
  auto store = std::make_unique<rondo::ParameterStore>(shape, ck.params, cfg.learner);
  store->restore(std::move(ck.params), std::move(ck.optimizer), ck.version);
  return store;
}

void fill_summary(const rondo::TrainResult& r, rondo_train_summary* out) {
  if (!out) return;
  out->episodes = r.episodes;
  out->sweeps = static_cast<std::int32_t>(r.sweeps.size());
  out->version = r.last.version;
  out->best_reaches = r.best.validation_reaches;
  out->best_steps = r.best.validation_steps;
  out->warnings = static_cast<std::int32_t>(r.warnings.size());
}

template <typename TrainFn>
rondo_status train(const rondo_config* cfg, const char* out_dir, const char* resume, rondo_train_summary* out,
                   rondo::AgentRole role, TrainFn&& fn) {
  if (!cfg) return fail(RONDO_ERR_ARGUMENT, "null config");
  return guarded([&] {
    const auto dir = out_path(out_dir);
    const auto& shape = role == rondo::AgentRole::Active ? cfg->cfg.network.active : cfg->cfg.network.passive;
    const auto store = make_store(shape, cfg->cfg, role, resume);
    std::ofstream log;
    rondo::TrainOptions opts;
    if (!dir.empty()) {
      log.open(dir / "progress.jsonl");
      if (!log) throw rondo::IoError("cannot write " + (dir / "progress.jsonl").string());
      opts.log = &log;
      opts.checkpoint_dir = dir;
    }
    const rondo::TrainResult r = fn(cfg->cfg, *store, opts);
    if (!dir.empty() && !r.warnings.empty()) {
      std::ofstream w(dir / "warnings.txt");
      for (const auto& s : r.warnings) w << s << '\n';
    }
    fill_summary(r, out);
  });
}

}  // namespace

extern "C" {

const char* rondo_last_error(void) { return g_last_error.c_str(); }

const char* rondo_status_name(rondo_status s) {
  switch (s) {
    case RONDO_OK: return "ok";
    case RONDO_ERR_ARGUMENT: return "argument error";
    case RONDO_ERR_PARSE: return "parse error";
    case RONDO_ERR_VALIDATION: return "validation error";
    case RONDO_ERR_DOMAIN: return "domain error";
    case RONDO_ERR_CONTRACT: return "contract error";
    case RONDO_ERR_IO: return "i/o error";
    case RONDO_ERR_NUMERIC: return "non-finite gradient";
    case RONDO_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void rondo_string_free(char* s) { std::free(s); }

rondo_status rondo_config_load(const char* path, const char* const* overrides, size_t n, rondo_config** out) {
  if (!out) return fail(RONDO_ERR_ARGUMENT, "null output handle");
  if (n > 0 && !overrides) return fail(RONDO_ERR_ARGUMENT, "null overrides");
  *out = nullptr;
  return guarded([&] {
    std::vector<std::string> ov;
    for (size_t i = 0; i < n; ++i) ov.emplace_back(overrides[i]);
    auto c = std::make_unique<rondo_config>();
    c->cfg = path ? rondo::load_run_config(path, ov) : rondo::parse_run_config("{}", ov);
    *out = c.release();
  });
}

void rondo_config_free(rondo_config* cfg) { delete cfg; }

rondo_status rondo_config_set(rondo_config* cfg, const char* assignment) {
  if (!cfg || !assignment) return fail(RONDO_ERR_ARGUMENT, "null argument");
  return guarded([&] { cfg->cfg = rondo::parse_run_config(rondo::run_config_to_json(cfg->cfg), {assignment}); });
}

rondo_status rondo_config_to_json(const rondo_config* cfg, char** out) {
  if (!cfg || !out) return fail(RONDO_ERR_ARGUMENT, "null argument");
  return guarded([&] { *out = dup_string(rondo::run_config_to_json(cfg->cfg)); });
}

rondo_status rondo_config_name(const rondo_config* cfg, char** out) {
  if (!cfg || !out) return fail(RONDO_ERR_ARGUMENT, "null argument");
  return guarded([&] { *out = dup_string(cfg->cfg.run.name); });
}

rondo_status rondo_train_active(const rondo_config* cfg, const char* out_dir, const char* resume,
                                rondo_train_summary* out) {
  return train(cfg, out_dir, resume, out, rondo::AgentRole::Active,
               [](const rondo::RunConfig& c, rondo::ParameterStore& s, const rondo::TrainOptions& o) {
                 return rondo::train_active(c, s, o);
               });
}

rondo_status rondo_train_passive(const rondo_config* cfg, const char* out_dir, const char* resume,
                                 rondo_train_summary* out) {
  return train(cfg, out_dir, resume, out, rondo::AgentRole::Passive,
               [](const rondo::RunConfig& c, rondo::ParameterStore& s, const rondo::TrainOptions& o) {
                 return rondo::train_passives(c, s, o);
               });
}

rondo_status rondo_evaluate(const rondo_config* cfg, const char* checkpoint, const char* traffic, const char* out_dir,
                            rondo_metrics* out) {
  if (!cfg) return fail(RONDO_ERR_ARGUMENT, "null config");
  return guarded([&] {
    const auto dir = out_path(out_dir);
    const rondo::MetricsReport m = experiment(cfg->cfg, policy_for(checkpoint), traffic);
    if (!dir.empty()) {
      rondo::write_episode_csv(dir / "episodes.csv", m);
      rondo::write_summary_json(dir / "summary.json", m, rondo::run_config_to_json(cfg->cfg), cfg->cfg.run.master_seed,
                                checkpoint_hash(checkpoint));
    }
    if (out) *out = to_c(m);
  });
}

rondo_status rondo_compare(const rondo_config* cfg, const char* const* names, const char* const* checkpoints, size_t n,
                           const char* traffic, const char* out_dir, char** table) {
  if (!cfg || (n > 0 && (!names || !checkpoints))) return fail(RONDO_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto dir = out_path(out_dir);
    std::vector<std::pair<std::string, rondo::MetricsReport>> reports;
    for (size_t i = 0; i < n; ++i) {
      reports.emplace_back(names[i], experiment(cfg->cfg, policy_for(checkpoints[i]), traffic));
    }
    const rondo::ComparisonTable t = rondo::compare_models(reports);
    if (!dir.empty()) {
      std::ofstream csv(dir / "comparison.csv");
      csv << t.to_csv();
      if (!csv) throw rondo::IoError("cannot write " + (dir / "comparison.csv").string());
    }
    if (table) *table = dup_string(t.to_text());
  });
}

rondo_status rondo_render(const rondo_config* cfg, const char* checkpoint, int64_t episode, const char* out_dir,
                          size_t* files_written) {
  if (!cfg || !out_dir) return fail(RONDO_ERR_ARGUMENT, "null argument");
  if (episode < 0) return fail(RONDO_ERR_ARGUMENT, "episode index must be >= 0");
  return guarded([&] {
    const rondo::RunConfig& c = cfg->cfg;
    rondo::MapLibrary maps(c);
    const rondo::ExperimentSetup setup = rondo::experiment_from_config(
        c, maps.get(c.evaluation.map), policy_for(checkpoint), rondo::parse_traffic_level(c.evaluation.traffic));
    const rondo::EpisodeSpec spec = rondo::experiment_episode(setup, episode);
    rondo::PassiveDriver driver(setup.passive_control, setup.passive_policy, setup.perception);
    rondo::EpisodeTrace trace;
    rondo::EpisodeOptions opts;
    opts.greedy = setup.greedy;
    opts.stall_limit = setup.stall_limit;
    opts.action_seed = rondo::derive_seed(spec.seed, 7);
    opts.trace = &trace;
    trace.record = rondo::run_episode(spec, driver, setup.policy, opts);
    trace.record.index = episode;
    const auto files = rondo::render_episode(trace, out_path(out_dir));
    if (files_written) *files_written = files.size();
  });
}

rondo_status rondo_map_validate(const char* path, rondo_map_info* out) {
  if (!path) return fail(RONDO_ERR_ARGUMENT, "null path");
  return guarded([&] {
    const rondo::TrackMap m = rondo::load_map(path);
    rondo::validate_map(m);
    if (out) {
      out->kind = m.kind == rondo::MapKind::Junction ? 1 : 0;
      out->entry_lanes = static_cast<std::uint32_t>(m.entry_lanes.size());
      out->exit_lanes = static_cast<std::uint32_t>(m.exit_lanes.size());
      out->traffic_paths = static_cast<std::uint32_t>(m.traffic_paths.size());
      out->spawn_points = static_cast<std::uint32_t>(m.spawn_points.size());
      out->longest_path = m.longest_traffic_path();
    }
  });
}

}  // extern "C"
