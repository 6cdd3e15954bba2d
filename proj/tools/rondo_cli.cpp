// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rondo/rondo.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct RuntimeFailure {
  std::string what;
};

void check(rondo_status s, const char* what) {
  if (s != RONDO_OK) throw RuntimeFailure{std::string(what) + ": " + rondo_status_name(s) + ": " + rondo_last_error()};
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  rondo_string_free(s);
  return out;
}

class Config {
 public:
  Config(const std::string& path, const std::vector<std::string>& overrides) {
    std::vector<const char*> ov;
    for (const auto& o : overrides) ov.push_back(o.c_str());
    check(rondo_config_load(path.empty() ? nullptr : path.c_str(), ov.data(), ov.size(), &cfg_), "config");
  }
  ~Config() { rondo_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  rondo_config* get() const { return cfg_; }
  std::string json() const {
    char* s = nullptr;
    check(rondo_config_to_json(cfg_, &s), "config");
    return take_string(s);
  }
  std::string name() const {
    char* s = nullptr;
    check(rondo_config_name(cfg_, &s), "config");
    return take_string(s);
  }

 private:
  rondo_config* cfg_ = nullptr;
};

// runs/<timestamp>-<name>/ under $RONDO_OUTPUT_ROOT (default "runs").
fs::path make_run_dir(const std::string& name) {
  const char* root_env = std::getenv("RONDO_OUTPUT_ROOT");
  const fs::path root = root_env && *root_env ? root_env : "runs";
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  fs::path dir = root / (std::string(stamp) + "-" + name);
  for (int k = 1; fs::exists(dir); ++k) dir = root / (std::string(stamp) + "-" + name + "." + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void echo_config(const Config& cfg, const fs::path& dir) {
  std::ofstream out(dir / "config.json");
  out << cfg.json() << '\n';
  if (!out) throw RuntimeFailure{"cannot write " + (dir / "config.json").string()};
}

void print_metrics(const rondo_metrics& m) {
  std::cout << "episodes      " << m.episodes << '\n'
            << "reaches_pct   " << m.reaches_pct << '\n'
            << "crashes_pct   " << m.crashes_pct << '\n'
            << "total_steps   " << m.total_steps << " (sum " << m.total_steps_sum << ")\n"
            << "mean_return   " << m.mean_return << '\n';
  if (m.stalled > 0) std::cout << "stalled       " << m.stalled << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rondo: roundabout and junction insertion agents"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string map, traffic, checkpoint, name;
  std::int64_t episodes = 0;
  std::int64_t episode_index = 0;
  std::vector<std::string> models;
  std::string map_file;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run-config JSON file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override, dotted.key=value (repeatable)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--workers", workers, "worker threads; 1 is bit-exact deterministic")->check(CLI::PositiveNumber);
    sub->add_option("--name", name, "run name used in the output directory");
  };
  auto scenario = [&](CLI::App* sub) {
    sub->add_option("--map", map, "evaluation map name or path");
    sub->add_option("--traffic", traffic, "low, medium, high or all")
        ->check(CLI::IsMember({"low", "medium", "high", "all"}));
    sub->add_option("--episodes", episodes, "episodes per traffic level")->check(CLI::PositiveNumber);
  };

  auto* train_passive = app.add_subcommand("train-passive", "train the passive traffic policy");
  common(train_passive);
  train_passive->add_option("--checkpoint", checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);

  auto* train_active = app.add_subcommand("train-active", "train the active agent");
  common(train_active);
  train_active->add_option("--checkpoint", checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "run the evaluation protocol and write reports");
  common(evaluate);
  scenario(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "active checkpoint, or \"random\"")->required();

  auto* compare = app.add_subcommand("compare", "evaluate several models side by side");
  common(compare);
  scenario(compare);
  compare->add_option("--model", models, "name=checkpoint (repeatable, at least two)")->required();

  auto* render = app.add_subcommand("render", "write images of one evaluation episode");
  common(render);
  scenario(render);
  render->add_option("--checkpoint", checkpoint, "active checkpoint, or \"random\"")->required();
  render->add_option("--episode", episode_index, "evaluation episode index")->check(CLI::NonNegativeNumber);

  auto* map_validate = app.add_subcommand("map-validate", "check a map file and print its summary");
  map_validate->add_option("map", map_file, "map JSON file")->required();

  auto* dump_config = app.add_subcommand("dump-config", "print the resolved run config");
  dump_config->add_option("--config", config_path, "run-config JSON file")->check(CLI::ExistingFile);
  dump_config->add_option("--set", sets, "override, dotted.key=value (repeatable)");
  dump_config->add_option("--seed", seed, "master seed");
  dump_config->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  if (argc < 2) {
    std::cerr << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto overrides = [&](CLI::App* sub) {
    std::vector<std::string> ov = sets;
    if (sub->count("--seed")) ov.push_back("run.master_seed=" + std::to_string(seed));
    if (sub->count("--workers")) ov.push_back("run.workers=" + std::to_string(workers));
    if (sub->get_option_no_throw("--map") && sub->count("--map")) ov.push_back("evaluation.map=\"" + map + "\"");
    if (sub->get_option_no_throw("--traffic") && sub->count("--traffic") && traffic != "all") {
      ov.push_back("evaluation.traffic=\"" + traffic + "\"");
    }
    if (sub->get_option_no_throw("--episodes") && sub->count("--episodes")) {
      ov.push_back("evaluation.episodes=" + std::to_string(episodes));
    }
    if (sub->get_option_no_throw("--name") && sub->count("--name")) ov.push_back("run.name=\"" + name + "\"");
    return ov;
  };
  const char* traffic_arg = traffic == "all" ? "all" : nullptr;

  try {
    if (*map_validate) {
      rondo_map_info info{};
      check(rondo_map_validate(map_file.c_str(), &info), "map-validate");
      std::cout << "map           " << map_file << '\n'
                << "kind          " << (info.kind == 1 ? "junction" : "roundabout") << '\n'
                << "entry lanes   " << info.entry_lanes << '\n'
                << "exit lanes    " << info.exit_lanes << '\n'
                << "traffic paths " << info.traffic_paths << '\n'
                << "spawn points  " << info.spawn_points << '\n'
                << "longest path  " << info.longest_path << " m\n";
      return 0;
    }
    if (*dump_config) {
      const Config cfg(config_path, overrides(dump_config));
      std::cout << cfg.json() << '\n';
      return 0;
    }

    CLI::App* sub = app.get_subcommands().front();
    const Config cfg(config_path, overrides(sub));
    const fs::path dir = make_run_dir(cfg.name());
    echo_config(cfg, dir);
    std::cout << "output        " << dir.string() << '\n';

    if (*train_passive || *train_active) {
      rondo_train_summary s{};
      const char* resume = checkpoint.empty() ? nullptr : checkpoint.c_str();
      if (*train_passive) {
        check(rondo_train_passive(cfg.get(), dir.c_str(), resume, &s), "train-passive");
      } else {
        check(rondo_train_active(cfg.get(), dir.c_str(), resume, &s), "train-active");
      }
      std::cout << "episodes      " << s.episodes << '\n' << "version       " << s.version << '\n';
      if (*train_active) {
        std::cout << "sweeps        " << s.sweeps << '\n'
                  << "best reaches  " << s.best_reaches << " (mean steps " << s.best_steps << ")\n";
      }
      if (s.warnings > 0) std::cout << "warnings      " << s.warnings << " (see warnings.txt)\n";
    } else if (*evaluate) {
      rondo_metrics m{};
      check(rondo_evaluate(cfg.get(), checkpoint.c_str(), traffic_arg, dir.c_str(), &m), "evaluate");
      print_metrics(m);
    } else if (*compare) {
      std::vector<std::string> names, paths;
      for (const auto& m : models) {
        const auto eq = m.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == m.size()) {
          std::cerr << "--model expects name=checkpoint, got \"" << m << "\"\n";
          return kExitUsage;
        }
        names.push_back(m.substr(0, eq));
        paths.push_back(m.substr(eq + 1));
      }
      if (names.size() < 2) {
        std::cerr << "compare needs at least two --model entries\n";
        return kExitUsage;
      }
      std::vector<const char*> n, p;
      for (std::size_t i = 0; i < names.size(); ++i) {
        n.push_back(names[i].c_str());
        p.push_back(paths[i].c_str());
      }
      char* table = nullptr;
      check(rondo_compare(cfg.get(), n.data(), p.data(), n.size(), traffic_arg, dir.c_str(), &table), "compare");
      std::cout << take_string(table);
    } else if (*render) {
      std::size_t files = 0;
      check(rondo_render(cfg.get(), checkpoint.c_str(), episode_index, dir.c_str(), &files), "render");
      std::cout << "images        " << files << '\n';
    }
    return 0;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
