#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drs/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kCompat = 3, kIo = 4 };

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const drs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const drs::UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const drs::CompatibilityError& e) {
    std::cerr << "compatibility error: " << e.what() << "\n";
    return kCompat;
  } catch (const drs::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const drs::FormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

bool tabular_holds(const drs::json& results) {
  for (const auto& m : results.at("maps"))
    if (!m.at("holds").get<bool>()) return false;
  return true;
}

int run_one(const drs::RunConfig& cfg, std::uint64_t seed) {
  return guarded([&] {
    const auto results = drs::run_seed(cfg, seed, drs::output_root());
    std::cout << cfg.name << " seed " << seed << ": " << results.dump() << "\n";
    if (cfg.phase == "tabular_verify" && !tabular_holds(results)) return static_cast<int>(kFailure);
    return static_cast<int>(kOk);
  });
}

int run_config(const std::string& path, const std::string& phase) {
  drs::RunConfig cfg;
  if (int rc = guarded([&] {
        cfg = drs::load_config(path);
        if (cfg.phase != phase) throw drs::ConfigError("config '" + path + "' is for phase '" + cfg.phase + "', not '" + phase + "'");
        return static_cast<int>(kOk);
      }))
    return rc;
  int worst = kOk;
  if (!cfg.parallel_seeds) {
    for (auto seed : cfg.seeds) worst = std::max(worst, run_one(cfg, seed));
    return worst;
  }
  std::cout.flush();
  std::vector<pid_t> children;
  for (auto seed : cfg.seeds) {
    const pid_t pid = fork();
    if (pid < 0) {
      std::cerr << "i/o error: fork failed\n";
      return kIo;
    }
    if (pid == 0) {
      const int rc = run_one(cfg, seed);
      std::cout.flush();
      _exit(rc);
    }
    children.push_back(pid);
  }
  for (pid_t pid : children) {
    int status = 0;
    waitpid(pid, &status, 0);
    worst = std::max(worst, WIFEXITED(status) ? WEXITSTATUS(status) : static_cast<int>(kFailure));
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stage-based dense reward learning workbench"};
  app.require_subcommand(1);
  int rc = kOk;

  struct PhaseCmd {
    const char* name;
    const char* phase;
    const char* help;
  };
  const PhaseCmd phases[] = {
      {"learn-reward", "learn_reward", "Learn a reward on the configured env"},
      {"reuse-reward", "reuse_reward", "Train fresh agents with a fixed or learned reward"},
      {"finetune", "finetune", "Continue training a saved policy"},
      {"tabular-verify", "tabular_verify", "Check greedy-optimality of a tabular discriminator reward"},
      {"gen-demos", "gen_demos", "Write planner demonstrations"},
  };
  std::string config_path;
  for (const auto& p : phases) {
    auto* sub = app.add_subcommand(p.name, p.help);
    sub->add_option("config", config_path, "JSON config file")->required();
    const std::string phase = p.phase;
    sub->callback([&rc, &config_path, phase] { rc = run_config(config_path, phase); });
  }

  std::string ckpt, env_id, out_path, goal_text;
  auto* heat = app.add_subcommand("export-heatmap", "Per-cell, per-action learned reward as CSV");
  heat->add_option("reward_ckpt", ckpt)->required();
  heat->add_option("env_id", env_id)->required();
  heat->add_option("out", out_path)->required();
  heat->add_option("--goal", goal_text, "goal cell as x,y");
  heat->callback([&] {
    rc = guarded([&] {
      std::optional<drs::Cell> goal;
      if (!goal_text.empty()) {
        drs::Cell g{};
        if (std::sscanf(goal_text.c_str(), "%d,%d", &g.x, &g.y) != 2) throw drs::ConfigError("--goal must look like x,y");
        goal = g;
      }
      drs::export_heatmap(ckpt, env_id, out_path, goal);
      return static_cast<int>(kOk);
    });
  });

  int episodes = 100;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Greedy success rate of a saved policy");
  eval->add_option("policy_ckpt", ckpt)->required();
  eval->add_option("env_id", env_id)->required();
  eval->add_option("episodes", episodes)->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed);
  eval->callback([&] {
    rc = guarded([&] {
      const auto r = drs::eval_checkpoint(ckpt, env_id, episodes, seed);
      std::cout << "success_rate " << drs::format_number(r.success_rate) << "\nmean_return " << drs::format_number(r.mean_return) << "\n";
      return static_cast<int>(kOk);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }
  return rc;
}
