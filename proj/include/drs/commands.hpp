#pragma once

// Phase runners behind the command-line tool. Each run writes only inside
// <output root>/<name>-seed<k>/.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drs/config.hpp"
#include "drs/error.hpp"
#include "drs/loop.hpp"
#include "drs/tabular.hpp"

namespace drs {

inline constexpr const char* kOutputRootVar = "DRS_OUTPUT_ROOT";

inline std::filesystem::path output_root() {
  const char* v = std::getenv(kOutputRootVar);
  return (v && *v) ? std::filesystem::path(v) : std::filesystem::path("runs");
}

inline std::filesystem::path run_dir(const std::filesystem::path& root, const RunConfig& cfg, std::uint64_t seed) {
  return root / (cfg.name + "-seed" + std::to_string(seed));
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string s = "env_steps,eval_success_rate,mean_episode_return\n";
  for (const auto& p : curve)
    s += std::to_string(p.env_steps) + "," + format_number(p.eval_success_rate) + "," + format_number(p.mean_episode_return) + "\n";
  return s;
}

inline void write_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) { write_text(path, curve_csv(curve)); }

inline std::vector<CurvePoint> read_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve file '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "env_steps,eval_success_rate,mean_episode_return") throw FormatError("'" + path.string() + "' is not a curve file");
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    long long steps = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf", &steps, &p.eval_success_rate, &p.mean_episode_return) != 3)
      throw FormatError("bad curve row '" + line + "'");
    p.env_steps = steps;
    out.push_back(p);
  }
  return out;
}

/// Keeps a loaded reward and whatever it points into alive together.
struct RewardHandle {
  std::unique_ptr<LearnedReward> learned;
  std::unique_ptr<GailDiscriminator> gail;
  std::unique_ptr<RewardFunction> owned;
  const RewardFunction* fn = nullptr;
};

inline RewardHandle load_reward(const RunConfig& cfg, std::uint64_t seed, const Env& env) {
  RewardHandle h;
  const EnvSpec spec = env.spec();
  const std::string path = with_seed(cfg.reward_checkpoint, seed);
  if (cfg.reward == "sparse") {
    h.owned = std::make_unique<SparseReward>();
  } else if (cfg.reward == "semi_sparse") {
    h.owned = std::make_unique<SemiSparseReward>(spec.num_stages);
  } else if (cfg.reward == "drs") {
    h.learned = std::make_unique<LearnedReward>(LearnedReward::load(path));
    check_reward_compatible(env, *h.learned);
    h.learned->bank().freeze_all();
    h.fn = h.learned.get();
    return h;
  } else {
    h.gail = std::make_unique<GailDiscriminator>(GailDiscriminator::load(path));
    if (h.gail->obs_dim() != spec.obs_dim)
      throw CompatibilityError("GAIL discriminator input " + std::to_string(h.gail->obs_dim()) + " does not fit environment '" +
                               env.id() + "' (" + describe(spec) + ")");
    h.owned = std::make_unique<GailReward>(h.gail.get(), spec.num_stages, cfg.loop.gail_lambda, cfg.reward == "gail_stages");
  }
  h.fn = h.owned.get();
  return h;
}

inline json curve_summary(const std::vector<CurvePoint>& curve) {
  json j = {{"eval_points", curve.size()}};
  if (!curve.empty()) j["final_eval_success_rate"] = curve.back().eval_success_rate;
  return j;
}

inline void save_policy(const QAgent& agent, const Env& env, const std::filesystem::path& path) { agent.save(path, env.spec(), env.id()); }

inline json run_tabular(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir) {
  std::string csv = "map,states,holds,counterexamples\n";
  json maps = json::array();
  for (const auto& m : cfg.tabular.maps) {
    GridMap map;
    Cell goal{};
    if (m == "empty8") {
      map = GridMap::empty(8, 8);
      goal = {7, 7};
    } else {
      auto env = make_env(m, seed);
      auto* nav = dynamic_cast<NavEnv*>(env.get());
      if (!nav) throw ConfigError("tabular map '" + m + "' must be empty8 or a nav env");
      map = nav->map();
      goal = {map.width() / 2, map.height() - 3};
    }
    const TabularMDP mdp(map, goal);
    const auto buffers = emulate_converged_buffers(mdp, cfg.tabular.success_per_state * mdp.num_states(),
                                                   cfg.tabular.failure_per_state * mdp.num_states(), derive_seed(seed, 6));
    const bool trivial = buffers.success.empty();
    const TabularReward r = trivial ? TabularReward(mdp.num_states())
                                    : train_tabular_discriminator(buffers, mdp.num_states(), cfg.tabular.train_steps, cfg.tabular.lr);
    const auto rep = verify_greedy_optimality(r, mdp);
    csv += m + "," + std::to_string(mdp.num_states()) + "," + (rep.holds ? "true" : "false") + "," +
           std::to_string(rep.counterexamples.size()) + "\n";
    json cex = json::array();
    for (const auto& c : rep.counterexamples) cex.push_back({{"x", c.cell.x}, {"y", c.cell.y}, {"reason", c.reason}});
    maps.push_back({{"map", m}, {"states", mdp.num_states()}, {"holds", rep.holds}, {"counterexamples", cex}});
  }
  write_text(dir / "tabular.csv", csv);
  return {{"maps", maps}};
}

inline json run_gen_demos(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir) {
  auto env = make_env(cfg.env, seed, cfg.stage_merge);
  const auto demos = gen_demos(*env, cfg.loop.demos, derive_seed(seed, 4));
  std::string text;
  for (const auto& d : demos) {
    json obs = json::array(), actions = json::array();
    obs.push_back(d.transitions().front().obs);
    for (const auto& t : d.transitions()) {
      obs.push_back(t.next_obs);
      actions.push_back(t.action);
    }
    text += json{{"length", d.size()}, {"actions", actions}, {"observations", obs}}.dump() + "\n";
  }
  write_text(dir / "demos.jsonl", text);
  return {{"demos", demos.size()}};
}

/// Runs one seed of a config; returns the per-run results block.
inline json run_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& root) {
  const auto dir = run_dir(root, cfg, seed);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
  LoopConfig loop = cfg.loop;
  loop.seed = seed;
  json results;
  if (cfg.phase == "tabular_verify") {
    results = run_tabular(cfg, seed, dir);
  } else if (cfg.phase == "gen_demos") {
    results = run_gen_demos(cfg, seed, dir);
  } else if (cfg.phase == "learn_reward") {
    auto env = make_env(cfg.env, seed, cfg.stage_merge);
    if (cfg.reward == "drs") {
      auto r = reward_learning_phase(*env, loop);
      write_curve(dir / "curve.csv", r.curve);
      r.reward.save(dir / "reward_bank.drsw");
      save_policy(r.policy, *env, dir / "policy.drsw");
      results = curve_summary(r.curve);
    } else {
      auto r = gail_learning_phase(*env, loop);
      write_curve(dir / "curve.csv", r.curve);
      r.disc.save(dir / "reward_bank.drsw", env->spec().num_stages);
      save_policy(r.policy, *env, dir / "policy.drsw");
      results = curve_summary(r.curve);
    }
  } else {
    auto env = make_env(cfg.env, seed, cfg.stage_merge);
    const RewardHandle reward = load_reward(cfg, seed, *env);
    std::optional<TrainResult> r;
    if (cfg.phase == "reuse_reward") {
      r = train_from_scratch(*env, *reward.fn, loop);
    } else {
      const auto ckpt = load_policy(with_seed(cfg.policy_checkpoint, seed));
      r = finetune_policy(*env, ckpt.net, *reward.fn, loop);
    }
    write_curve(dir / "curve.csv", r->curve);
    save_policy(r->policy, *env, dir / "policy.drsw");
    results = curve_summary(r->curve);
  }
  json manifest = {{"manifest_version", 1}, {"config", to_json(cfg)}, {"seed", seed}, {"results", results}};
  manifest["config"]["seeds"] = {seed};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return results;
}

struct HeatmapRow {
  Cell cell;
  std::array<double, kActionCount> reward{};
};

/// Learned reward of every free cell and action with the goal held fixed;
/// only navigation environments have a single goal cell to pin.
inline std::vector<HeatmapRow> reward_heatmap(const LearnedReward& reward, const NavEnv& env, Cell goal) {
  if (!env.map().is_free(goal)) throw UsageError("heatmap goal must be a free cell");
  std::vector<HeatmapRow> rows;
  for (const Cell& c : env.map().free_cells()) {
    HeatmapRow row{c, {}};
    for (int a = 0; a < kActionCount; ++a) {
      const Cell n = env.map().move(c, a);
      Transition t;
      t.obs = env.observe(c, goal);
      t.action = a;
      t.next_obs = env.observe(n, goal);
      t.next_stages = StageVector{n == goal};
      t.success = n == goal;
      t.terminal = t.success;
      row.reward[static_cast<std::size_t>(a)] = reward(t);
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string heatmap_csv(const std::vector<HeatmapRow>& rows, Cell goal) {
  std::string s = "x,y,r_up,r_down,r_left,r_right,r_stay,goal_x,goal_y\n";
  for (const auto& r : rows) {
    s += std::to_string(r.cell.x) + "," + std::to_string(r.cell.y);
    for (double v : r.reward) s += "," + format_number(v);
    s += "," + std::to_string(goal.x) + "," + std::to_string(goal.y) + "\n";
  }
  return s;
}

inline void export_heatmap(const std::filesystem::path& reward_ckpt, const std::string& env_id, const std::filesystem::path& out,
                           std::optional<Cell> goal = std::nullopt) {
  auto env = make_env(env_id, 0);
  auto* nav = dynamic_cast<NavEnv*>(env.get());
  if (!nav) throw ConfigError("export-heatmap needs a navigation env, got '" + env_id + "'");
  const LearnedReward reward = LearnedReward::load(reward_ckpt);
  check_reward_compatible(*env, reward);
  const Cell g = goal.value_or(Cell{8, 14});
  write_text(out, heatmap_csv(reward_heatmap(reward, *nav, g), g));
}

inline EvalResult eval_checkpoint(const std::filesystem::path& policy_ckpt, const std::string& env_id, int episodes, std::uint64_t seed) {
  auto env = make_env(env_id, seed);
  const auto ckpt = load_policy(policy_ckpt);
  const EnvSpec s = env->spec();
  if (ckpt.net.input_size() != s.obs_dim || ckpt.net.output_size() != s.action_count)
    throw CompatibilityError("policy checkpoint (" + std::to_string(ckpt.net.input_size()) + " -> " +
                             std::to_string(ckpt.net.output_size()) + ") does not fit environment '" + env_id + "' (" + describe(s) + ")");
  const SparseReward sparse;
  return evaluate_detailed(greedy_policy(ckpt.net), *env, episodes, seed, &sparse);
}

}  // namespace drs
