#pragma once

// Experiment configuration files (JSON) and the environment registry.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drs/error.hpp"
#include "drs/grid.hpp"
#include "drs/loop.hpp"
#include "drs/stage_merge.hpp"

namespace drs {

using nlohmann::json;

/// Known ids: nav-train, nav-test, nav:<lower>,<upper>, keydoor-train,
/// keydoor-test, keydoor:<lower>,<upper>.
inline std::unique_ptr<Env> make_env(const std::string& id, std::uint64_t seed) {
  if (id == "nav-train") return make_nav_env(kNavTrainGates, seed, id);
  if (id == "nav-test") return make_nav_env(kNavTestGates, seed, id);
  if (id == "keydoor-train") return make_keydoor_env(kNavTrainGates, seed, id);
  if (id == "keydoor-test") return make_keydoor_env(kNavTestGates, seed, id);
  for (const std::string prefix : {"nav:", "keydoor:"}) {
    if (id.rfind(prefix, 0) != 0) continue;
    NavGates g{};
    char comma = 0;
    std::istringstream in(id.substr(prefix.size()));
    if (!(in >> g.lower >> comma >> g.upper) || comma != ',' || !in.eof())
      throw ConfigError("malformed gate spec in env id '" + id + "'");
    if (prefix == "nav:") return make_nav_env(g, seed, id);
    return make_keydoor_env(g, seed, id);
  }
  throw ConfigError("unknown env id '" + id + "'");
}

inline std::unique_ptr<Env> make_env(const std::string& id, std::uint64_t seed, const std::optional<MergeSpec>& merge) {
  auto env = make_env(id, seed);
  if (merge) return stage_merge(std::move(env), *merge);
  return env;
}

inline const std::vector<std::string>& known_phases() {
  static const std::vector<std::string> p{"learn_reward", "reuse_reward", "finetune", "tabular_verify", "gen_demos"};
  return p;
}

/// drs: learned stage reward. gail / gail_stages: GAIL discriminator reward,
/// alone or added to the semi-sparse reward. sparse / semi_sparse: fixed.
inline const std::vector<std::string>& known_rewards() {
  static const std::vector<std::string> r{"drs", "gail", "gail_stages", "sparse", "semi_sparse"};
  return r;
}

struct TabularConfig {
  std::vector<std::string> maps{"empty8", "nav-train", "nav-test"};
  int success_per_state = 20;
  int failure_per_state = 20;
  int train_steps = 2000;
  double lr = 0.05;
};

struct RunConfig {
  std::string name = "run";
  std::string phase;
  std::string env;
  std::vector<std::uint64_t> seeds;
  std::string reward;
  LoopConfig loop;  // total_steps, alpha, discriminator, dqn, ...
  std::optional<MergeSpec> stage_merge;
  // Paths may contain {seed}, replaced per run.
  std::string reward_checkpoint;
  std::string policy_checkpoint;
  bool parallel_seeds = false;
  TabularConfig tabular;

  void validate() const {
    auto in = [](const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); };
    if (!in(known_phases(), phase)) throw ConfigError("unknown phase '" + phase + "'");
    if (!in(known_rewards(), reward)) throw ConfigError("unknown reward '" + reward + "'");
    if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
    if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("name must be non-empty and contain no '/'");
    loop.validate();
    if (phase != "tabular_verify") make_env(env, 0, stage_merge);
    if (phase == "learn_reward" && reward != "drs" && reward != "gail")
      throw ConfigError("learn_reward trains a 'drs' or 'gail' reward, not '" + reward + "'");
    const bool needs_ckpt = (phase == "reuse_reward" || phase == "finetune") && reward != "sparse" && reward != "semi_sparse";
    if (needs_ckpt && reward_checkpoint.empty()) throw ConfigError("reward '" + reward + "' needs reward_checkpoint");
    if (phase == "finetune" && policy_checkpoint.empty()) throw ConfigError("finetune needs policy_checkpoint");
    if (tabular.success_per_state < 1 || tabular.failure_per_state < 1 || tabular.train_steps < 0 || !(tabular.lr > 0.0))
      throw ConfigError("tabular counts, steps and lr must be positive");
  }
};

inline std::string with_seed(const std::string& pattern, std::uint64_t seed) {
  std::string out = pattern;
  const std::string key = "{seed}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos))
    out.replace(pos, key.size(), std::to_string(seed));
  return out;
}

namespace detail {

/// Reads keys from a JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + label() + "' must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out, bool required = false) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (required) throw ConfigError("missing required key '" + path_ + key + "'");
      return;
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + path_ + key + "': " + e.what());
    }
  }

  const json* sub(const std::string& key, bool required = false) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (required) throw ConfigError("missing required key '" + path_ + key + "'");
      return nullptr;
    }
    return &j_.at(key);
  }

  std::string child(const std::string& key) const { return path_ + key + "."; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + path_ + k + "'");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_.substr(0, path_.size() - 1); }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_early_stop(const json& j, const std::string& path, EarlyStopConfig& es) {
  ObjectReader r(j, path);
  r.get("enabled", es.enabled);
  r.get("freeze_accuracy", es.freeze_accuracy);
  r.get("unfreeze_accuracy", es.unfreeze_accuracy);
  r.get("window", es.window);
  r.get("probe_interval", es.probe_interval);
  r.get("freeze_success_rate", es.freeze_success_rate);
  r.get("unfreeze_success_rate", es.unfreeze_success_rate);
  r.get("success_window", es.success_window);
  r.finish();
  if (es.window < 1 || es.probe_interval < 1 || es.success_window < 1)
    throw ConfigError(path + "window, probe_interval and success_window must be positive");
}

inline void read_discriminator(const json& j, const std::string& path, LoopConfig& loop) {
  ObjectReader r(j, path);
  auto& d = loop.disc;
  r.get("hidden", d.hidden);
  std::string act = to_string(d.activation), mode = to_string(loop.input_mode), formula = to_string(loop.formula);
  r.get("activation", act);
  r.get("input_mode", mode);
  r.get("formula", formula);
  d.activation = activation_from_string(act);
  loop.input_mode = input_mode_from_string(mode);
  loop.formula = reward_formula_from_string(formula);
  r.get("lr", d.lr);
  r.get("batch_size", d.batch_size);
  read_early_stop(*r.sub("early_stop", true), r.child("early_stop"), d.early_stop);
  r.finish();
  if (!(d.lr > 0.0)) throw ConfigError(path + "lr must be positive");
  for (int h : d.hidden)
    if (h < 1) throw ConfigError(path + "hidden sizes must be positive");
}

inline void read_dqn(const json& j, const std::string& path, DqnConfig& q) {
  ObjectReader r(j, path);
  r.get("hidden", q.hidden);
  std::string act = to_string(q.activation);
  r.get("activation", act);
  q.activation = activation_from_string(act);
  r.get("lr", q.lr);
  r.get("gamma", q.gamma);
  r.get("eps_start", q.eps_start);
  r.get("eps_end", q.eps_end);
  r.get("eps_decay_fraction", q.eps_decay_fraction);
  r.get("batch_size", q.batch_size);
  r.get("target_sync_interval", q.target_sync_interval);
  r.get("warmup_steps", q.warmup_steps);
  r.get("train_frequency", q.train_frequency);
  r.get("absorbing_success", q.absorbing_success);
  r.get("replay_capacity", q.replay_capacity);
  r.finish();
  for (int h : q.hidden)
    if (h < 1) throw ConfigError(path + "hidden sizes must be positive");
}

inline void read_tabular(const json& j, const std::string& path, TabularConfig& t) {
  ObjectReader r(j, path);
  r.get("maps", t.maps);
  r.get("success_per_state", t.success_per_state);
  r.get("failure_per_state", t.failure_per_state);
  r.get("train_steps", t.train_steps);
  r.get("lr", t.lr);
  r.finish();
}

}  // namespace detail

/// Parses a config object. A run manifest (with the config under "config")
/// is accepted as well.
inline RunConfig parse_config(const json& root) {
  const json& j = (root.is_object() && root.contains("config") && root.contains("manifest_version")) ? root.at("config") : root;
  detail::ObjectReader r(j, "");
  RunConfig c;
  r.get("name", c.name);
  r.get("phase", c.phase, true);
  r.get("env", c.env, true);
  r.get("seeds", c.seeds, true);
  r.get("steps", c.loop.total_steps, true);
  r.get("reward", c.reward, true);
  r.get("alpha", c.loop.alpha, true);
  detail::read_discriminator(*r.sub("discriminator", true), "discriminator.", c.loop);
  detail::read_dqn(*r.sub("dqn", true), "dqn.", c.loop.dqn);
  r.get("eval_interval", c.loop.eval_interval);
  r.get("eval_episodes", c.loop.eval_episodes);
  r.get("demos", c.loop.demos);
  r.get("stage_buffer_capacity", c.loop.stage_buffer_capacity);
  r.get("gail_lambda", c.loop.gail_lambda);
  if (const json* m = r.sub("stage_merge")) {
    try {
      c.stage_merge = m->get<MergeSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for 'stage_merge': ") + e.what());
    }
  }
  r.get("reward_checkpoint", c.reward_checkpoint);
  r.get("policy_checkpoint", c.policy_checkpoint);
  r.get("parallel_seeds", c.parallel_seeds);
  if (const json* t = r.sub("tabular")) detail::read_tabular(*t, "tabular.", c.tabular);
  r.finish();
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// The effective config, every default spelled out.
inline json to_json(const RunConfig& c) {
  const auto& l = c.loop;
  const auto& d = l.disc;
  const auto& es = d.early_stop;
  const auto& q = l.dqn;
  json j = {
      {"name", c.name},
      {"phase", c.phase},
      {"env", c.env},
      {"seeds", c.seeds},
      {"steps", l.total_steps},
      {"reward", c.reward},
      {"alpha", l.alpha},
      {"discriminator",
       {{"hidden", d.hidden},
        {"activation", to_string(d.activation)},
        {"input_mode", to_string(l.input_mode)},
        {"formula", to_string(l.formula)},
        {"lr", d.lr},
        {"batch_size", d.batch_size},
        {"early_stop",
         {{"enabled", es.enabled},
          {"freeze_accuracy", es.freeze_accuracy},
          {"unfreeze_accuracy", es.unfreeze_accuracy},
          {"window", es.window},
          {"probe_interval", es.probe_interval},
          {"freeze_success_rate", es.freeze_success_rate},
          {"unfreeze_success_rate", es.unfreeze_success_rate},
          {"success_window", es.success_window}}}}},
      {"dqn",
       {{"hidden", q.hidden},
        {"activation", to_string(q.activation)},
        {"lr", q.lr},
        {"gamma", q.gamma},
        {"eps_start", q.eps_start},
        {"eps_end", q.eps_end},
        {"eps_decay_fraction", q.eps_decay_fraction},
        {"batch_size", q.batch_size},
        {"target_sync_interval", q.target_sync_interval},
        {"warmup_steps", q.warmup_steps},
        {"train_frequency", q.train_frequency},
        {"absorbing_success", q.absorbing_success},
        {"replay_capacity", q.replay_capacity}}},
      {"eval_interval", l.eval_interval},
      {"eval_episodes", l.eval_episodes},
      {"demos", l.demos},
      {"stage_buffer_capacity", l.stage_buffer_capacity},
      {"gail_lambda", l.gail_lambda},
      {"reward_checkpoint", c.reward_checkpoint},
      {"policy_checkpoint", c.policy_checkpoint},
      {"parallel_seeds", c.parallel_seeds},
      {"tabular",
       {{"maps", c.tabular.maps},
        {"success_per_state", c.tabular.success_per_state},
        {"failure_per_state", c.tabular.failure_per_state},
        {"train_steps", c.tabular.train_steps},
        {"lr", c.tabular.lr}}},
  };
  if (c.stage_merge) j["stage_merge"] = *c.stage_merge;
  return j;
}

}  // namespace drs
