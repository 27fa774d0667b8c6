#pragma once

// Training loops: the reward-learning phase (agent, stage buffers and
// discriminators trained together), the reuse phase (fresh agent on a frozen
// reward), and fine-tuning a byproduct policy.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drs/buffers.hpp"
#include "drs/dqn.hpp"
#include "drs/error.hpp"
#include "drs/grid.hpp"
#include "drs/random.hpp"
#include "drs/reward.hpp"
#include "drs/stages.hpp"

namespace drs {

struct CurvePoint {
  std::int64_t env_steps = 0;
  double eval_success_rate = 0.0;
  double mean_episode_return = 0.0;
};

struct LoopConfig {
  std::int64_t total_steps = 150'000;
  int eval_interval = 5000;
  int eval_episodes = 20;
  std::uint64_t seed = 0;
  DqnConfig dqn;
  DiscriminatorConfig disc;
  double alpha = kDefaultAlpha;
  RewardFormula formula = RewardFormula::stage_band;
  InputMode input_mode = InputMode::next_state;
  int demos = 100;
  std::size_t stage_buffer_capacity = StageBuffers::kDefaultCapacity;
  double gail_lambda = 1.0 / 3.0;

  void validate() const {
    if (total_steps < 0) throw ConfigError("steps must be non-negative");
    if (eval_interval < 1) throw ConfigError("eval_interval must be positive");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
    if (demos < 0) throw ConfigError("demos must be non-negative");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 1/2)");
    if (disc.batch_size < 2) throw ConfigError("discriminator batch_size must be at least 2");
    if (gail_lambda < 0.0) throw ConfigError("gail_lambda must be non-negative");
    dqn.validate();
  }

  std::int64_t eps_decay_steps() const {
    return static_cast<std::int64_t>(dqn.eps_decay_fraction * static_cast<double>(total_steps));
  }
};

using Policy = std::function<int(const Env&, const std::vector<double>&)>;

inline Policy greedy_policy(const QAgent& agent) {
  return [&agent](const Env&, const std::vector<double>& obs) { return agent.greedy_action(obs); };
}

inline Policy greedy_policy(const DenseNet& net) {
  return [&net](const Env&, const std::vector<double>& obs) {
    const Eigen::VectorXd q = net.forward(obs);
    int best = 0;
    for (int a = 1; a < q.size(); ++a)
      if (q(a) > q(best)) best = a;
    return best;
  };
}

/// Follows the environment's planner.
inline Policy planner_policy() {
  return [](const Env& env, const std::vector<double>&) { return env.plan_actions().front(); };
}

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
};

/// Rollouts on fresh resets of a copy of `env` seeded with `seed`. Returns
/// are accumulated under `reward` when given.
inline EvalResult evaluate_detailed(const Policy& policy, const Env& env, int episodes, std::uint64_t seed,
                                    const RewardFunction* reward = nullptr) {
  if (episodes < 1) throw UsageError("evaluate: episodes must be positive");
  auto e = env.clone();
  e->reseed(seed);
  int successes = 0;
  double total_return = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    auto obs = e->reset();
    bool done = false;
    while (!done) {
      const int a = policy(*e, obs);
      auto r = e->step(a);
      if (reward) total_return += (*reward)(r.transition);
      obs = r.transition.next_obs;
      done = r.done;
      if (r.transition.success) ++successes;
    }
  }
  return {static_cast<double>(successes) / episodes, total_return / episodes};
}

inline double evaluate(const Policy& policy, const Env& env, int episodes, std::uint64_t seed) {
  return evaluate_detailed(policy, env, episodes, seed).success_rate;
}

/// Hook for whatever learns alongside the agent.
class RewardLearner {
 public:
  virtual ~RewardLearner() = default;
  virtual void observe_trajectory(Trajectory traj) = 0;
  virtual void update(std::int64_t env_step, Rng& rng) = 0;
  virtual void on_env_step(std::int64_t, Rng&) {}
};

/// Stage buffers plus the discriminator bank of a learned reward.
class DrsLearner final : public RewardLearner {
 public:
  DrsLearner(LearnedReward& reward, StageBuffers& buffers) : reward_(reward), buffers_(buffers) {}
  void observe_trajectory(Trajectory traj) override {
    reward_.bank().record_trajectory(traj.stage_index());
    buffers_.route(std::move(traj));
  }
  void update(std::int64_t, Rng& rng) override {
    const int bs = reward_.bank().config().batch_size;
    last_ = reward_.bank().train(buffers_, 1, bs, rng);
  }
  void on_env_step(std::int64_t env_step, Rng& rng) override {
    const auto& es = reward_.bank().config().early_stop;
    if (es.enabled && env_step % es.probe_interval == 0) reward_.bank().probe(buffers_, reward_.bank().config().batch_size, rng);
  }
  const std::vector<StageTrainReport>& last_reports() const { return last_; }

 private:
  LearnedReward& reward_;
  StageBuffers& buffers_;
  std::vector<StageTrainReport> last_;
};

class GailLearner final : public RewardLearner {
 public:
  GailLearner(GailDiscriminator& disc, StageBuffers& demos, const ReplayBuffer& replay, int batch_size)
      : disc_(disc), demos_(demos), replay_(replay), batch_size_(batch_size) {}
  void observe_trajectory(Trajectory traj) override { demos_.route(std::move(traj)); }
  void update(std::int64_t, Rng& rng) override { disc_.train(demos_, replay_, batch_size_, rng); }

 private:
  GailDiscriminator& disc_;
  StageBuffers& demos_;
  const ReplayBuffer& replay_;
  int batch_size_;
};

/// Shared agent/environment loop. Transitions enter replay immediately;
/// whole trajectories go to the learner when their episode ends.
inline std::vector<CurvePoint> run_training(Env& env, QAgent& agent, const RewardFunction& reward, const LoopConfig& cfg,
                                            RewardLearner* learner, ReplayBuffer& replay) {
  std::vector<CurvePoint> curve;
  if (cfg.total_steps == 0) return curve;
  Rng rng(derive_seed(cfg.seed, 3));
  env.reseed(derive_seed(cfg.seed, 1));
  auto eval_env = env.clone();
  std::vector<double> obs = env.reset();
  std::vector<Transition> episode;
  std::vector<const Transition*> batch;
  std::int64_t eval_index = 0;
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    const int a = agent.select_action(obs, step - 1, rng);
    StepResult r = env.step(a);
    obs = r.transition.next_obs;
    replay.push(r.transition);
    episode.push_back(std::move(r.transition));
    if (r.done) {
      if (learner) learner->observe_trajectory(Trajectory(std::move(episode)));
      episode.clear();
      obs = env.reset();
    }
    if (learner) learner->on_env_step(step, rng);
    if (step > cfg.dqn.warmup_steps && step % cfg.dqn.train_frequency == 0) {
      if (learner) learner->update(step, rng);
      auto sample = replay.sample(static_cast<std::size_t>(cfg.dqn.batch_size), rng);
      if (sample) agent.update(*sample, reward);
    }
    if (step % cfg.dqn.target_sync_interval == 0) agent.sync_target();
    if (step % cfg.eval_interval == 0) {
      const auto ev = evaluate_detailed(greedy_policy(agent), *eval_env, cfg.eval_episodes,
                                        derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(eval_index++)), &reward);
      curve.push_back({step, ev.success_rate, ev.mean_return});
    }
  }
  return curve;
}

struct LearnPhaseResult {
  LearnedReward reward;
  QAgent policy;
  std::vector<CurvePoint> curve;
};

inline void check_config_against(const Env& env, const LoopConfig& cfg) {
  cfg.validate();
  env.spec().validate();
}

/// Reward learning: demos seeded into B_N, agent trained on the live
/// learned reward, discriminators trained one step per agent update. The
/// returned reward is frozen.
inline LearnPhaseResult reward_learning_phase(Env& env, const LoopConfig& cfg, std::optional<std::vector<Trajectory>> demos = std::nullopt) {
  check_config_against(env, cfg);
  const EnvSpec spec = env.spec();
  LearnedReward reward(DiscriminatorBank(spec.num_stages, spec.obs_dim, spec.action_count, cfg.input_mode, cfg.disc,
                                         derive_seed(cfg.seed, 5)),
                       cfg.alpha, cfg.formula);
  StageBuffers buffers(spec.num_stages, cfg.stage_buffer_capacity);
  if (!demos && cfg.demos > 0) {
    auto demo_env = env.clone();
    demos = gen_demos(*demo_env, cfg.demos, derive_seed(cfg.seed, 4));
  }
  if (demos) buffers.seed_demos(std::move(*demos));
  QAgent agent(spec.obs_dim, spec.action_count, cfg.dqn, cfg.eps_decay_steps(), derive_seed(cfg.seed, 2));
  ReplayBuffer replay(cfg.dqn.replay_capacity);
  DrsLearner learner(reward, buffers);
  auto curve = run_training(env, agent, reward, cfg, &learner, replay);
  reward.bank().freeze_all();
  return {std::move(reward), std::move(agent), std::move(curve)};
}

struct GailPhaseResult {
  GailDiscriminator disc;
  QAgent policy;
  std::vector<CurvePoint> curve;
};

/// Agent-vs-demo discriminator trained with the agent, which optimises the
/// plain GAIL reward (no stage information).
inline GailPhaseResult gail_learning_phase(Env& env, const LoopConfig& cfg) {
  check_config_against(env, cfg);
  if (cfg.demos < 1) throw ConfigError("GAIL needs demonstrations (demos >= 1)");
  const EnvSpec spec = env.spec();
  GailDiscriminator disc(spec.obs_dim, cfg.disc, derive_seed(cfg.seed, 5));
  StageBuffers demo_store(spec.num_stages, cfg.stage_buffer_capacity);
  auto demo_env = env.clone();
  demo_store.seed_demos(gen_demos(*demo_env, cfg.demos, derive_seed(cfg.seed, 4)));
  QAgent agent(spec.obs_dim, spec.action_count, cfg.dqn, cfg.eps_decay_steps(), derive_seed(cfg.seed, 2));
  ReplayBuffer replay(cfg.dqn.replay_capacity);
  GailReward reward(&disc, spec.num_stages, cfg.gail_lambda, false);
  GailLearner learner(disc, demo_store, replay, cfg.disc.batch_size);
  auto curve = run_training(env, agent, reward, cfg, &learner, replay);
  return {std::move(disc), std::move(agent), std::move(curve)};
}

struct TrainResult {
  QAgent policy;
  std::vector<CurvePoint> curve;
};

/// Fresh agent trained with any fixed reward (sparse, semi-sparse, ...).
inline TrainResult train_from_scratch(Env& env, const RewardFunction& reward, const LoopConfig& cfg) {
  check_config_against(env, cfg);
  const EnvSpec spec = env.spec();
  QAgent agent(spec.obs_dim, spec.action_count, cfg.dqn, cfg.eps_decay_steps(), derive_seed(cfg.seed, 2));
  ReplayBuffer replay(cfg.dqn.replay_capacity);
  auto curve = run_training(env, agent, reward, cfg, nullptr, replay);
  return {std::move(agent), std::move(curve)};
}

inline void check_reward_compatible(const Env& env, const LearnedReward& reward) {
  const EnvSpec s = env.spec();
  const auto& bank = reward.bank();
  if (bank.obs_dim() != s.obs_dim || bank.action_count() != s.action_count || bank.num_stages() != s.num_stages)
    throw CompatibilityError("learned reward (obs_dim=" + std::to_string(bank.obs_dim()) + " actions=" +
                             std::to_string(bank.action_count()) + " stages=" + std::to_string(bank.num_stages()) +
                             ") does not fit environment '" + env.id() + "' (" + describe(s) + ")");
}

/// Reuse: a fresh agent trained only on the frozen learned reward.
inline TrainResult reward_reuse_phase(Env& test_env, const LearnedReward& reward, const LoopConfig& cfg) {
  check_reward_compatible(test_env, reward);
  if (!reward.bank().all_frozen()) throw UsageError("reward_reuse_phase: learned reward must be frozen");
  return train_from_scratch(test_env, reward, cfg);
}

/// Continue training a byproduct policy on a (new) task under `reward`.
inline TrainResult finetune_policy(Env& test_env, const DenseNet& policy, const RewardFunction& reward, const LoopConfig& cfg) {
  check_config_against(test_env, cfg);
  const EnvSpec s = test_env.spec();
  if (policy.input_size() != s.obs_dim || policy.output_size() != s.action_count)
    throw CompatibilityError("policy checkpoint (" + std::to_string(policy.input_size()) + " -> " +
                             std::to_string(policy.output_size()) + ") does not fit environment '" + test_env.id() + "' (" +
                             describe(s) + ")");
  QAgent agent(policy, cfg.dqn, cfg.eps_decay_steps());
  ReplayBuffer replay(cfg.dqn.replay_capacity);
  auto curve = run_training(test_env, agent, reward, cfg, nullptr, replay);
  return {std::move(agent), std::move(curve)};
}

/// First eval point at or above `threshold`, or nullopt.
inline std::optional<std::int64_t> steps_to_reach(const std::vector<CurvePoint>& curve, double threshold) {
  for (const auto& p : curve)
    if (p.eval_success_rate >= threshold) return p.env_steps;
  return std::nullopt;
}

}  // namespace drs
