#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drs/error.hpp"
#include "drs/nn.hpp"
#include "drs/random.hpp"
#include "drs/reward.hpp"
#include "drs/stages.hpp"
#include "drs/weights_io.hpp"

namespace drs {

struct DqnConfig {
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::relu;
  double lr = 1e-3;
  double gamma = 0.95;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.3;  // of the step budget
  int batch_size = 128;
  int target_sync_interval = 500;  // env steps
  int warmup_steps = 1000;
  int train_frequency = 1;  // env steps per update
  // Success is treated as an absorbing state that keeps paying its reward,
  // so the bootstrap target of a success transition is r / (1 - gamma).
  bool absorbing_success = true;
  std::size_t replay_capacity = 1'000'000;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("dqn.gamma must lie in [0, 1)");
    if (!(eps_end >= 0.0 && eps_end <= eps_start && eps_start <= 1.0)) throw ConfigError("dqn epsilon schedule must satisfy 0 <= eps_end <= eps_start <= 1");
    if (!(eps_decay_fraction > 0.0)) throw ConfigError("dqn.eps_decay_fraction must be positive");
    if (batch_size < 1 || target_sync_interval < 1 || warmup_steps < 0 || train_frequency < 1)
      throw ConfigError("dqn batch_size, target_sync_interval, train_frequency must be positive and warmup_steps non-negative");
    if (!(lr > 0.0)) throw ConfigError("dqn.lr must be positive");
    if (replay_capacity == 0) throw ConfigError("dqn.replay_capacity must be positive");
  }
};

class QAgent {
 public:
  QAgent(int obs_dim, int action_count, const DqnConfig& cfg, std::int64_t eps_decay_steps, std::uint64_t seed)
      : cfg_(cfg), decay_steps_(std::max<std::int64_t>(1, eps_decay_steps)) {
    cfg_.validate();
    std::vector<int> sizes{obs_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(action_count);
    online_ = DenseNet(sizes, cfg.activation, derive_seed(seed, 0x71));
    target_ = online_;
    adam_ = AdamState(online_, cfg.lr);
  }

  /// Agent whose online and target nets start from `policy`.
  QAgent(DenseNet policy, const DqnConfig& cfg, std::int64_t eps_decay_steps)
      : cfg_(cfg), decay_steps_(std::max<std::int64_t>(1, eps_decay_steps)), online_(std::move(policy)) {
    cfg_.validate();
    target_ = online_;
    adam_ = AdamState(online_, cfg.lr);
  }

  const DqnConfig& config() const { return cfg_; }
  const DenseNet& online() const { return online_; }
  DenseNet& online() { return online_; }
  const DenseNet& target() const { return target_; }
  int obs_dim() const { return online_.input_size(); }
  int action_count() const { return online_.output_size(); }

  /// Linear from eps_start to eps_end over the decay horizon, then flat.
  double epsilon(std::int64_t step) const {
    if (step >= decay_steps_) return cfg_.eps_end;
    const double frac = static_cast<double>(std::max<std::int64_t>(0, step)) / static_cast<double>(decay_steps_);
    return cfg_.eps_start + frac * (cfg_.eps_end - cfg_.eps_start);
  }

  Eigen::VectorXd q_values(std::span<const double> obs) const { return online_.forward(obs); }

  /// argmax_a Q(obs, a), ties to the lowest index.
  int greedy_action(std::span<const double> obs) const {
    const Eigen::VectorXd q = q_values(obs);
    int best = 0;
    for (int a = 1; a < q.size(); ++a)
      if (q(a) > q(best)) best = a;
    return best;
  }

  int select_action(std::span<const double> obs, std::int64_t step, Rng& rng) const {
    if (static_cast<int>(obs.size()) != obs_dim())
      throw ShapeError("select_action: observation length " + std::to_string(obs.size()) + ", expected " + std::to_string(obs_dim()));
    const double eps = epsilon(step);
    if (eps > 0.0 && uniform01(rng) < eps) return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(action_count())));
    return greedy_action(obs);
  }

  /// TD targets for a batch: r + gamma * (1 - terminal) * max_a Q_target(s', a),
  /// with r recomputed from `reward` now.
  Eigen::VectorXd td_targets(std::span<const Transition* const> batch, const RewardFunction& reward) const {
    const auto n = static_cast<Eigen::Index>(batch.size());
    std::vector<double> r(batch.size());
    reward.evaluate(batch, r);
    Eigen::MatrixXd next(obs_dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = *batch[static_cast<std::size_t>(i)];
      for (int d = 0; d < obs_dim(); ++d) next(d, i) = t.next_obs[static_cast<std::size_t>(d)];
    }
    const Eigen::MatrixXd q_next = target_.forward_batch(next);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = *batch[static_cast<std::size_t>(i)];
      const double ri = r[static_cast<std::size_t>(i)];
      if (t.terminal)
        y(i) = (cfg_.absorbing_success && t.success) ? ri / (1.0 - cfg_.gamma) : ri;
      else
        y(i) = ri + cfg_.gamma * q_next.col(i).maxCoeff();
    }
    return y;
  }

  /// One MSE Adam step on Q(s, a) towards the TD targets; returns the loss
  /// before the step.
  double update(std::span<const Transition* const> batch, const RewardFunction& reward) {
    if (batch.empty()) throw UsageError("dqn_update: empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::VectorXd y = td_targets(batch, reward);
    Eigen::MatrixXd obs(obs_dim(), n);
    LossTargets t{LossKind::mse, Eigen::MatrixXd::Zero(action_count(), n), Eigen::MatrixXd::Zero(action_count(), n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& tr = *batch[static_cast<std::size_t>(i)];
      if (static_cast<int>(tr.obs.size()) != obs_dim()) throw ShapeError("dqn_update: observation length mismatch");
      if (tr.action < 0 || tr.action >= action_count()) throw UsageError("dqn_update: action out of range");
      for (int d = 0; d < obs_dim(); ++d) obs(d, i) = tr.obs[static_cast<std::size_t>(d)];
      t.values(tr.action, i) = y(i);
      t.mask(tr.action, i) = 1.0;
    }
    return train_step(online_, adam_, obs, t);
  }

  void sync_target() { target_ = online_; }

  void save(const std::filesystem::path& path, const EnvSpec& spec, const std::string& env_id) const {
    WeightBundle b;
    b.meta = {{"kind", "policy"},
              {"obs_dim", spec.obs_dim},
              {"action_count", spec.action_count},
              {"num_stages", spec.num_stages},
              {"env", env_id}};
    b.nets = {online_};
    save_bundle(b, path);
  }

 private:
  DqnConfig cfg_;
  std::int64_t decay_steps_;
  DenseNet online_;
  DenseNet target_;
  AdamState adam_;
};

struct PolicyCheckpoint {
  DenseNet net;
  EnvSpec spec;
  std::string env_id;
};

inline PolicyCheckpoint load_policy(const std::filesystem::path& path) {
  WeightBundle b = load_bundle(path);
  try {
    if (b.meta.at("kind") != "policy" || b.nets.size() != 1) throw FormatError("'" + path.string() + "' is not a policy checkpoint");
    PolicyCheckpoint p;
    p.spec.obs_dim = b.meta.at("obs_dim").get<int>();
    p.spec.action_count = b.meta.at("action_count").get<int>();
    p.spec.num_stages = b.meta.at("num_stages").get<int>();
    p.env_id = b.meta.at("env").get<std::string>();
    p.net = std::move(b.nets.front());
    if (p.net.input_size() != p.spec.obs_dim || p.net.output_size() != p.spec.action_count)
      throw FormatError("policy net shape disagrees with its header");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed policy checkpoint header: ") + e.what());
  }
}

inline double dqn_update(QAgent& agent, std::span<const Transition* const> batch, const RewardFunction& reward) {
  return agent.update(batch, reward);
}

inline void sync_target(QAgent& agent) { agent.sync_target(); }

}  // namespace drs
