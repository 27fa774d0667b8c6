#pragma once

// Stage discriminators and the rewards built from them.
//
// f_k separates transitions of trajectories that went beyond stage k
// (label 1) from those that reached at most stage k (label 0). The dense
// reward of a next state at stage k is k + alpha * tanh(f_k(s')), which keeps
// every stage inside its own band (k - alpha, k + alpha] for alpha < 1/2.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drs/buffers.hpp"
#include "drs/error.hpp"
#include "drs/nn.hpp"
#include "drs/random.hpp"
#include "drs/stage_merge.hpp"
#include "drs/stages.hpp"
#include "drs/weights_io.hpp"

namespace drs {

enum class InputMode { next_state, state_action };
enum class RewardFormula { stage_band, sum_all };

inline std::string to_string(InputMode m) { return m == InputMode::next_state ? "next_state" : "state_action"; }
inline InputMode input_mode_from_string(const std::string& s) {
  if (s == "next_state") return InputMode::next_state;
  if (s == "state_action") return InputMode::state_action;
  throw ConfigError("unknown input_mode '" + s + "'");
}
inline std::string to_string(RewardFormula f) { return f == RewardFormula::stage_band ? "stage_band" : "sum_all"; }
inline RewardFormula reward_formula_from_string(const std::string& s) {
  if (s == "stage_band") return RewardFormula::stage_band;
  if (s == "sum_all") return RewardFormula::sum_all;
  throw ConfigError("unknown reward formula '" + s + "'");
}

/// Reward interface consumed by the agent. Rewards are evaluated on whole
/// transitions so that state-action rewards fit the same slot.
class RewardFunction {
 public:
  virtual ~RewardFunction() = default;
  virtual void evaluate(std::span<const Transition* const> batch, std::span<double> out) const = 0;
  virtual std::string name() const = 0;

  double operator()(const Transition& t) const {
    const Transition* p = &t;
    double r = 0.0;
    evaluate({&p, 1}, {&r, 1});
    return r;
  }
};

class SparseReward final : public RewardFunction {
 public:
  void evaluate(std::span<const Transition* const> batch, std::span<double> out) const override {
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = sparse_reward(batch[i]->success);
  }
  std::string name() const override { return "sparse"; }
};

class SemiSparseReward final : public RewardFunction {
 public:
  explicit SemiSparseReward(int num_stages) : num_stages_(num_stages) {}
  void evaluate(std::span<const Transition* const> batch, std::span<double> out) const override {
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = semi_sparse_reward(batch[i]->next_stage_index(), num_stages_);
  }
  std::string name() const override { return "semi_sparse"; }

 private:
  int num_stages_;
};

// ---------------------------------------------------------------------------
// Discriminator bank

/// Two freeze triggers per discriminator f_k:
///  - classification accuracy: mean over the last `window` batches reaches
///    `freeze_accuracy`; a held-out probe below `unfreeze_accuracy` unfreezes.
///  - stage success: the fraction of the last `success_window` collected
///    trajectories that went beyond stage k reaches `freeze_success_rate`;
///    dropping below `unfreeze_success_rate` at a probe unfreezes.
struct EarlyStopConfig {
  bool enabled = true;
  double freeze_accuracy = 0.98;
  double unfreeze_accuracy = 0.95;
  int window = 50;
  int probe_interval = 2000;  // env steps
  double freeze_success_rate = 0.8;
  double unfreeze_success_rate = 0.3;
  int success_window = 50;  // trajectories
};

enum class FreezeReason { none, accuracy, stage_success, manual };

struct DiscriminatorConfig {
  std::vector<int> hidden{32};
  Activation activation = Activation::tanh;
  double lr = 3e-4;
  int batch_size = 128;  // both sides together
  EarlyStopConfig early_stop;
};

struct StageTrainReport {
  bool skipped = true;  // no data on one side, or frozen for the whole call
  bool frozen = false;
  std::optional<double> loss;
  std::optional<double> accuracy;
};

/// Input width of a discriminator for an environment.
inline int feature_dim(InputMode mode, int obs_dim, int action_count) {
  return mode == InputMode::next_state ? obs_dim : obs_dim + action_count;
}

/// Writes the discriminator input of `t` into column `col` of `dst`.
inline void write_features(const Transition& t, InputMode mode, int action_count, Eigen::MatrixXd& dst, Eigen::Index col) {
  if (mode == InputMode::next_state) {
    for (std::size_t i = 0; i < t.next_obs.size(); ++i) dst(static_cast<Eigen::Index>(i), col) = t.next_obs[i];
    return;
  }
  const auto d = static_cast<Eigen::Index>(t.obs.size());
  for (Eigen::Index i = 0; i < d; ++i) dst(i, col) = t.obs[static_cast<std::size_t>(i)];
  for (int a = 0; a < action_count; ++a) dst(d + a, col) = a == t.action ? 1.0 : 0.0;
}

class DiscriminatorBank {
 public:
  DiscriminatorBank() = default;

  DiscriminatorBank(int num_stages, int obs_dim, int action_count, InputMode mode, const DiscriminatorConfig& cfg,
                    std::uint64_t seed)
      : num_stages_(num_stages), obs_dim_(obs_dim), action_count_(action_count), mode_(mode), cfg_(cfg) {
    if (num_stages < 1) throw ConfigError("discriminator bank needs at least one stage");
    if (cfg.batch_size < 2) throw ConfigError("discriminator batch_size must be at least 2");
    std::vector<int> sizes{feature_dim(mode, obs_dim, action_count)};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(1);
    for (int k = 0; k < num_stages; ++k) {
      nets_.emplace_back(sizes, cfg.activation, derive_seed(seed, 100 + static_cast<std::uint64_t>(k)));
      adams_.emplace_back(nets_.back(), cfg.lr);
    }
    frozen_.assign(static_cast<std::size_t>(num_stages), FreezeReason::none);
    windows_.resize(static_cast<std::size_t>(num_stages));
    outcomes_.resize(static_cast<std::size_t>(num_stages));
  }

  int num_stages() const { return num_stages_; }
  int obs_dim() const { return obs_dim_; }
  int action_count() const { return action_count_; }
  InputMode input_mode() const { return mode_; }
  int input_dim() const { return feature_dim(mode_, obs_dim_, action_count_); }
  const DiscriminatorConfig& config() const { return cfg_; }
  const DenseNet& net(int k) const { return nets_.at(static_cast<std::size_t>(k)); }
  DenseNet& net(int k) { return nets_.at(static_cast<std::size_t>(k)); }
  bool frozen(int k) const { return frozen_.at(static_cast<std::size_t>(k)) != FreezeReason::none; }
  FreezeReason freeze_reason(int k) const { return frozen_.at(static_cast<std::size_t>(k)); }
  void set_frozen(int k, bool f) {
    frozen_.at(static_cast<std::size_t>(k)) = f ? FreezeReason::manual : FreezeReason::none;
    windows_.at(static_cast<std::size_t>(k)).clear();
  }
  void freeze_all() {
    for (auto& f : frozen_)
      if (f == FreezeReason::none) f = FreezeReason::manual;
  }
  bool all_frozen() const {
    return std::all_of(frozen_.begin(), frozen_.end(), [](FreezeReason f) { return f != FreezeReason::none; });
  }

  /// Feeds the stage-success trigger with one collected (non-demo) trajectory.
  void record_trajectory(int stage_index) {
    const auto& es = cfg_.early_stop;
    for (int k = 0; k < num_stages_; ++k) {
      auto& w = outcomes_[static_cast<std::size_t>(k)];
      w.push_back(stage_index > k ? 1.0 : 0.0);
      while (static_cast<int>(w.size()) > es.success_window) w.pop_front();
      if (es.enabled && !frozen(k) && static_cast<int>(w.size()) == es.success_window &&
          *stage_success_rate(k) >= es.freeze_success_rate)
        frozen_[static_cast<std::size_t>(k)] = FreezeReason::stage_success;
    }
  }

  /// Fraction of recent trajectories that progressed beyond stage k.
  std::optional<double> stage_success_rate(int k) const {
    const auto& w = outcomes_.at(static_cast<std::size_t>(k));
    if (w.empty()) return std::nullopt;
    return std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  }

  /// Mean of the running accuracy window, if any batches were seen.
  std::optional<double> running_accuracy(int k) const {
    const auto& w = windows_.at(static_cast<std::size_t>(k));
    if (w.empty()) return std::nullopt;
    return std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  }

  Eigen::MatrixXd features(std::span<const TransitionRef> refs) const {
    Eigen::MatrixXd x(input_dim(), static_cast<Eigen::Index>(refs.size()));
    for (std::size_t i = 0; i < refs.size(); ++i) write_features(*refs[i].transition, mode_, action_count_, x, static_cast<Eigen::Index>(i));
    return x;
  }

  Eigen::MatrixXd features(std::span<const Transition* const> batch) const {
    Eigen::MatrixXd x(input_dim(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) write_features(*batch[i], mode_, action_count_, x, static_cast<Eigen::Index>(i));
    return x;
  }

  double logit(int k, const Eigen::VectorXd& x) const { return net(k).forward_batch(x)(0, 0); }

  /// Per-stage BCE updates, positives labelled 1 and negatives 0. Frozen
  /// discriminators are left untouched.
  std::vector<StageTrainReport> train(const StageBuffers& buffers, int grad_steps, int batch_size, Rng& rng) {
    if (batch_size < 2) throw UsageError("train_discriminators: batch_size must be at least 2");
    if (buffers.num_stages() != num_stages_) throw CompatibilityError("stage buffers and bank disagree on stage count");
    std::vector<StageTrainReport> reports(static_cast<std::size_t>(num_stages_));
    const auto per_side = static_cast<std::size_t>(batch_size / 2);
    for (int step = 0; step < grad_steps; ++step) {
      for (int k = 0; k < num_stages_; ++k) {
        auto& rep = reports[static_cast<std::size_t>(k)];
        if (frozen(k)) continue;
        auto batch = buffers.sample_discriminator_batch(k, per_side, rng);
        if (!batch) continue;
        const Eigen::MatrixXd x = labelled_inputs(*batch);
        Eigen::MatrixXd y(1, x.cols());
        y.leftCols(static_cast<Eigen::Index>(per_side)).setOnes();
        y.rightCols(static_cast<Eigen::Index>(per_side)).setZero();
        const double acc = accuracy_of(net(k).forward_batch(x), static_cast<Eigen::Index>(per_side));
        rep.loss = train_step_bce(net(k), adams_[static_cast<std::size_t>(k)], x, y);
        rep.accuracy = acc;
        rep.skipped = false;
        record_accuracy(k, acc);
      }
    }
    for (int k = 0; k < num_stages_; ++k) reports[static_cast<std::size_t>(k)].frozen = frozen(k);
    return reports;
  }

  /// Periodic re-check of frozen discriminators. Accuracy-frozen ones are
  /// scored on one fresh batch; success-frozen ones on the recent stage
  /// success rate. Manually frozen ones stay frozen.
  void probe(const StageBuffers& buffers, int batch_size, Rng& rng) {
    const auto& es = cfg_.early_stop;
    if (!es.enabled) return;
    const auto per_side = static_cast<std::size_t>(batch_size / 2);
    for (int k = 0; k < num_stages_; ++k) {
      const FreezeReason why = freeze_reason(k);
      if (why == FreezeReason::accuracy) {
        auto batch = buffers.sample_discriminator_batch(k, per_side, rng);
        if (!batch) continue;
        const double acc = accuracy_of(net(k).forward_batch(labelled_inputs(*batch)), static_cast<Eigen::Index>(per_side));
        if (acc < es.unfreeze_accuracy) set_frozen(k, false);
      } else if (why == FreezeReason::stage_success) {
        if (stage_success_rate(k).value_or(1.0) < es.unfreeze_success_rate) set_frozen(k, false);
      }
    }
  }

  /// FNV-1a over every parameter's bit pattern.
  std::uint64_t parameter_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](double d) {
      auto v = std::bit_cast<std::uint64_t>(d);
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ull;
      }
    };
    for (const auto& n : nets_)
      for (const auto& l : n.layers()) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) mix(l.weight.data()[i]);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) mix(l.bias.data()[i]);
      }
    return h;
  }

  WeightBundle to_bundle() const {
    WeightBundle b;
    b.meta = {{"kind", "reward_bank"},
              {"num_stages", num_stages_},
              {"obs_dim", obs_dim_},
              {"action_count", action_count_},
              {"input_mode", to_string(mode_)},
              {"frozen", frozen_flags()}};
    b.nets = nets_;
    return b;
  }

  static DiscriminatorBank from_bundle(const WeightBundle& b) {
    try {
      if (b.meta.at("kind") != "reward_bank") throw FormatError("checkpoint is not a reward bank");
      DiscriminatorBank bank;
      bank.num_stages_ = b.meta.at("num_stages").get<int>();
      bank.obs_dim_ = b.meta.at("obs_dim").get<int>();
      bank.action_count_ = b.meta.at("action_count").get<int>();
      bank.mode_ = input_mode_from_string(b.meta.at("input_mode").get<std::string>());
      if (static_cast<int>(b.nets.size()) != bank.num_stages_)
        throw FormatError("reward bank holds " + std::to_string(b.nets.size()) + " nets for " +
                          std::to_string(bank.num_stages_) + " stages");
      bank.nets_ = b.nets;
      for (const auto& n : bank.nets_)
        if (n.input_size() != bank.input_dim() || n.output_size() != 1) throw FormatError("reward bank net has the wrong shape");
      const auto flags = b.meta.at("frozen").get<std::vector<bool>>();
      if (static_cast<int>(flags.size()) != bank.num_stages_) throw FormatError("frozen flags do not match stage count");
      for (bool f : flags) bank.frozen_.push_back(f ? FreezeReason::manual : FreezeReason::none);
      for (const auto& n : bank.nets_) bank.adams_.emplace_back(n, bank.cfg_.lr);
      bank.windows_.resize(static_cast<std::size_t>(bank.num_stages_));
      bank.outcomes_.resize(static_cast<std::size_t>(bank.num_stages_));
      return bank;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed reward bank header: ") + e.what());
    }
  }

 private:
  Eigen::MatrixXd labelled_inputs(const DiscriminatorBatch& batch) const {
    Eigen::MatrixXd x(input_dim(), static_cast<Eigen::Index>(batch.positives.size() + batch.negatives.size()));
    Eigen::Index col = 0;
    for (const auto& r : batch.positives) write_features(*r.transition, mode_, action_count_, x, col++);
    for (const auto& r : batch.negatives) write_features(*r.transition, mode_, action_count_, x, col++);
    return x;
  }

  /// First `positives` columns are label 1, the rest label 0.
  static double accuracy_of(const Eigen::MatrixXd& logits, Eigen::Index positives) {
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) correct += (logits(0, i) > 0.0) == (i < positives) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(logits.cols());
  }

  void record_accuracy(int k, double acc) {
    auto& w = windows_[static_cast<std::size_t>(k)];
    w.push_back(acc);
    const auto& es = cfg_.early_stop;
    while (static_cast<int>(w.size()) > es.window) w.pop_front();
    if (es.enabled && static_cast<int>(w.size()) == es.window && *running_accuracy(k) >= es.freeze_accuracy)
      frozen_[static_cast<std::size_t>(k)] = FreezeReason::accuracy;
  }

  std::vector<bool> frozen_flags() const {
    std::vector<bool> out;
    for (auto f : frozen_) out.push_back(f != FreezeReason::none);
    return out;
  }

  int num_stages_ = 0;
  int obs_dim_ = 0;
  int action_count_ = 0;
  InputMode mode_ = InputMode::next_state;
  DiscriminatorConfig cfg_;
  std::vector<DenseNet> nets_;
  std::vector<AdamState> adams_;
  std::vector<FreezeReason> frozen_;
  std::vector<std::deque<double>> windows_;
  std::vector<std::deque<double>> outcomes_;
};

inline std::vector<StageTrainReport> train_discriminators(DiscriminatorBank& bank, const StageBuffers& buffers,
                                                          int grad_steps, int batch_size, Rng& rng) {
  return bank.train(buffers, grad_steps, batch_size, rng);
}

// ---------------------------------------------------------------------------
// Learned reward

inline constexpr double kDefaultAlpha = 1.0 / 3.0;

class LearnedReward final : public RewardFunction {
 public:
  LearnedReward(DiscriminatorBank bank, double alpha = kDefaultAlpha, RewardFormula formula = RewardFormula::stage_band)
      : bank_(std::move(bank)), alpha_(alpha), formula_(formula) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 1/2), got " + std::to_string(alpha));
  }

  int num_stages() const { return bank_.num_stages(); }
  double alpha() const { return alpha_; }
  RewardFormula formula() const { return formula_; }
  InputMode input_mode() const { return bank_.input_mode(); }
  const DiscriminatorBank& bank() const { return bank_; }
  DiscriminatorBank& bank() { return bank_; }

  /// Reward for a discriminator input already assembled into `features`.
  double reward_from_features(const Eigen::VectorXd& features, int k) const {
    check_stage(k);
    if (formula_ == RewardFormula::sum_all) {
      double s = 0.0;
      for (int j = 0; j < num_stages(); ++j) s += std::tanh(bank_.logit(j, features));
      return s;
    }
    if (k == num_stages()) return num_stages() + alpha_;
    return k + alpha_ * std::tanh(bank_.logit(k, features));
  }

  void evaluate(std::span<const Transition* const> batch, std::span<double> out) const override {
    const Eigen::MatrixXd x = bank_.features(batch);
    if (formula_ == RewardFormula::sum_all) {
      for (std::size_t i = 0; i < batch.size(); ++i) out[i] = 0.0;
      for (int j = 0; j < num_stages(); ++j) {
        const Eigen::MatrixXd logits = bank_.net(j).forward_batch(x);
        for (std::size_t i = 0; i < batch.size(); ++i) out[i] += std::tanh(logits(0, static_cast<Eigen::Index>(i)));
      }
      return;
    }
    // Group columns by stage so each discriminator runs once per batch.
    std::vector<std::vector<Eigen::Index>> by_stage(static_cast<std::size_t>(num_stages()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int k = batch[i]->next_stage_index();
      check_stage(k);
      if (k == num_stages())
        out[i] = num_stages() + alpha_;
      else
        by_stage[static_cast<std::size_t>(k)].push_back(static_cast<Eigen::Index>(i));
    }
    for (int k = 0; k < num_stages(); ++k) {
      const auto& cols = by_stage[static_cast<std::size_t>(k)];
      if (cols.empty()) continue;
      Eigen::MatrixXd sub(x.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
      const Eigen::MatrixXd logits = bank_.net(k).forward_batch(sub);
      for (std::size_t c = 0; c < cols.size(); ++c)
        out[static_cast<std::size_t>(cols[c])] = k + alpha_ * std::tanh(logits(0, static_cast<Eigen::Index>(c)));
    }
  }

  std::string name() const override { return formula_ == RewardFormula::stage_band ? "drs" : "drs_sum"; }

  void save(const std::filesystem::path& path) const {
    WeightBundle b = bank_.to_bundle();
    b.meta["alpha"] = alpha_;
    b.meta["formula"] = to_string(formula_);
    save_bundle(b, path);
  }

  static LearnedReward load(const std::filesystem::path& path) {
    const WeightBundle b = load_bundle(path);
    try {
      return LearnedReward(DiscriminatorBank::from_bundle(b), b.meta.at("alpha").get<double>(),
                           reward_formula_from_string(b.meta.at("formula").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed reward checkpoint header: ") + e.what());
    }
  }

 private:
  void check_stage(int k) const {
    if (k < 0 || k > num_stages())
      throw UsageError("stage index " + std::to_string(k) + " outside [0, " + std::to_string(num_stages()) + "]");
  }

  DiscriminatorBank bank_;
  double alpha_;
  RewardFormula formula_;
};

/// k + alpha * tanh(f_k(next_obs)) for k < N, and N + alpha on success.
/// Only valid for next-state input.
inline double drs_reward(const LearnedReward& lr, std::span<const double> next_obs, int k) {
  if (lr.input_mode() != InputMode::next_state) throw UsageError("drs_reward: reward expects state-action input");
  if (static_cast<int>(next_obs.size()) != lr.bank().obs_dim())
    throw ShapeError("drs_reward: observation length " + std::to_string(next_obs.size()) + ", expected " +
                     std::to_string(lr.bank().obs_dim()));
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(next_obs.data(), static_cast<Eigen::Index>(next_obs.size()));
  return lr.reward_from_features(x, k);
}

/// Stage-band reward of a bank with a single success/failure discriminator.
inline double one_stage_reward(const LearnedReward& lr, std::span<const double> next_obs, bool success) {
  if (lr.num_stages() != 1) throw UsageError("one_stage_reward: reward was learned with " + std::to_string(lr.num_stages()) + " stages");
  return drs_reward(lr, next_obs, success ? 1 : 0);
}

// ---------------------------------------------------------------------------
// GAIL-style agent-vs-demo discriminator

class GailDiscriminator {
 public:
  GailDiscriminator() = default;
  GailDiscriminator(int obs_dim, const DiscriminatorConfig& cfg, std::uint64_t seed) {
    std::vector<int> sizes{obs_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(1);
    net_ = DenseNet(sizes, cfg.activation, derive_seed(seed, 0x6761696c));
    adam_ = AdamState(net_, cfg.lr);
  }
  explicit GailDiscriminator(DenseNet net, double lr = 3e-4) : net_(std::move(net)), adam_(net_, lr) {}

  const DenseNet& net() const { return net_; }
  int obs_dim() const { return net_.input_size(); }

  /// One BCE step: demo transitions labelled 1, agent transitions 0.
  /// Returns (loss, accuracy) or nullopt when either side is empty.
  std::optional<std::pair<double, double>> train(const StageBuffers& buffers, const ReplayBuffer& replay, int batch_size, Rng& rng) {
    const auto per_side = static_cast<std::size_t>(batch_size / 2);
    auto demos = buffers.sample_demos(per_side, rng);
    auto agent = replay.sample(per_side, rng);
    if (!demos || !agent) return std::nullopt;
    Eigen::MatrixXd x(obs_dim(), static_cast<Eigen::Index>(2 * per_side));
    Eigen::Index col = 0;
    for (const auto& r : *demos) write_features(*r.transition, InputMode::next_state, 0, x, col++);
    for (const auto* t : *agent) write_features(*t, InputMode::next_state, 0, x, col++);
    Eigen::MatrixXd y(1, x.cols());
    y.leftCols(static_cast<Eigen::Index>(per_side)).setOnes();
    y.rightCols(static_cast<Eigen::Index>(per_side)).setZero();
    const Eigen::MatrixXd logits = net_.forward_batch(x);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) correct += (logits(0, i) > 0.0) == (y(0, i) == 1.0) ? 1 : 0;
    const double loss = train_step_bce(net_, adam_, x, y);
    return std::make_pair(loss, static_cast<double>(correct) / static_cast<double>(x.cols()));
  }

  void save(const std::filesystem::path& path, int num_stages) const {
    WeightBundle b;
    b.meta = {{"kind", "gail"}, {"num_stages", num_stages}, {"obs_dim", obs_dim()}};
    b.nets = {net_};
    save_bundle(b, path);
  }

  static GailDiscriminator load(const std::filesystem::path& path) {
    const WeightBundle b = load_bundle(path);
    if (b.meta.value("kind", "") != "gail" || b.nets.size() != 1) throw FormatError("checkpoint is not a GAIL discriminator");
    return GailDiscriminator(b.nets.front());
  }

 private:
  DenseNet net_;
  AdamState adam_;
};

/// semi_sparse(k) + lambda * tanh(gail(next_obs)).
inline double gail_combined_reward(const DenseNet& gail_net, std::span<const double> next_obs, int k, int num_stages, double lambda) {
  if (lambda < 0.0) throw UsageError("gail_combined_reward: lambda must be non-negative");
  const double base = semi_sparse_reward(k, num_stages);
  if (lambda == 0.0) return base;
  return base + lambda * std::tanh(gail_net.forward(next_obs)(0));
}

/// GAIL reward as a RewardFunction. With `with_stages` false it is the plain
/// lambda * tanh(logit) used while training GAIL itself.
class GailReward final : public RewardFunction {
 public:
  GailReward(const GailDiscriminator* disc, int num_stages, double lambda, bool with_stages)
      : disc_(disc), num_stages_(num_stages), lambda_(lambda), with_stages_(with_stages) {
    if (lambda < 0.0) throw ConfigError("gail lambda must be non-negative");
  }
  void evaluate(std::span<const Transition* const> batch, std::span<double> out) const override {
    Eigen::MatrixXd x(disc_->obs_dim(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) write_features(*batch[i], InputMode::next_state, 0, x, static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd logits = disc_->net().forward_batch(x);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double base = with_stages_ ? semi_sparse_reward(batch[i]->next_stage_index(), num_stages_) : 0.0;
      out[i] = base + lambda_ * std::tanh(logits(0, static_cast<Eigen::Index>(i)));
    }
  }
  std::string name() const override { return with_stages_ ? "gail_combined" : "gail"; }

 private:
  const GailDiscriminator* disc_;
  int num_stages_;
  double lambda_;
  bool with_stages_;
};

}  // namespace drs
