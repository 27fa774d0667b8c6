#pragma once

// The environment contract shared by every task: observations, five-or-more
// discrete actions, and a vector of stage indicators whose last entry is the
// success signal.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "drs/error.hpp"

namespace drs {

inline constexpr int kMaxStages = 32;

/// Raw stage indicators g_1..g_N, stored exactly as the environment reports
/// them. Monotone closure is applied on read.
class StageVector {
 public:
  StageVector() = default;
  explicit StageVector(int n) : size_(static_cast<std::uint8_t>(check_size(n))) {}
  StageVector(std::initializer_list<bool> flags) : size_(static_cast<std::uint8_t>(check_size(static_cast<int>(flags.size())))) {
    int i = 0;
    for (bool f : flags) set(i++, f);
  }

  int size() const { return size_; }
  bool operator[](int i) const { return (bits_ >> i) & 1u; }
  void set(int i, bool v) {
    if (i < 0 || i >= size_) throw UsageError("stage flag index out of range");
    bits_ = v ? (bits_ | (1u << i)) : (bits_ & ~(1u << i));
  }
  bool success() const { return size_ > 0 && (*this)[size_ - 1]; }
  std::uint32_t bits() const { return bits_; }

  /// Flag i is forced true whenever any later flag is true.
  StageVector closed() const {
    StageVector out = *this;
    for (int i = size_ - 1; i > 0; --i)
      if (out[i]) out.set(i - 1, true);
    return out;
  }

  friend bool operator==(const StageVector&, const StageVector&) = default;

 private:
  static int check_size(int n) {
    if (n < 1 || n > kMaxStages) throw UsageError("stage count must be in [1, 32]");
    return n;
  }
  std::uint32_t bits_ = 0;
  std::uint8_t size_ = 0;
};

/// Number of true flags after closure, i.e. the highest true stage or 0.
inline int stage_index_of(const StageVector& v) {
  for (int i = v.size() - 1; i >= 0; --i)
    if (v[i]) return i + 1;
  return 0;
}

/// One environment step. No reward is stored; rewards are recomputed from
/// next_obs and the next-state stage vector whenever they are needed.
struct Transition {
  std::vector<double> obs;
  int action = 0;
  std::vector<double> next_obs;
  StageVector next_stages;
  bool success = false;   // equals next_stages.success()
  bool terminal = false;  // true environment termination (success); time-outs are not terminal

  int next_stage_index() const { return stage_index_of(next_stages); }
};

/// Max over states of the per-state stage index.
inline int trajectory_stage_index(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw UsageError("trajectory_stage_index: empty trajectory");
  int best = 0;
  for (const auto& t : transitions) best = std::max(best, t.next_stage_index());
  return best;
}

class Trajectory {
 public:
  Trajectory(std::vector<Transition> transitions, bool demo = false)
      : transitions_(std::move(transitions)), stage_index_(trajectory_stage_index(transitions_)), demo_(demo) {}

  const std::vector<Transition>& transitions() const { return transitions_; }
  std::size_t size() const { return transitions_.size(); }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }
  int stage_index() const { return stage_index_; }
  bool is_demo() const { return demo_; }
  bool succeeded() const { return transitions_.back().success; }

 private:
  std::vector<Transition> transitions_;
  int stage_index_ = 0;
  bool demo_ = false;
};

inline double sparse_reward(bool success) { return success ? 1.0 : 0.0; }

inline double semi_sparse_reward(int stage_index, int num_stages) {
  if (stage_index < 0 || stage_index > num_stages)
    throw UsageError("semi_sparse_reward: stage " + std::to_string(stage_index) + " outside [0, " +
                     std::to_string(num_stages) + "]");
  return static_cast<double>(stage_index);
}

struct EnvSpec {
  int obs_dim = 0;
  int action_count = 0;
  int num_stages = 0;
  int max_episode_steps = 0;

  void validate() const {
    if (obs_dim < 1 || action_count < 1 || num_stages < 1 || max_episode_steps < 1)
      throw ConfigError("EnvSpec fields must all be positive");
  }
  /// Same task family as far as a learned reward or policy is concerned.
  bool compatible_with(const EnvSpec& o) const {
    return obs_dim == o.obs_dim && action_count == o.action_count && num_stages == o.num_stages;
  }
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

inline std::string describe(const EnvSpec& s) {
  return "obs_dim=" + std::to_string(s.obs_dim) + " actions=" + std::to_string(s.action_count) +
         " stages=" + std::to_string(s.num_stages);
}

struct StepResult {
  Transition transition;
  bool done = false;  // success or horizon reached
};

class Env {
 public:
  virtual ~Env() = default;
  virtual EnvSpec spec() const = 0;
  virtual std::string id() const = 0;
  /// New episode; the env's own seeded stream picks the start state.
  virtual std::vector<double> reset() = 0;
  virtual StepResult step(int action) = 0;
  virtual std::vector<double> observation() const = 0;
  virtual StageVector stages() const = 0;
  virtual void reseed(std::uint64_t seed) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
  /// Shortest action sequence from the current state to success, for
  /// environments that ship a planner.
  virtual std::vector<int> plan_actions() const {
    throw UsageError("environment '" + id() + "' has no planner");
  }
};

}  // namespace drs
