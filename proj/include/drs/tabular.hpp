#pragma once

// Tabular success/failure discriminator on a deterministic grid MDP and a
// checker for the greedy-optimality of its reward.

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "drs/error.hpp"
#include "drs/grid.hpp"
#include "drs/random.hpp"

namespace drs {

/// States are the free cells of a grid, actions the five grid moves.
class TabularMDP {
 public:
  TabularMDP(GridMap map, Cell goal, double gamma = 0.95) : map_(std::move(map)), goal_(goal), gamma_(gamma) {
    if (!map_.is_free(goal_)) throw ConfigError("tabular MDP: goal must be a free cell");
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw ConfigError("tabular MDP: gamma must lie in (0, 1)");
    cells_ = map_.free_cells();
    index_.assign(map_.cell_count(), -1);
    for (std::size_t i = 0; i < cells_.size(); ++i) index_[map_.index(cells_[i])] = static_cast<int>(i);
    next_.resize(cells_.size() * kActionCount);
    for (int s = 0; s < num_states(); ++s)
      for (int a = 0; a < kActionCount; ++a) next_[slot(s, a)] = state_of(map_.move(cells_[static_cast<std::size_t>(s)], a));
    const auto d = distances_to(map_, goal_);
    for (const Cell& c : cells_) dist_.push_back(d[map_.index(c)]);
  }

  const GridMap& map() const { return map_; }
  Cell goal() const { return goal_; }
  double gamma() const { return gamma_; }
  int num_states() const { return static_cast<int>(cells_.size()); }
  int goal_state() const { return state_of(goal_); }
  bool is_goal(int s) const { return s == goal_state(); }
  Cell cell(int s) const { return cells_.at(static_cast<std::size_t>(s)); }
  int state_of(Cell c) const {
    if (!map_.is_free(c)) throw UsageError("tabular MDP: cell is not a state");
    return index_[map_.index(c)];
  }
  int next(int s, int a) const { return next_.at(slot(s, a)); }
  /// Shortest number of steps to the goal, -1 if unreachable.
  int distance(int s) const { return dist_.at(static_cast<std::size_t>(s)); }

  /// Actions that lower the goal distance by one.
  std::vector<int> optimal_actions(int s) const {
    std::vector<int> out;
    if (is_goal(s) || distance(s) < 0) return out;
    for (int a = 0; a < kActionCount; ++a)
      if (distance(next(s, a)) == distance(s) - 1) out.push_back(a);
    return out;
  }

 private:
  std::size_t slot(int s, int a) const { return static_cast<std::size_t>(s) * kActionCount + static_cast<std::size_t>(a); }

  GridMap map_;
  Cell goal_;
  double gamma_;
  std::vector<Cell> cells_;
  std::vector<int> index_;
  std::vector<int> next_;
  std::vector<int> dist_;
};

/// states has one more entry than actions.
struct TabularTrajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::size_t size() const { return actions.size(); }
};

struct TabularBuffers {
  std::vector<TabularTrajectory> success;
  std::vector<TabularTrajectory> failure;
};

/// Buffers of a converged agent: successes follow a shortest-path policy that
/// picks uniformly among optimal actions; failures are random walks of at most
/// `horizon` steps cut before they would enter the goal.
inline TabularBuffers emulate_converged_buffers(const TabularMDP& mdp, int n_success, int n_fail, std::uint64_t seed,
                                                int horizon = 0) {
  if (n_success < 1 || n_fail < 1) throw UsageError("emulate_converged_buffers: counts must be at least 1");
  if (horizon <= 0) horizon = mdp.num_states();
  std::vector<int> starts;
  for (int s = 0; s < mdp.num_states(); ++s)
    if (!mdp.is_goal(s) && mdp.distance(s) > 0) starts.push_back(s);
  TabularBuffers out;
  if (starts.empty()) return out;
  Rng rng(seed);
  for (int i = 0; i < n_success; ++i) {
    TabularTrajectory t;
    int s = starts[uniform_index(rng, starts.size())];
    t.states.push_back(s);
    while (!mdp.is_goal(s)) {
      const auto acts = mdp.optimal_actions(s);
      const int a = acts[uniform_index(rng, acts.size())];
      s = mdp.next(s, a);
      t.actions.push_back(a);
      t.states.push_back(s);
    }
    out.success.push_back(std::move(t));
  }
  for (int i = 0; i < n_fail; ++i) {
    TabularTrajectory t;
    int s = starts[uniform_index(rng, starts.size())];
    t.states.push_back(s);
    for (int step = 0; step < horizon; ++step) {
      const int a = static_cast<int>(uniform_index(rng, kActionCount));
      const int s2 = mdp.next(s, a);
      if (mdp.is_goal(s2)) break;
      t.actions.push_back(a);
      t.states.push_back(s2);
      s = s2;
    }
    out.failure.push_back(std::move(t));
  }
  return out;
}

/// R(s, a) = tanh(logit(s, a)).
class TabularReward {
 public:
  TabularReward(int num_states, int action_count = kActionCount)
      : states_(num_states), actions_(action_count), logits_(static_cast<std::size_t>(num_states * action_count), 0.0) {}

  int num_states() const { return states_; }
  int action_count() const { return actions_; }
  double logit(int s, int a) const { return logits_.at(slot(s, a)); }
  double& logit(int s, int a) { return logits_.at(slot(s, a)); }
  double operator()(int s, int a) const { return std::tanh(logit(s, a)); }

  /// argmax_a R(s, a), ties to the lowest index.
  int greedy_action(int s) const {
    int best = 0;
    for (int a = 1; a < actions_; ++a)
      if ((*this)(s, a) > (*this)(s, best)) best = a;
    return best;
  }

 private:
  std::size_t slot(int s, int a) const {
    if (s < 0 || s >= states_ || a < 0 || a >= actions_) throw UsageError("tabular reward: index out of range");
    return static_cast<std::size_t>(s * actions_ + a);
  }

  int states_;
  int actions_;
  std::vector<double> logits_;
};

/// Full-batch balanced BCE on a logit table (success transitions labelled 1,
/// failure transitions 0), optimised with Adam. Entries seen in neither
/// buffer keep their zero logit.
inline TabularReward train_tabular_discriminator(const TabularBuffers& buffers, int num_states, int steps, double lr) {
  if (buffers.success.empty() || buffers.failure.empty()) throw UsageError("train_tabular_discriminator: empty buffer");
  if (steps < 0 || !(lr > 0.0)) throw ConfigError("train_tabular_discriminator: steps must be non-negative and lr positive");
  const std::size_t n = static_cast<std::size_t>(num_states) * kActionCount;
  std::vector<double> pos(n, 0.0), neg(n, 0.0);
  auto count = [&](const std::vector<TabularTrajectory>& trajs, std::vector<double>& into) {
    double total = 0.0;
    for (const auto& t : trajs)
      for (std::size_t i = 0; i < t.size(); ++i) {
        into.at(static_cast<std::size_t>(t.states[i]) * kActionCount + static_cast<std::size_t>(t.actions[i])) += 1.0;
        total += 1.0;
      }
    if (total == 0.0) throw UsageError("train_tabular_discriminator: buffer holds no transitions");
    for (auto& v : into) v /= total;
  };
  count(buffers.success, pos);
  count(buffers.failure, neg);

  TabularReward r(num_states);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m(n, 0.0), v(n, 0.0);
  for (int t = 1; t <= steps; ++t) {
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < n; ++i) {
      if (pos[i] == 0.0 && neg[i] == 0.0) continue;
      const int s = static_cast<int>(i / kActionCount), a = static_cast<int>(i % kActionCount);
      const double z = r.logit(s, a);
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double g = -pos[i] * (1.0 - sig) + neg[i] * sig;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      r.logit(s, a) -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
  return r;
}

struct GreedyCounterexample {
  Cell cell;
  std::string reason;
};

struct GreedyReport {
  bool holds = true;
  std::vector<GreedyCounterexample> counterexamples;
};

/// Checks (i) every optimal action outranks every non-optimal one in each
/// state that can reach the goal and (ii) greedy rollouts from every such
/// state reach the goal in exactly the shortest-path length. Rollouts are
/// capped at |S| steps.
inline GreedyReport verify_greedy_optimality(const TabularReward& reward, const TabularMDP& mdp) {
  if (reward.num_states() != mdp.num_states() || reward.action_count() != kActionCount)
    throw UsageError("verify_greedy_optimality: reward table does not match the MDP");
  GreedyReport rep;
  auto fail = [&](int s, std::string why) {
    rep.holds = false;
    rep.counterexamples.push_back({mdp.cell(s), std::move(why)});
  };
  for (int s = 0; s < mdp.num_states(); ++s) {
    if (mdp.is_goal(s) || mdp.distance(s) < 0) continue;
    const auto opt = mdp.optimal_actions(s);
    double min_opt = 2.0, max_other = -2.0;
    for (int a = 0; a < kActionCount; ++a) {
      const bool is_opt = std::find(opt.begin(), opt.end(), a) != opt.end();
      if (is_opt)
        min_opt = std::min(min_opt, reward(s, a));
      else
        max_other = std::max(max_other, reward(s, a));
    }
    if (!(min_opt > max_other))
      fail(s, "optimal action reward " + std::to_string(min_opt) + " <= non-optimal " + std::to_string(max_other));

    int cur = s, steps = 0;
    while (!mdp.is_goal(cur) && steps < mdp.num_states()) {
      cur = mdp.next(cur, reward.greedy_action(cur));
      ++steps;
    }
    if (!mdp.is_goal(cur))
      fail(s, "greedy rollout does not reach the goal within " + std::to_string(mdp.num_states()) + " steps");
    else if (steps != mdp.distance(s))
      fail(s, "greedy rollout takes " + std::to_string(steps) + " steps, shortest is " + std::to_string(mdp.distance(s)));
  }
  return rep;
}

}  // namespace drs
