#pragma once

// Deterministic gridworlds: the three-room navigation family, a key-door
// variant with three stages, and a BFS planner that doubles as the
// shortest-path oracle.
//
// Coordinates: x grows right, y grows up; (0, 0) is the bottom-left border
// cell. Actions: 0 up, 1 down, 2 left, 3 right, 4 stay.

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drs/error.hpp"
#include "drs/random.hpp"
#include "drs/stages.hpp"

namespace drs {

inline constexpr int kActionCount = 5;
enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr std::array<int, kActionCount> kActionDx = {0, 0, -1, 1, 0};
inline constexpr std::array<int, kActionCount> kActionDy = {1, -1, 0, 0, 0};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline Cell shifted(Cell c, int action) { return {c.x + kActionDx[action], c.y + kActionDy[action]}; }

class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height) : width_(width), height_(height), walls_(static_cast<std::size_t>(width * height), 0) {
    if (width < 1 || height < 1) throw ConfigError("grid dimensions must be positive");
  }

  /// Open grid with no walls; leaving the grid is blocked.
  static GridMap empty(int width, int height) { return GridMap(width, height); }

  static constexpr int kThreeRoomSize = 17;
  static constexpr int kLowerWallRow = 5;
  static constexpr int kUpperWallRow = 11;

  /// 17x17 map: border walls, full-width walls at rows 5 and 11, one gate in
  /// each. `lower_gate` is the column of the gate between bottom and middle
  /// room, `upper_gate` the one between middle and top room.
  static GridMap three_room(int lower_gate, int upper_gate) {
    constexpr int n = kThreeRoomSize;
    for (int g : {lower_gate, upper_gate})
      if (g < 1 || g > n - 2)
        throw ConfigError("gate column " + std::to_string(g) + " is not an interior column (1.." +
                          std::to_string(n - 2) + ")");
    GridMap m(n, n);
    for (int i = 0; i < n; ++i) {
      m.set_wall({i, 0}, true);
      m.set_wall({i, n - 1}, true);
      m.set_wall({0, i}, true);
      m.set_wall({n - 1, i}, true);
      m.set_wall({i, kLowerWallRow}, true);
      m.set_wall({i, kUpperWallRow}, true);
    }
    m.set_wall({lower_gate, kLowerWallRow}, false);
    m.set_wall({upper_gate, kUpperWallRow}, false);
    return m;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool is_free(Cell c) const { return in_bounds(c) && walls_[index(c)] == 0; }
  void set_wall(Cell c, bool wall) {
    if (!in_bounds(c)) throw UsageError("set_wall: cell out of bounds");
    walls_[index(c)] = wall ? 1 : 0;
  }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y * width_ + c.x); }
  Cell cell_at(std::size_t i) const { return {static_cast<int>(i) % width_, static_cast<int>(i) / width_}; }
  std::size_t cell_count() const { return walls_.size(); }

  /// Free cells in row-major order (y, then x).
  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (is_free({x, y})) out.push_back({x, y});
    return out;
  }

  /// Destination of `action` from `c`; blocked moves leave the position unchanged.
  Cell move(Cell c, int action) const {
    const Cell n = shifted(c, action);
    return is_free(n) ? n : c;
  }

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> walls_;
};

// ---------------------------------------------------------------------------
// Shortest paths

/// Distance from every cell to `goal` (-1 where unreachable or a wall),
/// by backward BFS over the four move actions.
inline std::vector<int> distances_to(const GridMap& map, Cell goal) {
  std::vector<int> dist(map.cell_count(), -1);
  if (!map.is_free(goal)) return dist;
  std::deque<Cell> queue{goal};
  dist[map.index(goal)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (int a = 0; a < 4; ++a) {
      const Cell n = shifted(c, a);
      if (!map.is_free(n) || dist[map.index(n)] >= 0) continue;
      dist[map.index(n)] = dist[map.index(c)] + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

struct PathPlan {
  int length = 0;
  std::vector<int> actions;
};

/// Minimal-step path; among equal-length paths, the lowest action index is
/// preferred at every step. The stay action is never used.
inline PathPlan bfs_shortest_path(const GridMap& map, Cell start, Cell goal) {
  if (!map.is_free(start) || !map.is_free(goal)) throw UsageError("bfs_shortest_path: start and goal must be free cells");
  const auto dist = distances_to(map, goal);
  if (dist[map.index(start)] < 0)
    throw NoPathError("no path from (" + std::to_string(start.x) + "," + std::to_string(start.y) + ") to (" +
                      std::to_string(goal.x) + "," + std::to_string(goal.y) + ")");
  PathPlan plan;
  plan.length = dist[map.index(start)];
  Cell c = start;
  while (!(c == goal)) {
    for (int a = 0; a < 4; ++a) {
      const Cell n = shifted(c, a);
      if (map.is_free(n) && dist[map.index(n)] == dist[map.index(c)] - 1) {
        plan.actions.push_back(a);
        c = n;
        break;
      }
    }
  }
  return plan;
}

/// True when every free cell reaches every other free cell.
inline bool fully_connected(const GridMap& map) {
  const auto cells = map.free_cells();
  if (cells.empty()) return true;
  const auto dist = distances_to(map, cells.front());
  for (const Cell& c : cells)
    if (dist[map.index(c)] < 0) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Environments

namespace detail {

inline double normalized(int v, int extent) { return static_cast<double>(v) / static_cast<double>(extent - 1); }

inline std::vector<Cell> free_cells_in_rows(const GridMap& map, int y_lo, int y_hi) {
  std::vector<Cell> out;
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = 0; x < map.width(); ++x)
      if (map.is_free({x, y})) out.push_back({x, y});
  return out;
}

}  // namespace detail

struct NavGates {
  int lower = 4;
  int upper = 12;
};
inline constexpr NavGates kNavTrainGates{4, 12};
inline constexpr NavGates kNavTestGates{12, 4};

/// Three-room navigation. Agent starts uniformly in the bottom room, goal is
/// uniform in the top room. Observation (13): agent xy, goal xy, 3x3 wall
/// patch around the agent (rows top to bottom, wall = 1), all in [0, 1].
class NavEnv final : public Env {
 public:
  static constexpr int kObsDim = 13;
  static constexpr int kDefaultHorizon = 120;

  NavEnv(NavGates gates, std::uint64_t seed, std::string id = "nav-custom", int max_steps = kDefaultHorizon)
      : map_(GridMap::three_room(gates.lower, gates.upper)), gates_(gates), id_(std::move(id)), max_steps_(max_steps), rng_(seed) {
    if (max_steps < 1) throw ConfigError("max_episode_steps must be positive");
    start_cells_ = detail::free_cells_in_rows(map_, 1, GridMap::kLowerWallRow - 1);
    goal_cells_ = detail::free_cells_in_rows(map_, GridMap::kUpperWallRow + 1, map_.height() - 2);
    reset();
  }

  EnvSpec spec() const override { return {kObsDim, kActionCount, 1, max_steps_}; }
  std::string id() const override { return id_; }
  const GridMap& map() const { return map_; }
  NavGates gates() const { return gates_; }
  Cell agent() const { return agent_; }
  Cell goal() const { return goal_; }
  int elapsed() const { return steps_; }

  std::vector<double> reset() override {
    agent_ = start_cells_[uniform_index(rng_, start_cells_.size())];
    goal_ = goal_cells_[uniform_index(rng_, goal_cells_.size())];
    steps_ = 0;
    done_ = false;
    return observation();
  }

  /// Place agent and goal directly (episode clock restarts).
  void set_state(Cell agent, Cell goal) {
    if (!map_.is_free(agent) || !map_.is_free(goal)) throw UsageError("set_state: cells must be free");
    agent_ = agent;
    goal_ = goal;
    steps_ = 0;
    done_ = agent == goal;
  }

  StepResult step(int action) override {
    if (action < 0 || action >= kActionCount)
      throw UsageError("action " + std::to_string(action) + " outside [0, 5)");
    if (done_) throw UsageError("step called on a finished episode; reset first");
    StepResult r;
    r.transition.obs = observation();
    r.transition.action = action;
    agent_ = map_.move(agent_, action);
    ++steps_;
    const bool success = agent_ == goal_;
    r.transition.next_obs = observation();
    r.transition.next_stages = stages();
    r.transition.success = success;
    r.transition.terminal = success;
    done_ = success || steps_ >= max_steps_;
    r.done = done_;
    return r;
  }

  std::vector<double> observation() const override { return observe(agent_, goal_); }

  std::vector<double> observe(Cell agent, Cell goal) const {
    std::vector<double> obs;
    obs.reserve(kObsDim);
    obs.push_back(detail::normalized(agent.x, map_.width()));
    obs.push_back(detail::normalized(agent.y, map_.height()));
    obs.push_back(detail::normalized(goal.x, map_.width()));
    obs.push_back(detail::normalized(goal.y, map_.height()));
    for (int dy = 1; dy >= -1; --dy)
      for (int dx = -1; dx <= 1; ++dx) obs.push_back(map_.is_free({agent.x + dx, agent.y + dy}) ? 0.0 : 1.0);
    return obs;
  }

  StageVector stages() const override { return StageVector{agent_ == goal_}; }
  void reseed(std::uint64_t seed) override { rng_.seed(seed); }
  std::unique_ptr<Env> clone() const override { return std::make_unique<NavEnv>(*this); }
  std::vector<int> plan_actions() const override { return bfs_shortest_path(map_, agent_, goal_).actions; }

 private:
  GridMap map_;
  NavGates gates_;
  std::string id_;
  int max_steps_;
  Rng rng_;
  std::vector<Cell> start_cells_;
  std::vector<Cell> goal_cells_;
  Cell agent_;
  Cell goal_;
  int steps_ = 0;
  bool done_ = false;
};

/// Key-door task on the three-room map. The upper gate is a locked door; the
/// key lies in the bottom room. Stages: [has_key, door_open, at_goal].
/// Walking into the door while holding the key opens it and enters the cell.
///
/// Observation (17): agent xy, goal xy, key xy (the agent's xy once held),
/// has_key, door_open, 3x3 patch (wall 1, closed door 0.5, free 0).
class KeyDoorEnv final : public Env {
 public:
  static constexpr int kObsDim = 17;
  static constexpr int kStageCount = 3;
  static constexpr int kDefaultHorizon = 200;

  KeyDoorEnv(NavGates gates, std::uint64_t seed, std::string id = "keydoor-custom", int max_steps = kDefaultHorizon)
      : map_(GridMap::three_room(gates.lower, gates.upper)),
        door_{gates.upper, GridMap::kUpperWallRow},
        id_(std::move(id)),
        max_steps_(max_steps),
        rng_(seed) {
    if (max_steps < 1) throw ConfigError("max_episode_steps must be positive");
    start_cells_ = detail::free_cells_in_rows(map_, 1, GridMap::kLowerWallRow - 1);
    goal_cells_ = detail::free_cells_in_rows(map_, GridMap::kUpperWallRow + 1, map_.height() - 2);
    reset();
  }

  EnvSpec spec() const override { return {kObsDim, kActionCount, kStageCount, max_steps_}; }
  std::string id() const override { return id_; }
  const GridMap& map() const { return map_; }
  Cell door() const { return door_; }
  Cell agent() const { return agent_; }
  Cell key() const { return key_; }
  Cell goal() const { return goal_; }
  bool has_key() const { return has_key_; }
  bool door_open() const { return door_open_; }

  std::vector<double> reset() override {
    agent_ = start_cells_[uniform_index(rng_, start_cells_.size())];
    do {
      key_ = start_cells_[uniform_index(rng_, start_cells_.size())];
    } while (key_ == agent_);
    goal_ = goal_cells_[uniform_index(rng_, goal_cells_.size())];
    has_key_ = false;
    door_open_ = false;
    steps_ = 0;
    done_ = false;
    return observation();
  }

  StepResult step(int action) override {
    if (action < 0 || action >= kActionCount)
      throw UsageError("action " + std::to_string(action) + " outside [0, 5)");
    if (done_) throw UsageError("step called on a finished episode; reset first");
    StepResult r;
    r.transition.obs = observation();
    r.transition.action = action;
    const Cell target = shifted(agent_, action);
    if (target == door_ && !door_open_) {
      if (has_key_) {
        door_open_ = true;
        agent_ = target;
      }
    } else {
      agent_ = passable(target) ? target : agent_;
    }
    if (!has_key_ && agent_ == key_) has_key_ = true;
    ++steps_;
    const bool success = agent_ == goal_ && door_open_;
    r.transition.next_obs = observation();
    r.transition.next_stages = stages();
    r.transition.success = success;
    r.transition.terminal = success;
    done_ = success || steps_ >= max_steps_;
    r.done = done_;
    return r;
  }

  std::vector<double> observation() const override {
    std::vector<double> obs;
    obs.reserve(kObsDim);
    const Cell key_pos = has_key_ ? agent_ : key_;
    for (Cell c : {agent_, goal_, key_pos}) {
      obs.push_back(detail::normalized(c.x, map_.width()));
      obs.push_back(detail::normalized(c.y, map_.height()));
    }
    obs.push_back(has_key_ ? 1.0 : 0.0);
    obs.push_back(door_open_ ? 1.0 : 0.0);
    for (int dy = 1; dy >= -1; --dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const Cell c{agent_.x + dx, agent_.y + dy};
        if (c == door_ && !door_open_)
          obs.push_back(0.5);
        else
          obs.push_back(map_.is_free(c) ? 0.0 : 1.0);
      }
    return obs;
  }

  StageVector stages() const override {
    StageVector v(kStageCount);
    v.set(0, has_key_);
    v.set(1, door_open_);
    v.set(2, door_open_ && agent_ == goal_);
    return v;
  }

  void reseed(std::uint64_t seed) override { rng_.seed(seed); }
  std::unique_ptr<Env> clone() const override { return std::make_unique<KeyDoorEnv>(*this); }

  std::vector<int> plan_actions() const override {
    std::vector<int> actions;
    Cell at = agent_;
    auto append = [&](const GridMap& m, Cell to) {
      auto p = bfs_shortest_path(m, at, to);
      actions.insert(actions.end(), p.actions.begin(), p.actions.end());
      at = to;
    };
    GridMap locked = map_;
    if (!door_open_) locked.set_wall(door_, true);
    if (!has_key_) append(locked, key_);
    if (!door_open_) append(map_, door_);
    append(map_, goal_);
    return actions;
  }

 private:
  bool passable(Cell c) const { return map_.is_free(c) && (door_open_ || !(c == door_)); }

  GridMap map_;
  Cell door_;
  std::string id_;
  int max_steps_;
  Rng rng_;
  std::vector<Cell> start_cells_;
  std::vector<Cell> goal_cells_;
  Cell agent_;
  Cell key_;
  Cell goal_;
  bool has_key_ = false;
  bool door_open_ = false;
  int steps_ = 0;
  bool done_ = false;
};

inline std::unique_ptr<NavEnv> make_nav_env(NavGates gates, std::uint64_t seed, std::string id = "nav-custom") {
  return std::make_unique<NavEnv>(gates, seed, std::move(id));
}

inline std::unique_ptr<KeyDoorEnv> make_keydoor_env(NavGates gates, std::uint64_t seed, std::string id = "keydoor-custom") {
  return std::make_unique<KeyDoorEnv>(gates, seed, std::move(id));
}

/// Successful trajectories from planner rollouts on fresh resets. The env is
/// reseeded with `seed` first.
inline std::vector<Trajectory> gen_demos(Env& env, int count, std::uint64_t seed) {
  if (count < 0) throw UsageError("gen_demos: count must be non-negative");
  std::vector<Trajectory> demos;
  demos.reserve(static_cast<std::size_t>(count));
  env.reseed(seed);
  for (int i = 0; i < count; ++i) {
    env.reset();
    const auto actions = env.plan_actions();
    std::vector<Transition> steps;
    steps.reserve(actions.size());
    for (int a : actions) {
      auto r = env.step(a);
      steps.push_back(std::move(r.transition));
      if (r.done) break;
    }
    if (steps.empty() || !steps.back().success)
      throw NoPathError("planner failed to reach success within the horizon in '" + env.id() + "'");
    demos.emplace_back(std::move(steps), true);
  }
  return demos;
}

}  // namespace drs
