#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <queue>
#include <set>

#include "drs/grid.hpp"
#include "drs/stage_merge.hpp"
#include "drs/stages.hpp"

using namespace drs;

namespace {

Transition with_stages(StageVector v) {
  Transition t;
  t.next_stages = v;
  t.success = v.success();
  return t;
}

StageVector from_index(int k, int n) {
  StageVector v(n);
  for (int i = 0; i < k; ++i) v.set(i, true);
  return v;
}

// Plain Dijkstra over every free cell with unit edge weights.
int dijkstra(const GridMap& map, Cell start, Cell goal) {
  std::vector<int> dist(map.cell_count(), std::numeric_limits<int>::max());
  using Item = std::pair<int, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[map.index(start)] = 0;
  pq.push({0, map.index(start)});
  while (!pq.empty()) {
    auto [d, i] = pq.top();
    pq.pop();
    if (d > dist[i]) continue;
    const Cell c = map.cell_at(i);
    for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const Cell n{c.x + dx, c.y + dy};
      if (!map.is_free(n)) continue;
      if (d + 1 < dist[map.index(n)]) {
        dist[map.index(n)] = d + 1;
        pq.push({d + 1, map.index(n)});
      }
    }
  }
  return dist[map.index(goal)];
}

}  // namespace

TEST(StageIndex, Examples) {
  EXPECT_EQ(stage_index_of(StageVector{false, false, false}), 0);
  EXPECT_EQ(stage_index_of(StageVector{true, true, false}), 2);
  EXPECT_EQ(stage_index_of(StageVector{false, true, false}), 2);
  EXPECT_EQ(StageVector({false, true, false}).closed(), (StageVector{true, true, false}));
  EXPECT_EQ(stage_index_of(StageVector{false, false, true}), 3);
}

TEST(StageIndex, MonotoneUnderFlagFlips) {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    StageVector v(n);
    for (int i = 0; i < n; ++i) v.set(i, uniform01(rng) < 0.4);
    const int before = stage_index_of(v);
    const int i = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    if (v[i]) continue;
    v.set(i, true);
    EXPECT_GE(stage_index_of(v), before);
  }
}

TEST(TrajectoryStageIndex, Examples) {
  auto traj = [](std::vector<int> ks, int n) {
    std::vector<Transition> ts;
    for (int k : ks) ts.push_back(with_stages(from_index(k, n)));
    return ts;
  };
  EXPECT_EQ(trajectory_stage_index(traj({0, 1, 0}, 1)), 1);
  EXPECT_EQ(trajectory_stage_index(traj({0, 0, 0}, 2)), 0);
  EXPECT_EQ(trajectory_stage_index(traj({0, 1, 2, 3}, 3)), 3);
  EXPECT_THROW(trajectory_stage_index({}), UsageError);
  EXPECT_THROW(Trajectory({}), UsageError);
}

TEST(TrajectoryStageIndex, AppendingLowerStageKeepsIndex) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Transition> ts;
    const int len = 1 + static_cast<int>(uniform_index(rng, 10));
    for (int i = 0; i < len; ++i) ts.push_back(with_stages(from_index(static_cast<int>(uniform_index(rng, 4)), 3)));
    const int k = trajectory_stage_index(ts);
    ts.push_back(with_stages(from_index(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k + 1))), 3)));
    EXPECT_EQ(trajectory_stage_index(ts), k);
  }
}

TEST(Rewards, SparseAndSemiSparse) {
  EXPECT_EQ(sparse_reward(true), 1.0);
  EXPECT_EQ(sparse_reward(false), 0.0);
  EXPECT_EQ(sparse_reward(true), sparse_reward(true));
  EXPECT_EQ(semi_sparse_reward(2, 3), 2.0);
  EXPECT_EQ(semi_sparse_reward(0, 3), 0.0);
  EXPECT_EQ(semi_sparse_reward(3, 3), 3.0);
  for (int k = 0; k < 5; ++k) EXPECT_LT(semi_sparse_reward(k, 5), semi_sparse_reward(k + 1, 5));
  EXPECT_THROW(semi_sparse_reward(4, 3), UsageError);
  EXPECT_THROW(semi_sparse_reward(-1, 3), UsageError);
}

TEST(EnvSpec, Validation) {
  EXPECT_NO_THROW((EnvSpec{13, 5, 1, 120}.validate()));
  EXPECT_THROW((EnvSpec{0, 5, 1, 120}.validate()), ConfigError);
  EXPECT_THROW((EnvSpec{13, 5, 0, 120}.validate()), ConfigError);
}

TEST(GridMap, ThreeRoomLayout) {
  const GridMap train = GridMap::three_room(4, 12);
  const GridMap test = GridMap::three_room(12, 4);
  EXPECT_EQ(train.width(), 17);
  EXPECT_EQ(train.height(), 17);
  for (int i = 0; i < 17; ++i) {
    EXPECT_FALSE(train.is_free({i, 0}));
    EXPECT_FALSE(train.is_free({i, 16}));
    EXPECT_FALSE(train.is_free({0, i}));
    EXPECT_FALSE(train.is_free({16, i}));
  }
  for (int y : {5, 11}) {
    int gaps = 0;
    for (int x = 0; x < 17; ++x) gaps += train.is_free({x, y});
    EXPECT_EQ(gaps, 1);
  }
  EXPECT_TRUE(train.is_free({4, 5}));
  EXPECT_TRUE(train.is_free({12, 11}));
  EXPECT_TRUE(fully_connected(train));
  EXPECT_TRUE(fully_connected(test));
  std::set<std::pair<int, int>> diff;
  for (int y = 0; y < 17; ++y)
    for (int x = 0; x < 17; ++x)
      if (train.is_free({x, y}) != test.is_free({x, y})) diff.insert({x, y});
  EXPECT_EQ(diff, (std::set<std::pair<int, int>>{{4, 5}, {12, 5}, {4, 11}, {12, 11}}));
  EXPECT_THROW(GridMap::three_room(0, 4), ConfigError);
  EXPECT_THROW(GridMap::three_room(4, 16), ConfigError);
}

TEST(Bfs, Examples) {
  const GridMap map = GridMap::three_room(4, 12);
  EXPECT_EQ(bfs_shortest_path(map, {3, 3}, {3, 3}).length, 0);
  EXPECT_EQ(bfs_shortest_path(map, {3, 3}, {3, 4}).length, 1);
  EXPECT_THROW(bfs_shortest_path(map, {0, 0}, {3, 3}), UsageError);
  GridMap blocked = map;
  blocked.set_wall({4, 5}, true);
  EXPECT_THROW(bfs_shortest_path(blocked, {3, 3}, {3, 14}), NoPathError);
}

TEST(Bfs, MatchesDijkstraAndPlansAreValid) {
  for (const GridMap& map : {GridMap::three_room(4, 12), GridMap::three_room(12, 4), GridMap::empty(8, 8)}) {
    const auto cells = map.free_cells();
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const Cell a = cells[uniform_index(rng, cells.size())];
      const Cell b = cells[uniform_index(rng, cells.size())];
      const auto plan = bfs_shortest_path(map, a, b);
      EXPECT_EQ(plan.length, dijkstra(map, a, b));
      ASSERT_EQ(static_cast<int>(plan.actions.size()), plan.length);
      Cell c = a;
      for (int act : plan.actions) {
        EXPECT_NE(act, 4);
        c = map.move(c, act);
      }
      EXPECT_EQ(c, b);
    }
  }
  const GridMap train = GridMap::three_room(4, 12);
  EXPECT_EQ(bfs_shortest_path(train, {1, 1}, {15, 15}).length, dijkstra(train, {1, 1}, {15, 15}));
}

TEST(NavEnv, SpecObservationAndReset) {
  NavEnv env(kNavTrainGates, 3);
  EXPECT_EQ(env.spec().action_count, 5);
  EXPECT_EQ(env.spec().obs_dim, 13);
  EXPECT_EQ(env.spec().num_stages, 1);
  for (int i = 0; i < 200; ++i) {
    const auto obs = env.reset();
    ASSERT_EQ(obs.size(), 13u);
    for (double v : obs) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(env.agent().y, 1);
    EXPECT_LE(env.agent().y, 4);
    EXPECT_GE(env.goal().y, 12);
    EXPECT_LE(env.goal().y, 15);
  }
}

TEST(NavEnv, ObservationEncoding) {
  NavEnv env(kNavTrainGates, 0);
  const auto obs = env.observe({1, 1}, {8, 14});
  EXPECT_DOUBLE_EQ(obs[0], 1.0 / 16);
  EXPECT_DOUBLE_EQ(obs[1], 1.0 / 16);
  EXPECT_DOUBLE_EQ(obs[2], 8.0 / 16);
  EXPECT_DOUBLE_EQ(obs[3], 14.0 / 16);
  // Patch rows from top (dy=+1) to bottom, columns left to right.
  const std::vector<double> patch(obs.begin() + 4, obs.end());
  EXPECT_EQ(patch, (std::vector<double>{1, 0, 0, 1, 0, 0, 1, 1, 1}));
}

TEST(NavEnv, StepRules) {
  NavEnv env(kNavTrainGates, 0);
  env.set_state({1, 1}, {8, 14});
  auto r = env.step(4);
  EXPECT_EQ(env.agent(), (Cell{1, 1}));
  EXPECT_FALSE(r.transition.success);
  env.step(2);
  EXPECT_EQ(env.agent(), (Cell{1, 1}));
  env.step(1);
  EXPECT_EQ(env.agent(), (Cell{1, 1}));
  env.step(0);
  EXPECT_EQ(env.agent(), (Cell{1, 2}));
  EXPECT_THROW(env.step(5), UsageError);
  EXPECT_THROW(env.step(-1), UsageError);

  env.set_state({8, 13}, {8, 14});
  r = env.step(0);
  EXPECT_TRUE(r.transition.success);
  EXPECT_TRUE(r.transition.terminal);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(sparse_reward(r.transition.success), 1.0);
  EXPECT_EQ(r.transition.next_stage_index(), 1);
  EXPECT_THROW(env.step(0), UsageError);
}

TEST(NavEnv, TimeoutIsNotTerminal) {
  NavEnv env(kNavTrainGates, 0, "nav", 5);
  env.reset();
  StepResult r;
  for (int i = 0; i < 5; ++i) r = env.step(4);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.transition.terminal);
}

TEST(NavEnv, DeterministicGivenSeedAndActions) {
  NavEnv a(kNavTestGates, 17), b(kNavTestGates, 17);
  Rng rng(2);
  a.reset();
  b.reset();
  for (int i = 0; i < 500; ++i) {
    const int act = static_cast<int>(uniform_index(rng, 5));
    auto ra = a.step(act);
    auto rb = b.step(act);
    EXPECT_EQ(ra.transition.next_obs, rb.transition.next_obs);
    EXPECT_EQ(ra.done, rb.done);
    if (ra.done) {
      EXPECT_EQ(a.reset(), b.reset());
    }
  }
}

TEST(KeyDoorEnv, Stages) {
  KeyDoorEnv env(kNavTrainGates, 1);
  EXPECT_EQ(env.spec().num_stages, 3);
  EXPECT_EQ(env.spec().obs_dim, 17);
  env.reset();
  EXPECT_EQ(env.stages(), (StageVector{false, false, false}));
  EXPECT_EQ(stage_index_of(env.stages()), 0);

  // Walk the plan and watch the stage index climb 0 -> 1 -> 2 -> 3.
  const auto plan = env.plan_actions();
  int prev = 0;
  bool saw_key_only = false;
  StepResult r;
  for (int a : plan) {
    r = env.step(a);
    const int k = r.transition.next_stage_index();
    EXPECT_GE(k, prev);
    if (env.has_key() && !env.door_open()) {
      EXPECT_EQ(k, 1);
      saw_key_only = true;
    }
    prev = k;
  }
  EXPECT_TRUE(saw_key_only);
  EXPECT_TRUE(r.transition.success);
  EXPECT_EQ(prev, 3);
}

TEST(KeyDoorEnv, DoorNeedsKey) {
  KeyDoorEnv env(kNavTrainGates, 4);
  env.reset();
  // Head straight for the door without the key.
  GridMap locked = env.map();
  locked.set_wall(env.door(), true);
  const Cell below{env.door().x, env.door().y - 1};
  for (int a : bfs_shortest_path(locked, env.agent(), below).actions) {
    env.step(a);
    if (env.has_key()) GTEST_SKIP() << "key lies on the direct route for this seed";
  }
  env.step(0);
  EXPECT_EQ(env.agent(), below);
  EXPECT_FALSE(env.door_open());
}

TEST(KeyDoorEnv, StageIndexMonotoneUnderRandomPlay) {
  KeyDoorEnv env(kNavTestGates, 9);
  Rng rng(9);
  for (int ep = 0; ep < 30; ++ep) {
    env.reset();
    int prev = 0;
    bool done = false;
    while (!done) {
      auto r = env.step(static_cast<int>(uniform_index(rng, 5)));
      EXPECT_GE(r.transition.next_stage_index(), prev);
      prev = r.transition.next_stage_index();
      for (double v : r.transition.next_obs) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      done = r.done;
    }
  }
}

TEST(GenDemos, NavDemosAreShortestPaths) {
  NavEnv env(kNavTrainGates, 0);
  EXPECT_TRUE(gen_demos(env, 0, 1).empty());
  const auto demos = gen_demos(env, 100, 7);
  ASSERT_EQ(demos.size(), 100u);
  for (const auto& d : demos) {
    EXPECT_TRUE(d.succeeded());
    EXPECT_TRUE(d.is_demo());
    EXPECT_EQ(d.stage_index(), 1);
    // Recover start and goal from the first observation.
    const auto& o = d.transitions().front().obs;
    const Cell start{static_cast<int>(std::lround(o[0] * 16)), static_cast<int>(std::lround(o[1] * 16))};
    const Cell goal{static_cast<int>(std::lround(o[2] * 16)), static_cast<int>(std::lround(o[3] * 16))};
    EXPECT_EQ(static_cast<int>(d.size()), bfs_shortest_path(env.map(), start, goal).length);
  }
  EXPECT_THROW(gen_demos(env, -1, 0), UsageError);
}

TEST(GenDemos, KeyDoorDemosSucceed) {
  KeyDoorEnv env(kNavTestGates, 0);
  for (const auto& d : gen_demos(env, 50, 3)) {
    EXPECT_TRUE(d.succeeded());
    EXPECT_EQ(d.stage_index(), 3);
  }
}

TEST(StageMerge, ValidationAndMapping) {
  EXPECT_NO_THROW(validate_merge_spec({{1, 2}, {3}}, 3));
  EXPECT_THROW(validate_merge_spec({{2, 1}, {3}}, 3), ConfigError);
  EXPECT_THROW(validate_merge_spec({{1}, {3}}, 3), ConfigError);
  EXPECT_THROW(validate_merge_spec({{1, 2}}, 3), ConfigError);
  EXPECT_THROW(validate_merge_spec({}, 3), ConfigError);
  EXPECT_EQ(merge_stages(StageVector{true, false, false}, {{1, 2}, {3}}), (StageVector{false, false}));
  EXPECT_EQ(merge_stages(StageVector{true, true, false}, {{1, 2}, {3}}), (StageVector{true, false}));
  EXPECT_EQ(merge_stages(StageVector{false, false, true}, merge_all(3)), (StageVector{true}));
  EXPECT_EQ(merge_stages(StageVector{true, false, false}, identity_merge(3)), (StageVector{true, false, false}));
}

TEST(StageMerge, WrappedEnvKeepsSuccess) {
  auto env = stage_merge(make_keydoor_env(kNavTrainGates, 2), merge_all(3));
  EXPECT_EQ(env->spec().num_stages, 1);
  env->reset();
  StepResult r;
  for (int a : env->plan_actions()) {
    r = env->step(a);
    EXPECT_EQ(r.transition.next_stages.success(), r.transition.success);
  }
  EXPECT_TRUE(r.transition.success);
  auto copy = env->clone();
  EXPECT_EQ(copy->spec().num_stages, 1);
}
