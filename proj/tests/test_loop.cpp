#include <gtest/gtest.h>

#include "drs/loop.hpp"

using namespace drs;

namespace {

LoopConfig short_config(std::int64_t steps) {
  LoopConfig cfg;
  cfg.total_steps = steps;
  cfg.eval_interval = 1000;
  cfg.eval_episodes = 3;
  cfg.demos = 5;
  cfg.dqn.warmup_steps = 200;
  cfg.dqn.batch_size = 32;
  return cfg;
}

}  // namespace

TEST(Loop, ZeroStepsGivesEmptyCurve) {
  NavEnv env(kNavTrainGates, 0, "nav-train");
  auto res = reward_learning_phase(env, short_config(0));
  EXPECT_TRUE(res.curve.empty());
  EXPECT_TRUE(res.reward.bank().all_frozen());
}

TEST(Loop, ShortRunIsDeterministic) {
  NavEnv a(kNavTrainGates, 0, "nav-train");
  NavEnv b(kNavTrainGates, 0, "nav-train");
  const auto ra = reward_learning_phase(a, short_config(3000));
  const auto rb = reward_learning_phase(b, short_config(3000));
  ASSERT_EQ(ra.curve.size(), 3u);
  ASSERT_EQ(ra.curve.size(), rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) {
    EXPECT_EQ(ra.curve[i].env_steps, static_cast<std::int64_t>(1000 * (i + 1)));
    EXPECT_EQ(ra.curve[i].eval_success_rate, rb.curve[i].eval_success_rate);
    EXPECT_EQ(ra.curve[i].mean_episode_return, rb.curve[i].mean_episode_return);
  }
  EXPECT_EQ(ra.reward.bank().parameter_hash(), rb.reward.bank().parameter_hash());
  EXPECT_TRUE(ra.policy.online() == rb.policy.online());
}

TEST(Loop, DifferentSeedsDiffer) {
  NavEnv env(kNavTrainGates, 0, "nav-train");
  LoopConfig c1 = short_config(1500), c2 = short_config(1500);
  c2.seed = 1;
  const auto r1 = reward_learning_phase(env, c1);
  const auto r2 = reward_learning_phase(env, c2);
  EXPECT_NE(r1.reward.bank().parameter_hash(), r2.reward.bank().parameter_hash());
}

TEST(Loop, ReuseKeepsRewardFixed) {
  NavEnv train(kNavTrainGates, 0, "nav-train");
  const auto learned = reward_learning_phase(train, short_config(1500));
  const auto hash = learned.reward.bank().parameter_hash();
  NavEnv test(kNavTestGates, 0, "nav-test");
  const auto res = reward_reuse_phase(test, learned.reward, short_config(2000));
  EXPECT_EQ(res.curve.size(), 2u);
  EXPECT_EQ(learned.reward.bank().parameter_hash(), hash);
}

TEST(Loop, ReuseRejectsUnfrozenReward) {
  NavEnv test(kNavTestGates, 0, "nav-test");
  LearnedReward r(DiscriminatorBank(1, 13, 5, InputMode::next_state, {}, 0));
  EXPECT_THROW(reward_reuse_phase(test, r, short_config(10)), UsageError);
}

TEST(Loop, IncompatibleRewardRejected) {
  KeyDoorEnv kd(kNavTestGates, 0, "keydoor-test");
  LearnedReward r(DiscriminatorBank(1, 13, 5, InputMode::next_state, {}, 0));
  r.bank().freeze_all();
  EXPECT_THROW(reward_reuse_phase(kd, r, short_config(10)), CompatibilityError);
}

TEST(Loop, FinetuneZeroStepsKeepsPolicy) {
  NavEnv test(kNavTestGates, 0, "nav-test");
  QAgent agent(13, 5, DqnConfig{}, 10, 1);
  const auto res = finetune_policy(test, agent.online(), SparseReward{}, short_config(0));
  EXPECT_TRUE(res.curve.empty());
  EXPECT_TRUE(res.policy.online() == agent.online());
  QAgent wrong(17, 5, DqnConfig{}, 10, 1);
  EXPECT_THROW(finetune_policy(test, wrong.online(), SparseReward{}, short_config(0)), CompatibilityError);
}

TEST(Loop, PlannerAlwaysSucceeds) {
  NavEnv nav(kNavTestGates, 0, "nav-test");
  KeyDoorEnv kd(kNavTrainGates, 0, "keydoor-train");
  EXPECT_EQ(evaluate(planner_policy(), nav, 50, 3), 1.0);
  EXPECT_EQ(evaluate(planner_policy(), kd, 50, 3), 1.0);
}

TEST(Loop, RandomPolicyRarelySucceeds) {
  NavEnv nav(kNavTrainGates, 0, "nav-train");
  Rng rng(5);
  const Policy random = [&rng](const Env&, const std::vector<double>&) { return static_cast<int>(uniform_index(rng, kActionCount)); };
  EXPECT_LT(evaluate(random, nav, 100, 4), 0.2);
  EXPECT_THROW(evaluate(random, nav, 0, 4), UsageError);
}

TEST(Loop, StepsToReach) {
  const std::vector<CurvePoint> curve{{1000, 0.1, 0}, {2000, 0.6, 0}, {3000, 0.9, 0}};
  EXPECT_EQ(steps_to_reach(curve, 0.5), 2000);
  EXPECT_EQ(steps_to_reach(curve, 0.9), 3000);
  EXPECT_FALSE(steps_to_reach(curve, 0.95).has_value());
}

TEST(Loop, GailPhaseNeedsDemos) {
  NavEnv nav(kNavTrainGates, 0, "nav-train");
  LoopConfig cfg = short_config(100);
  cfg.demos = 0;
  EXPECT_THROW(gail_learning_phase(nav, cfg), ConfigError);
}
