#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "drs/grid.hpp"
#include "drs/reward.hpp"
#include "drs/stage_merge.hpp"
#include "test_support.hpp"

using namespace drs;
using drs::testing::make_trajectory;
using drs::testing::make_transition;

namespace {

// Bank of bias-only discriminators: f_k(x) = logits[k] for every x.
LearnedReward constant_reward(const std::vector<double>& logits, int obs_dim = 2, double alpha = 1.0 / 3.0,
                              RewardFormula f = RewardFormula::stage_band) {
  DiscriminatorConfig cfg;
  cfg.hidden = {};
  DiscriminatorBank bank(static_cast<int>(logits.size()), obs_dim, 5, InputMode::next_state, cfg, 0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    bank.net(static_cast<int>(k)).layers()[0].weight.setZero();
    bank.net(static_cast<int>(k)).layers()[0].bias(0) = logits[k];
  }
  return LearnedReward(std::move(bank), alpha, f);
}

// Two well-separated blobs in 2D: positives near (+1, +1), negatives near (-1, -1).
StageBuffers blob_buffers(Rng& rng) {
  StageBuffers sb(1);
  for (int t = 0; t < 40; ++t) {
    const bool pos = t % 2 == 0;
    std::vector<Transition> ts;
    for (int i = 0; i < 10; ++i) {
      Transition tr;
      const double c = pos ? 1.0 : -1.0;
      tr.obs = {c + 0.2 * uniform_real(rng, -1, 1), c + 0.2 * uniform_real(rng, -1, 1)};
      tr.next_obs = tr.obs;
      tr.next_stages = StageVector{pos && i == 9};
      tr.success = pos && i == 9;
      tr.terminal = tr.success;
      ts.push_back(tr);
    }
    sb.route(Trajectory(std::move(ts)));
  }
  return sb;
}

}  // namespace

TEST(DrsReward, Examples) {
  const LearnedReward r = constant_reward({0.7, 0.0});
  const std::vector<double> obs{0.1, 0.2};
  EXPECT_DOUBLE_EQ(drs_reward(r, obs, 1), 1.0);
  EXPECT_DOUBLE_EQ(drs_reward(r, obs, 2), 2.0 + 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(drs_reward(r, obs, 0), std::tanh(0.7) / 3.0);
  EXPECT_THROW(drs_reward(r, obs, 3), UsageError);
  EXPECT_THROW(drs_reward(r, obs, -1), UsageError);
  EXPECT_THROW(drs_reward(r, std::vector<double>{0.1}, 0), ShapeError);
}

TEST(DrsReward, AlphaValidation) {
  EXPECT_THROW(constant_reward({0.0}, 2, 0.5), ConfigError);
  EXPECT_THROW(constant_reward({0.0}, 2, 0.0), ConfigError);
  EXPECT_NO_THROW(constant_reward({0.0}, 2, 0.49));
}

TEST(DrsReward, FuzzBandsAndMonotonicity) {
  Rng rng(21);
  const int n = 4;
  std::vector<double> lo(n + 1, 1e9), hi(n + 1, -1e9);
  for (int i = 0; i < 10000; ++i) {
    const double logit = uniform_real(rng, -15.0, 15.0);
    const int k = static_cast<int>(uniform_index(rng, n + 1));
    const LearnedReward r = constant_reward(std::vector<double>(n, logit));
    const double v = drs_reward(r, std::vector<double>{0.0, 0.0}, k);
    EXPECT_GT(v, k - 1.0 / 3.0);
    EXPECT_LE(v, k + 1.0 / 3.0);
    lo[static_cast<std::size_t>(k)] = std::min(lo[static_cast<std::size_t>(k)], v);
    hi[static_cast<std::size_t>(k)] = std::max(hi[static_cast<std::size_t>(k)], v);
  }
  for (int k = 0; k < n; ++k) EXPECT_LT(hi[static_cast<std::size_t>(k)], lo[static_cast<std::size_t>(k + 1)]);
  // Saturated logits land on the closed band edges.
  EXPECT_GE(drs_reward(constant_reward(std::vector<double>(n, -100.0)), std::vector<double>{0.0, 0.0}, 2), 2.0 - 1.0 / 3.0);
  EXPECT_LE(drs_reward(constant_reward(std::vector<double>(n, 100.0)), std::vector<double>{0.0, 0.0}, 2), 2.0 + 1.0 / 3.0);
}

TEST(DrsReward, BatchedEvaluateMatchesSingle) {
  DiscriminatorBank bank(3, 2, 5, InputMode::next_state, {}, 4);
  const LearnedReward r(std::move(bank));
  std::vector<Transition> ts;
  for (int i = 0; i < 20; ++i) ts.push_back(make_transition(i % 4, 3, 0.05 * i));
  std::vector<const Transition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  std::vector<double> out(ts.size());
  r.evaluate(ptrs, out);
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_DOUBLE_EQ(out[i], drs_reward(r, ts[i].next_obs, ts[i].next_stage_index()));
}

TEST(DrsReward, NextStateInputIgnoresStateAndAction) {
  DiscriminatorBank bank(1, 2, 5, InputMode::next_state, {}, 4);
  const LearnedReward r(std::move(bank));
  Transition a = make_transition(0, 1, 0.3);
  Transition b = a;
  b.obs = {9.0, -4.0};
  b.action = 3;
  EXPECT_EQ(r(a), r(b));
}

TEST(DrsReward, StateActionFeatures) {
  DiscriminatorBank bank(1, 2, 5, InputMode::state_action, {}, 4);
  EXPECT_EQ(bank.input_dim(), 7);
  Transition t = make_transition(0, 1, 0.5);
  t.action = 2;
  Eigen::MatrixXd x(7, 1);
  write_features(t, InputMode::state_action, 5, x, 0);
  EXPECT_EQ(x.col(0), (Eigen::VectorXd(7) << 0.5, 0.5, 0, 0, 1, 0, 0).finished());
}

TEST(DrsReward, SumAllFormulaDiffers) {
  const LearnedReward band = constant_reward({0.5, -1.0, 2.0});
  const LearnedReward sum = constant_reward({0.5, -1.0, 2.0}, 2, 1.0 / 3.0, RewardFormula::sum_all);
  const std::vector<double> obs{0.0, 0.0};
  EXPECT_DOUBLE_EQ(drs_reward(sum, obs, 1), std::tanh(0.5) + std::tanh(-1.0) + std::tanh(2.0));
  for (int k = 0; k < 3; ++k) EXPECT_NE(drs_reward(band, obs, k), drs_reward(sum, obs, k));
}

TEST(OneStageReward, Examples) {
  const LearnedReward nav = constant_reward({0.4});
  const std::vector<double> obs{0.0, 0.0};
  EXPECT_EQ(one_stage_reward(nav, obs, false), drs_reward(nav, obs, 0));
  EXPECT_EQ(one_stage_reward(nav, obs, true), drs_reward(nav, obs, 1));
  for (double logit : {-15.0, -1.0, 0.0, 2.0}) {
    const double v = one_stage_reward(constant_reward({logit}), obs, false);
    EXPECT_GT(v, -1.0 / 3.0);
    EXPECT_LE(v, 1.0 / 3.0);
  }
  EXPECT_NEAR(one_stage_reward(constant_reward({40.0}), obs, false), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(one_stage_reward(constant_reward({0.0, 0.0}), obs, false), UsageError);
}

TEST(Discriminators, SkipWithoutSuccesses) {
  DiscriminatorBank bank(1, 2, 5, InputMode::next_state, {}, 0);
  StageBuffers sb(1);
  sb.route(make_trajectory(0, 1, 4));
  Rng rng(0);
  const auto rep = bank.train(sb, 1, 8, rng);
  EXPECT_TRUE(rep[0].skipped);
  EXPECT_FALSE(rep[0].accuracy.has_value());
  EXPECT_FALSE(bank.running_accuracy(0).has_value());
  EXPECT_THROW(bank.train(sb, 1, 1, rng), UsageError);
}

TEST(Discriminators, SeparableBlobsFreezeAndStayFrozen) {
  Rng rng(3);
  const StageBuffers sb = blob_buffers(rng);
  DiscriminatorConfig cfg;
  cfg.lr = 1e-2;
  DiscriminatorBank bank(1, 2, 5, InputMode::next_state, cfg, 1);
  int steps = 0;
  while (!bank.frozen(0) && steps < 2000) {
    bank.train(sb, 1, 32, rng);
    ++steps;
  }
  ASSERT_TRUE(bank.frozen(0)) << "accuracy " << bank.running_accuracy(0).value_or(-1);
  EXPECT_EQ(bank.freeze_reason(0), FreezeReason::accuracy);
  EXPECT_GE(*bank.running_accuracy(0), 0.98);
  const auto hash = bank.parameter_hash();
  const DenseNet before = bank.net(0);
  for (int i = 0; i < 1000; ++i) bank.train(sb, 1, 32, rng);
  EXPECT_EQ(bank.parameter_hash(), hash);
  EXPECT_EQ(bank.net(0), before);
  // Probe on the same separable data keeps it frozen.
  bank.probe(sb, 32, rng);
  EXPECT_TRUE(bank.frozen(0));
}

TEST(Discriminators, ProbeUnfreezesOnBadAccuracy) {
  Rng rng(3);
  const StageBuffers sb = blob_buffers(rng);
  DiscriminatorConfig cfg;
  cfg.lr = 1e-2;
  DiscriminatorBank bank(1, 2, 5, InputMode::next_state, cfg, 1);
  for (int i = 0; i < 2000 && !bank.frozen(0); ++i) bank.train(sb, 1, 32, rng);
  ASSERT_TRUE(bank.frozen(0));
  // Flip the output sign: every prediction becomes wrong.
  bank.net(0).layers().back().weight *= -1.0;
  bank.net(0).layers().back().bias *= -1.0;
  bank.probe(sb, 32, rng);
  EXPECT_FALSE(bank.frozen(0));
}

TEST(Discriminators, StageSuccessTrigger) {
  DiscriminatorConfig cfg;
  cfg.early_stop.success_window = 10;
  cfg.early_stop.freeze_success_rate = 0.8;
  cfg.early_stop.unfreeze_success_rate = 0.3;
  DiscriminatorBank bank(2, 2, 5, InputMode::next_state, cfg, 0);
  for (int i = 0; i < 9; ++i) bank.record_trajectory(1);
  EXPECT_FALSE(bank.frozen(0));
  bank.record_trajectory(1);
  EXPECT_TRUE(bank.frozen(0));
  EXPECT_EQ(bank.freeze_reason(0), FreezeReason::stage_success);
  EXPECT_FALSE(bank.frozen(1));
  EXPECT_DOUBLE_EQ(*bank.stage_success_rate(1), 0.0);
  for (int i = 0; i < 8; ++i) bank.record_trajectory(0);
  StageBuffers sb(2);
  Rng rng(0);
  bank.probe(sb, 8, rng);
  EXPECT_FALSE(bank.frozen(0));
}

TEST(Discriminators, DisabledEarlyStopNeverFreezes) {
  DiscriminatorConfig cfg;
  cfg.early_stop.enabled = false;
  cfg.early_stop.success_window = 2;
  DiscriminatorBank bank(1, 2, 5, InputMode::next_state, cfg, 0);
  for (int i = 0; i < 10; ++i) bank.record_trajectory(1);
  EXPECT_FALSE(bank.frozen(0));
}

TEST(Discriminators, TrainingRaisesPositiveMinusNegativeReward) {
  Rng rng(5);
  const StageBuffers sb = blob_buffers(rng);
  DiscriminatorConfig cfg;
  cfg.early_stop.enabled = false;
  LearnedReward r(DiscriminatorBank(1, 2, 5, InputMode::next_state, cfg, 9));
  auto fixed = sb.sample_discriminator_batch(0, 64, rng);
  ASSERT_TRUE(fixed.has_value());
  auto gap = [&] {
    double p = 0, n = 0;
    for (const auto& t : fixed->positives) p += drs_reward(r, t.transition->next_obs, 0);
    for (const auto& t : fixed->negatives) n += drs_reward(r, t.transition->next_obs, 0);
    return (p - n) / 64.0;
  };
  const double before = gap();
  for (int i = 0; i < 300; ++i) r.bank().train(sb, 1, 64, rng);
  EXPECT_GT(gap(), before);
}

TEST(Discriminators, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "drs_reward_test.drsw";
  LearnedReward r(DiscriminatorBank(3, 17, 5, InputMode::next_state, {}, 12), 0.25, RewardFormula::stage_band);
  r.bank().set_frozen(1, true);
  r.save(path);
  const LearnedReward back = LearnedReward::load(path);
  EXPECT_EQ(back.alpha(), 0.25);
  EXPECT_EQ(back.num_stages(), 3);
  EXPECT_EQ(back.bank().parameter_hash(), r.bank().parameter_hash());
  EXPECT_TRUE(back.bank().frozen(1));
  EXPECT_FALSE(back.bank().frozen(0));
}

TEST(Gail, CombinedRewardExamples) {
  DenseNet zero = DenseNet::zeros({2, 1}, Activation::tanh);
  const std::vector<double> obs{0.3, 0.1};
  EXPECT_EQ(gail_combined_reward(zero, obs, 2, 3, 0.5), 2.0);
  DenseNet biased = zero;
  biased.layers()[0].bias(0) = 1.3;
  EXPECT_EQ(gail_combined_reward(biased, obs, 1, 3, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(gail_combined_reward(biased, obs, 1, 3, 0.5), 1.0 + 0.5 * std::tanh(1.3));
  EXPECT_THROW(gail_combined_reward(zero, obs, 1, 3, -1.0), UsageError);
}

TEST(Gail, MatchingDistributionsStayNearHalf) {
  // Demos and agent data drawn from the same distribution.
  Rng rng(6);
  NavEnv env(kNavTrainGates, 1);
  StageBuffers sb(1);
  sb.seed_demos(gen_demos(env, 200, 2));
  ReplayBuffer replay;
  for (const auto& d : gen_demos(env, 200, 3))
    for (const auto& t : d.transitions()) replay.push(t);
  DiscriminatorConfig cfg;
  GailDiscriminator disc(13, cfg, 4);
  for (int i = 0; i < 3000; ++i) disc.train(sb, replay, 128, rng);
  double mean = 0.0;
  int n = 0;
  for (const auto& d : gen_demos(env, 50, 99))
    for (const auto& t : d.transitions()) {
      mean += detail::sigmoid(disc.net().forward(t.next_obs)(0));
      ++n;
    }
  mean /= n;
  EXPECT_GE(mean, 0.4);
  EXPECT_LE(mean, 0.6);
}

TEST(StageMergeReward, IdentityMergeKeepsStageIndices) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    StageVector v(3);
    for (int j = 0; j < 3; ++j) v.set(j, uniform01(rng) < 0.4);
    EXPECT_EQ(stage_index_of(merge_stages(v, identity_merge(3))), stage_index_of(v));
  }
}
