#include "drldo/agent.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "drldo/errors.hpp"
#include "drldo/rng.hpp"
#include "test_support.hpp"

namespace drldo {
namespace {

TEST(PolicyForward, SoftmaxNormalizationAndDeterminism) {
  auto nets = PolicyValueNetworks::initialize(5, 10, 16, 4);
  const std::vector<double> obs = {0.1, 0.9, 0.0, 0.5, 1.0};
  auto [probs, value] = policy_forward(nets, obs);
  ASSERT_EQ(probs.size(), 10u);
  double sum = 0.0;
  for (double p : probs) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-6);
  auto [probs2, value2] = policy_forward(nets, obs);
  EXPECT_EQ(probs, probs2);
  EXPECT_EQ(value, value2);

  EXPECT_THROW(policy_forward(nets, std::vector<double>{0.1}), ParameterError);
  EXPECT_THROW(policy_forward(nets, std::vector<double>{0.1, 2.0, 0.0, 0.5, 1.0}),
               ParameterError);
}

TEST(PolicyForward, ZeroObservationGivesUniformDistribution) {
  // zero input through zero biases leaves all logits at zero
  auto nets = PolicyValueNetworks::initialize(4, 8, 16, 9);
  const std::vector<double> obs(4, 0.0);
  auto [probs, value] = policy_forward(nets, obs);
  for (double p : probs) EXPECT_NEAR(p, 1.0 / 8.0, 1e-12);
  EXPECT_NEAR(value, 0.0, 1e-12);
}

TEST(SampleAction, OneHotAlwaysPicksThatIndex) {
  Rng rng(1);
  const std::vector<double> probs = {0.0, 0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) {
    auto [action, log_prob] = sample_action(probs, rng);
    EXPECT_EQ(action, 2);
    EXPECT_DOUBLE_EQ(log_prob, 0.0);
  }
}

TEST(SampleAction, UniformFrequenciesWithinTolerance) {
  Rng rng(2);
  const std::vector<double> probs(4, 0.25);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto [action, log_prob] = sample_action(probs, rng);
    ++counts[static_cast<std::size_t>(action)];
    EXPECT_DOUBLE_EQ(log_prob, std::log(0.25));
  }
  for (int c : counts)
    EXPECT_NEAR(static_cast<double>(c) / n, 0.25, 0.01);
}

TEST(SampleAction, LogProbMatchesSelectedEntry) {
  Rng rng(3);
  const std::vector<double> probs = {0.1, 0.2, 0.3, 0.4};
  for (int i = 0; i < 200; ++i) {
    auto [action, log_prob] = sample_action(probs, rng);
    EXPECT_DOUBLE_EQ(log_prob,
                     std::log(probs[static_cast<std::size_t>(action)]));
  }
}

TEST(SampleAction, DegenerateDistributionIsANumericError) {
  Rng rng(4);
  const std::vector<double> nan_probs = {0.5, std::nan("")};
  EXPECT_THROW(sample_action(nan_probs, rng), NumericError);
  const std::vector<double> not_normalized = {0.9, 0.3};
  EXPECT_THROW(sample_action(not_normalized, rng), NumericError);
}

Trajectory single_episode_trajectory(const std::vector<double>& rewards,
                                     const std::vector<double>& values) {
  Trajectory traj;
  traj.episode_starts.push_back(0);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    traj.observations.push_back({0.0});
    traj.actions.push_back(0);
    traj.rewards.push_back(rewards[t]);
    traj.log_probs.push_back(0.0);
    traj.values.push_back(values[t]);
    traj.p_malicious.push_back(0.0);
  }
  return traj;
}

TEST(ComputeAdvantages, SingleTerminalStepIsRewardMinusValue) {
  auto traj = single_episode_trajectory({2.5}, {0.7});
  compute_advantages(traj, 0.99, 0.95);
  EXPECT_NEAR(traj.advantages[0], 2.5 - 0.7, 1e-12);
  EXPECT_NEAR(traj.returns[0], 2.5, 1e-12);
}

TEST(ComputeAdvantages, ZeroGammaCollapsesToTdErrors) {
  auto traj = single_episode_trajectory({1.0, -2.0, 0.5}, {0.3, 0.1, -0.4});
  compute_advantages(traj, 0.0, 0.95);
  for (std::size_t t = 0; t < 3; ++t)
    EXPECT_NEAR(traj.advantages[t], traj.rewards[t] - traj.values[t], 1e-12);
}

TEST(ComputeAdvantages, MatchesBruteForceOracle) {
  Rng rng(6);
  std::vector<double> rewards(10), values(10);
  for (std::size_t t = 0; t < 10; ++t) {
    rewards[t] = rng.uniform(-1.0, 1.0);
    values[t] = rng.uniform(-1.0, 1.0);
  }
  const double gamma = 0.99, lambda = 0.95;
  auto traj = single_episode_trajectory(rewards, values);
  compute_advantages(traj, gamma, lambda);

  // direct summation: A_t = sum_l (gamma*lambda)^l * delta_{t+l}
  for (std::size_t t = 0; t < 10; ++t) {
    double expected = 0.0;
    for (std::size_t l = 0; t + l < 10; ++l) {
      const double next_value = t + l + 1 < 10 ? values[t + l + 1] : 0.0;
      const double delta =
          rewards[t + l] + gamma * next_value - values[t + l];
      expected += std::pow(gamma * lambda, static_cast<double>(l)) * delta;
    }
    EXPECT_NEAR(traj.advantages[t], expected, 1e-10);
  }

  // lambda = 1 equals discounted-return-minus-value
  auto traj_l1 = single_episode_trajectory(rewards, values);
  compute_advantages(traj_l1, gamma, 1.0);
  for (std::size_t t = 0; t < 10; ++t) {
    double ret = 0.0;
    for (std::size_t l = 0; t + l < 10; ++l)
      ret += std::pow(gamma, static_cast<double>(l)) * rewards[t + l];
    EXPECT_NEAR(traj_l1.advantages[t], ret - values[t], 1e-10);
    EXPECT_NEAR(traj_l1.returns[t], ret, 1e-10);
  }

  Trajectory empty;
  EXPECT_THROW(compute_advantages(empty, gamma, lambda), ParameterError);
}

TEST(ComputeAdvantages, EpisodeBoundariesDoNotLeak) {
  // two episodes; the second's rewards must not influence the first
  Trajectory two = single_episode_trajectory({1.0, 1.0}, {0.0, 0.0});
  two.episode_starts.push_back(2);
  for (int t = 0; t < 2; ++t) {
    two.observations.push_back({0.0});
    two.actions.push_back(0);
    two.rewards.push_back(100.0);
    two.log_probs.push_back(0.0);
    two.values.push_back(0.0);
    two.p_malicious.push_back(0.0);
  }
  compute_advantages(two, 1.0, 1.0);
  EXPECT_NEAR(two.advantages[0], 2.0, 1e-12);
  EXPECT_NEAR(two.advantages[2], 200.0, 1e-12);
}

TEST(ClippedObjective, ExactCaseArithmetic) {
  EXPECT_DOUBLE_EQ(clipped_objective_term(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_objective_term(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clipped_objective_term(1.0, 0.7, 0.2), 0.7);
}

// elementwise min semantics: the clipped objective is a pessimistic lower
// bound on the unclipped surrogate for either advantage sign
TEST(ClippedObjective, IsAPessimisticLowerBound) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double r = rng.uniform(0.0, 3.0);
    const double a = rng.uniform(-2.0, 2.0);
    const double eps = 0.2;
    const double term = clipped_objective_term(r, a, eps);
    const double clipped_ratio = std::clamp(r, 1.0 - eps, 1.0 + eps);
    EXPECT_DOUBLE_EQ(term, std::min(r * a, clipped_ratio * a));
    EXPECT_LE(term, r * a + 1e-15);
    EXPECT_LE(term, clipped_ratio * a + 1e-15);
  }
}

TEST(AdaptiveKl, BetaHalvesAndDoublesAtTheStatedThresholds) {
  const double d_targ = 0.01;
  EXPECT_DOUBLE_EQ(adaptive_kl_beta_update(1.0, d_targ / 1.5, d_targ), 0.5);
  EXPECT_DOUBLE_EQ(adaptive_kl_beta_update(1.0, d_targ / 2.0, d_targ), 0.5);
  EXPECT_DOUBLE_EQ(adaptive_kl_beta_update(1.0, d_targ * 1.5, d_targ), 2.0);
  EXPECT_DOUBLE_EQ(adaptive_kl_beta_update(1.0, d_targ * 3.0, d_targ), 2.0);
  EXPECT_DOUBLE_EQ(adaptive_kl_beta_update(1.0, d_targ, d_targ), 1.0);
  EXPECT_DOUBLE_EQ(adaptive_kl_beta_update(1.0, d_targ * 1.2, d_targ), 1.0);
}

using testing::trajectory_from_nets;

TEST(PpoUpdate, IdentityRatioMeansNoClippingAndSurrogateIsMeanAdvantage) {
  auto nets = PolicyValueNetworks::initialize(3, 6, 8, 21);
  auto traj = trajectory_from_nets(nets, 12, 31, false);
  compute_advantages(traj, 0.99, 0.95);

  PpoConfig cfg;
  double surrogate = 0.0, clip_fraction = 0.0, approx_kl = 0.0;
  surrogate_stats(nets, traj, traj.advantages, cfg, surrogate, clip_fraction,
                  approx_kl);
  double mean_adv = 0.0;
  for (double a : traj.advantages) mean_adv += a;
  mean_adv /= static_cast<double>(traj.advantages.size());
  EXPECT_DOUBLE_EQ(surrogate, mean_adv);
  EXPECT_DOUBLE_EQ(clip_fraction, 0.0);
  EXPECT_NEAR(approx_kl, 0.0, 1e-15);

  PpoUpdateState state(nets, cfg);
  const auto report = ppo_update(nets, traj, cfg, state);
  EXPECT_DOUBLE_EQ(report.initial_clip_fraction, 0.0);
  // normalized advantages have zero mean, so the pre-update surrogate is zero
  EXPECT_NEAR(report.initial_surrogate, 0.0, 1e-12);
}

TEST(PpoUpdate, InputValidation) {
  auto nets = PolicyValueNetworks::initialize(3, 6, 8, 22);
  PpoConfig cfg;
  PpoUpdateState state(nets, cfg);
  Trajectory empty;
  EXPECT_THROW(ppo_update(nets, empty, cfg, state), ParameterError);
  auto traj = trajectory_from_nets(nets, 4, 5, false);
  EXPECT_THROW(ppo_update(nets, traj, cfg, state), ParameterError);
  compute_advantages(traj, cfg.gamma, cfg.gae_lambda);
  PpoConfig adaptive = cfg;
  adaptive.variant = PpoVariant::kAdaptiveKl;
  EXPECT_THROW(ppo_update(nets, traj, adaptive, state), ParameterError);
}

// analytic gradients vs central finite differences on a 3-opcode instance
TEST(PpoUpdate, GradientsMatchFiniteDifferences) {
  auto nets_old = PolicyValueNetworks::initialize(3, 6, 64, 33);
  auto traj = trajectory_from_nets(nets_old, 2, 41, true);
  compute_advantages(traj, 0.99, 0.95);

  // evaluate at parameters away from theta_old so ratios spread and both
  // clip branches are exercised
  PolicyValueNetworks nets = nets_old;
  Rng rng(55);
  for (auto& p : nets.actor.params()) p += 0.05 * rng.normal();
  for (auto& p : nets.critic.params()) p += 0.05 * rng.normal();

  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  EXPECT_LE(testing::ppo_fd_relative_error(nets, traj, cfg, 0.0), 1e-4);

  PpoConfig adaptive = cfg;
  adaptive.variant = PpoVariant::kAdaptiveKl;
  EXPECT_LE(testing::ppo_fd_relative_error(nets, traj, adaptive, 0.7), 1e-4);
}

TEST(PpoUpdate, AdaptiveVariantUpdatesBeta) {
  auto nets = PolicyValueNetworks::initialize(3, 6, 8, 44);
  PpoConfig cfg;
  cfg.variant = PpoVariant::kAdaptiveKl;
  cfg.learning_rate = 0.05;
  auto traj = trajectory_from_nets(nets, 16, 45, true);
  compute_advantages(traj, cfg.gamma, cfg.gae_lambda);
  PpoUpdateState state(nets, cfg);
  const double beta_before = state.beta;
  const auto report = ppo_update(nets, traj, cfg, state);
  EXPECT_TRUE(report.beta == beta_before / 2.0 ||
              report.beta == beta_before * 2.0 ||
              report.beta == beta_before);
}

TEST(Train, TwoArmedBanditConvergesToTheRewardingArm) {
  PpoConfig cfg;
  cfg.learning_rate = 0.03;
  cfg.hidden_units = 16;
  cfg.entropy_coef = 0.0;
  cfg.rollout_episodes = 8;
  cfg.seed = 3;
  const int updates = 200;
  const auto result = train([] { return testing::BanditEnv(1); }, cfg,
                            updates * cfg.rollout_episodes);
  auto [probs, value] = policy_forward(result.nets, std::vector<double>{0.0});
  EXPECT_GE(probs[1], 0.95);
  EXPECT_NEAR(value, 1.0, 0.3);
}

TEST(Train, SeedFixedRunsAreIdentical) {
  PpoConfig cfg;
  cfg.seed = 17;
  cfg.hidden_units = 8;
  const auto a = train([] { return testing::BanditEnv(0); }, cfg, 40);
  const auto b = train([] { return testing::BanditEnv(0); }, cfg, 40);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].total_reward, b.episodes[i].total_reward);
    EXPECT_EQ(a.episodes[i].final_p_malicious,
              b.episodes[i].final_p_malicious);
  }
  EXPECT_EQ(a.nets, b.nets);
}

TEST(Checkpoint, RoundTripPreservesNetworks) {
  const auto nets = PolicyValueNetworks::initialize(6, 12, 16, 77);
  const auto path = testing::temp_dir("checkpoint") + "/nets.txt";
  save_checkpoint(nets, path);
  EXPECT_EQ(load_checkpoint(path), nets);
  EXPECT_THROW(deserialize_networks("bad\n"), MalformedFileError);
}

}  // namespace
}  // namespace drldo
