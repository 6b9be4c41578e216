#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vahedge/policygrad.hpp"

using namespace vahedge;

namespace {

EnvConfig small_env(int N = 10) {
  EnvConfig cfg;
  cfg.terms.me = 0.019012;
  cfg.terms.N = N;
  return cfg;
}

NetworkParams jittered(const NetworkParams& p, std::uint64_t seed, double scale) {
  Engine rng = make_engine(seed, 1, StreamPurpose::kInit);
  std::normal_distribution<double> z;
  auto flat = p.flatten();
  for (auto& w : flat) w += scale * z(rng);
  NetworkParams q = p;
  q.assign(flat);
  return q;
}

// Batch of random fragments: rewards, values and cut points drawn at random.
Batch random_batch(std::uint64_t seed, int K) {
  Engine rng = make_engine(seed, 2, StreamPurpose::kTraining);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  for (int j = 0; j < K; ++j) {
    BatchStep s;
    s.reward = z(rng);
    s.oldValue = z(rng);
    if (j + 1 == K) {
      s.endsFragment = true;
      s.terminal = u(rng) < 0.5;
    } else if (u(rng) < 0.15) {
      s.endsFragment = s.terminal = true;
    }
    if (s.endsFragment && !s.terminal) s.bootstrapValue = z(rng);
    b.steps.push_back(s);
  }
  return b;
}

// Objective recomputed observation by observation with no shared state.
double straight_line_objective(const NetworkParams& p, const Batch& batch, const AdvantageEstimate& adv,
                               const PpoConfig& cfg) {
  double clipSum = 0.0, vfSum = 0.0, enSum = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto out = forward(p, batch.steps[j].obs);
    const double c = out.policy.mean, d = out.policy.stdDev, a = batch.steps[j].action;
    const double logPhi = -0.5 * std::pow((a - c) / d, 2) - std::log(d) - 0.5 * std::log(2.0 * std::numbers::pi);
    const double q = std::exp(logPhi - batch.steps[j].oldLogDensity);
    const double A = adv.advantages[j];
    clipSum += std::min(q * A, std::clamp(q, 1.0 - cfg.clip, 1.0 + cfg.clip) * A);
    vfSum += std::pow(adv.returns[j] - out.value, 2);
    enSum += std::log(d);
  }
  const double K = static_cast<double>(batch.size());
  return clipSum / K - cfg.valueCoef * vfSum / K + cfg.entropyCoef * enSum / K;
}

}  // namespace

TEST(Advantages, ZeroRewardsAndValues) {
  Batch b = random_batch(1, 30);
  for (auto& s : b.steps) s.reward = s.oldValue = s.bootstrapValue = 0.0;
  for (double a : compute_advantages(b).advantages) EXPECT_EQ(a, 0.0);
}

TEST(Advantages, SingleTerminalTransition) {
  Batch b;
  BatchStep s;
  s.reward = 0.75;
  s.oldValue = 0.5;
  s.terminal = s.endsFragment = true;
  b.steps.push_back(s);
  const auto adv = compute_advantages(b);
  EXPECT_DOUBLE_EQ(adv.advantages[0], 0.25);
  EXPECT_DOUBLE_EQ(adv.returns[0], 0.75);
}

TEST(Advantages, MatchExplicitSummation) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Batch b = random_batch(seed, 60);
    const double scale = 0.3;
    const auto adv = compute_advantages(b, scale);
    for (std::size_t j = 0; j < b.size(); ++j) {
      double sum = 0.0;
      std::size_t end = j;
      while (!b.steps[end].endsFragment) ++end;
      for (std::size_t i = j; i <= end; ++i) sum += scale * b.steps[i].reward;
      if (!b.steps[end].terminal) sum += b.steps[end].bootstrapValue;
      EXPECT_NEAR(adv.advantages[j], sum - b.steps[j].oldValue, 1e-12);
      EXPECT_NEAR(adv.returns[j], sum, 1e-12);
    }
  }
}

TEST(Advantages, Normalization) {
  auto adv = compute_advantages(random_batch(3, 60));
  const auto returns = adv.returns;
  normalize_advantages(adv);
  double mean = 0.0, ss = 0.0;
  for (double a : adv.advantages) mean += a;
  mean /= 60.0;
  for (double a : adv.advantages) ss += (a - mean) * (a - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(ss / 59.0), 1.0, 1e-12);
  EXPECT_EQ(adv.returns, returns);

  AdvantageEstimate flat{{2.0, 2.0, 2.0}, {0.0, 0.0, 0.0}};
  normalize_advantages(flat);
  for (double a : flat.advantages) EXPECT_EQ(a, 0.0);
}

TEST(Rollout, FreshBatchIsOneFragment) {
  const auto p = NetworkParams::initialize(NetworkShape{}, 1);
  const Batch b = collect_batch(small_env(), p, 60, 1);
  ASSERT_EQ(b.size(), 60u);
  EXPECT_EQ(b.fragment_count(), 1);
  EXPECT_TRUE(b.steps.back().endsFragment);
  EXPECT_FALSE(b.steps.back().terminal);
}

TEST(Rollout, LongBatchSpansEpisodes) {
  auto cfg = small_env();
  cfg.terms.T = 0.1;
  cfg.grid = PathGrid::covering(0.1);
  const auto p = NetworkParams::initialize(NetworkShape{}, 1);
  RolloutCollector collector(cfg, 2);
  const Batch b = collector.collect(p, 60);
  EXPECT_GE(b.fragment_count(), 3);
  EXPECT_TRUE(b.steps[cfg.grid.n - 1].terminal);
  EXPECT_EQ(b.steps[cfg.grid.n].obs[2], 0.0);
  EXPECT_EQ(collector.timesteps(), 60);
  EXPECT_EQ(collector.episodes_started(), 3);
}

TEST(Rollout, Deterministic) {
  const auto p = NetworkParams::initialize(NetworkShape{}, 1);
  const Batch a = collect_batch(small_env(), p, 60, 9);
  const Batch b = collect_batch(small_env(), p, 60, 9);
  for (std::size_t j = 0; j < 60; ++j) {
    EXPECT_EQ(a.steps[j].action, b.steps[j].action);
    EXPECT_EQ(a.steps[j].reward, b.steps[j].reward);
  }
}

TEST(Surrogate, MatchesStraightLineObjective) {
  PpoConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto collecting = NetworkParams::initialize(NetworkShape{}, seed, 0.5, 0.3);
    const Batch b = collect_batch(small_env(), collecting, 60, seed);
    const auto adv = compute_advantages(b, 0.01);
    const auto current = jittered(collecting, seed, 0.01);
    const auto eval = ppo_surrogate(current, b, adv, cfg);
    const double reference = straight_line_objective(current, b, adv, cfg);
    EXPECT_NEAR(eval.objective, reference, 1e-10 * std::abs(reference));
  }
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  PpoConfig cfg;
  const auto collecting = NetworkParams::initialize(NetworkShape{6, {8, 8, 8, 8}, 2}, 4, 0.5, 0.3);
  const Batch b = collect_batch(small_env(), collecting, 12, 4);
  const auto adv = compute_advantages(b, 0.01);
  const auto current = jittered(collecting, 4, 0.02);
  const auto grad = ppo_surrogate(current, b, adv, cfg).gradient.flatten();
  auto flat = current.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(flat[i]));
    auto up = flat, down = flat;
    up[i] += h;
    down[i] -= h;
    NetworkParams pu = current, pd = current;
    pu.assign(up);
    pd.assign(down);
    const double fd = (ppo_surrogate(pu, b, adv, cfg).objective - ppo_surrogate(pd, b, adv, cfg).objective) / (2 * h);
    EXPECT_NEAR(grad[i], fd, std::max(1e-4 * std::abs(fd), 1e-7)) << "weight " << i;
  }
}

TEST(Surrogate, FirstStepIsVanillaPolicyGradient) {
  const auto p = NetworkParams::initialize(NetworkShape{}, 6, 0.5, 0.3);
  const Batch b = collect_batch(small_env(), p, 60, 6);
  const auto adv = compute_advantages(b, 0.01);
  PpoConfig clipped;
  clipped.valueCoef = clipped.entropyCoef = 0.0;
  PpoConfig loose = clipped;
  loose.clip = 1e9;
  const auto g1 = ppo_surrogate(p, b, adv, clipped);
  const auto g2 = ppo_surrogate(p, b, adv, loose);
  EXPECT_EQ(g1.clipFraction, 0.0);
  EXPECT_NEAR(g1.clipTerm, std::accumulate(adv.advantages.begin(), adv.advantages.end(), 0.0) / 60.0, 1e-12);

  std::vector<Observation> obs;
  for (const auto& s : b.steps) obs.push_back(s.obs);
  ForwardPass pass(p, stack_observations(obs));
  Eigen::VectorXd dm(60), ds(60), dv = Eigen::VectorXd::Zero(60);
  for (int j = 0; j < 60; ++j) {
    const auto ld = log_density(pass.output(j).policy, b.steps[j].action);
    dm[j] = adv.advantages[j] * ld.dMean / 60.0;
    ds[j] = adv.advantages[j] * ld.dStd / 60.0;
  }
  auto vanilla = pass.backward(dm, ds, dv);
  auto diff = g2.gradient;
  diff *= -1.0;
  diff += g1.gradient;
  EXPECT_LT(diff.norm(), 1e-12 * g1.gradient.norm());
  vanilla *= -1.0;
  vanilla += g1.gradient;
  EXPECT_LT(vanilla.norm(), 1e-10 * g1.gradient.norm());
}

TEST(Surrogate, ClipSaturatesTheRatio) {
  const auto p = NetworkParams::zeros(NetworkShape{});
  const PolicyOutput out = forward(p, Observation{}).policy;
  Batch b;
  BatchStep s;
  s.action = 0.2;
  s.terminal = s.endsFragment = true;
  s.oldLogDensity = log_density(out, s.action).value - std::log(1.5);
  b.steps.push_back(s);
  PpoConfig cfg;
  cfg.valueCoef = cfg.entropyCoef = 0.0;

  AdvantageEstimate positive{{2.0}, {0.0}};
  const auto up = ppo_surrogate(p, b, positive, cfg);
  EXPECT_NEAR(up.clipTerm, 1.2 * 2.0, 1e-12);
  EXPECT_EQ(up.clipFraction, 1.0);
  EXPECT_EQ(up.gradient.norm(), 0.0);

  AdvantageEstimate negative{{-2.0}, {0.0}};
  const auto down = ppo_surrogate(p, b, negative, cfg);
  EXPECT_NEAR(down.clipTerm, 1.5 * -2.0, 1e-12);
  EXPECT_GT(down.gradient.norm(), 0.0);

  b.steps[0].oldLogDensity = log_density(out, s.action).value - std::log(0.5);
  EXPECT_NEAR(ppo_surrogate(p, b, negative, cfg).clipTerm, 0.8 * -2.0, 1e-12);
}

TEST(Update, NothingToLearnLeavesWeightsAlone) {
  auto p = NetworkParams::zeros(NetworkShape{});
  Batch b;
  for (int j = 0; j < 10; ++j) {
    BatchStep s;
    s.action = 0.1 * j;
    s.oldLogDensity = log_density(forward(p, s.obs).policy, s.action).value;
    b.steps.push_back(s);
  }
  b.steps.back().endsFragment = true;
  PpoConfig cfg;
  cfg.entropyCoef = 0.0;
  AdamOptimizer adam(cfg.learningRate);
  const auto before = p.flatten();
  const auto diag = ppo_update(p, adam, b, cfg, 1.0);
  EXPECT_FALSE(diag.aborted);
  EXPECT_EQ(p.flatten(), before);
}

TEST(Update, NonFiniteGradientAborts) {
  auto p = NetworkParams::initialize(NetworkShape{}, 1);
  Batch b = collect_batch(small_env(), p, 10, 1);
  b.steps[3].reward = std::numeric_limits<double>::infinity();
  PpoConfig cfg;
  AdamOptimizer adam(cfg.learningRate);
  const auto before = p.flatten();
  EXPECT_TRUE(ppo_update(p, adam, b, cfg, 1.0).aborted);
  EXPECT_EQ(p.flatten(), before);
}

TEST(Update, GradientNormIsClipped) {
  auto p = NetworkParams::initialize(NetworkShape{}, 1);
  const Batch b = collect_batch(small_env(), p, 60, 1);
  PpoConfig cfg;
  cfg.maxGradNorm = 1e-3;
  cfg.normalizeAdvantages = false;
  AdamOptimizer adam(cfg.learningRate);
  const auto diag = ppo_update(p, adam, b, cfg, 1e3);
  EXPECT_TRUE(diag.gradientClipped);
  EXPECT_GT(diag.gradientNorm, cfg.maxGradNorm);
}

TEST(Training, UpdateCount) {
  PpoConfig cfg;
  EXPECT_NEAR(static_cast<double>(cfg.update_count()), 1667.0, 1.0);
  OnlineConfig online;
  EXPECT_EQ(online.updates * online.ppo.batchSize, 600);
}

TEST(Training, EqualSeedsGiveEqualRuns) {
  PpoConfig cfg;
  cfg.totalTimesteps = 1200;
  const auto a = train_ppo(small_env(), cfg, 5);
  const auto b = train_ppo(small_env(), cfg, 5);
  ASSERT_EQ(a.log.size(), 20u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].meanBootstrappedReward, b.log[i].meanBootstrappedReward);
    EXPECT_EQ(a.log[i].batchEntropy, b.log[i].batchEntropy);
  }
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  EXPECT_EQ(a.log.back().timestep, 1200);
}

TEST(Reinforce, ZeroAdvantageContributesNoPolicyGradient) {
  const auto p = NetworkParams::initialize(NetworkShape{}, 2, 0.5, 0.3);
  const Batch b = collect_batch(small_env(), p, 5, 2);
  AdvantageEstimate adv{std::vector<double>(5, 0.0), {}};
  for (const auto& s : b.steps) adv.returns.push_back(s.oldValue);
  const auto eval = reinforce_surrogate(p, b, adv);
  EXPECT_LT(eval.gradient.norm(), 1e-12);
}

TEST(Reinforce, GradientMatchesFiniteDifferencesOnTwoSteps) {
  const auto p = NetworkParams::initialize(NetworkShape{6, {6, 5, 4}, 1}, 3, 0.5, 0.3);
  const Batch b = collect_batch(small_env(), p, 2, 3);
  const auto adv = compute_advantages(b, 0.05);
  const auto current = jittered(p, 3, 0.05);
  const auto grad = reinforce_surrogate(current, b, adv).gradient.flatten();
  auto flat = current.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(flat[i]));
    auto up = flat, down = flat;
    up[i] += h;
    down[i] -= h;
    NetworkParams pu = current, pd = current;
    pu.assign(up);
    pd.assign(down);
    const double fd =
        (reinforce_surrogate(pu, b, adv).objective - reinforce_surrogate(pd, b, adv).objective) / (2 * h);
    EXPECT_NEAR(grad[i], fd, std::max(1e-4 * std::abs(fd), 1e-7)) << "weight " << i;
  }
}

TEST(Online, RowsAndFrozenBaseline) {
  auto cfg = small_env(1);
  cfg.market.mu = -0.2;
  cfg.market.sigma = 0.4;
  cfg.terms.rho = 1.58;
  cfg.mortality = ConstantForce{0.03};
  const auto p = NetworkParams::initialize(NetworkShape{}, 1);
  OnlineConfig online;
  online.updates = 3;
  online.evalScenarios = 20;
  online.learning = false;
  const auto incorrect = DeltaHedger::cfm_bs(0.02, 0.2, 0.02);
  const auto correct = DeltaHedger::cfm_bs(0.02, 0.4, 0.03);
  const auto frozen = online_learning_run(p, cfg, incorrect, correct, online, 3);
  ASSERT_EQ(frozen.size(), 4u);
  for (const auto& row : frozen) EXPECT_EQ(row.agentMean, row.frozenMean);
  EXPECT_EQ(frozen.back().timestep, 90);
  EXPECT_NEAR(frozen.back().liveTime, 90.0 / 252.0, 1e-12);
  EXPECT_EQ(frozen.front().initialPrice, 100.0);
  EXPECT_NE(frozen.back().initialPrice, 100.0);

  online.learning = true;
  const auto learning = online_learning_run(p, cfg, incorrect, correct, online, 3);
  EXPECT_EQ(learning.front().agentMean, frozen.front().agentMean);
  EXPECT_NE(learning.back().agentMean, frozen.back().agentMean);
  EXPECT_EQ(learning.back().initialPrice, frozen.back().initialPrice);
}
