#include <gtest/gtest.h>

#include <cmath>

#include "vahedge/env.hpp"
#include "vahedge/evalharness.hpp"
#include "vahedge/liability.hpp"
#include "vahedge/policies.hpp"

using namespace vahedge;

namespace {

EnvConfig table1_env(int N = 500) {
  EnvConfig cfg;
  cfg.terms.me = 0.019012;
  cfg.terms.N = N;
  return cfg;
}

Policy noisy_policy(std::uint64_t seed) {
  auto rng = std::make_shared<Engine>(make_engine(seed, 0, StreamPurpose::kAction));
  return [rng](const EpisodeState&, const HedgingEnv&) {
    return std::normal_distribution<double>(-0.2, 0.5)(*rng);
  };
}

}  // namespace

TEST(Env, InitialObservation) {
  HedgingEnv env(table1_env());
  const auto& s = env.reset(1);
  const Observation expected{1.19, 1.0, 0.0, 1.0, 0.0, 1.0};
  for (std::size_t i = 0; i < kObservationSize; ++i) EXPECT_NEAR(s.obs[i], expected[i], 1e-12);
  EXPECT_FALSE(s.terminal);

  HedgingEnv single(table1_env(1));
  EXPECT_EQ(single.reset(1).obs[3], 1.0);
}

TEST(Env, RewardIsChangeInSquaredPnl) {
  HedgingEnv env(table1_env());
  env.reset(3);
  auto policy = noisy_policy(3);
  while (!env.state().terminal) {
    const double before = env.state().pnl();
    const auto out = env.step(policy(env.state(), env));
    const double after = out.state.pnl();
    EXPECT_NEAR(out.reward, before * before - after * after, 1e-9 * (1.0 + before * before));
  }
}

TEST(Env, RewardsTelescopeToTerminalLoss) {
  for (const MortalityModel mortality : {MortalityModel{ConstantForce{0.02}}, MortalityModel{UniformLifetime{0.0, 1.5}}}) {
    auto cfg = table1_env(20);
    cfg.mortality = mortality;
    cfg.terms.me = calibrate_rider_charge(cfg.terms, cfg.market.S0, cfg.market.r, cfg.market.sigma, mortality);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto ep = run_episode(cfg, noisy_policy(seed), seed);
      double sum = 0.0;
      for (const auto& tr : ep.transitions) sum += tr.reward;
      const double target = -ep.terminalPnl * ep.terminalPnl;
      EXPECT_NEAR(sum, target, 1e-9 * std::max(1.0, std::abs(target)));
    }
  }
}

TEST(Env, UncalibratedChargeLeavesInitialTerm) {
  auto cfg = table1_env(20);
  cfg.mortality = UniformLifetime{0.0, 1.5};
  HedgingEnv env(cfg);
  const double L0 = env.reset(1).netLiability;
  ASSERT_GT(std::abs(L0), 1.0);
  const auto ep = run_episode(cfg, noisy_policy(1), 1);
  double sum = 0.0;
  for (const auto& tr : ep.transitions) sum += tr.reward;
  EXPECT_NEAR(sum, L0 * L0 - ep.terminalPnl * ep.terminalPnl, 1e-9 * (L0 * L0));
}

TEST(Env, SameSeedSameEpisode) {
  const auto cfg = table1_env();
  const auto a = run_episode(cfg, make_zero_policy(), 42);
  const auto b = run_episode(cfg, make_zero_policy(), 42);
  ASSERT_EQ(a.transitions.size(), b.transitions.size());
  for (std::size_t k = 0; k < a.transitions.size(); ++k) {
    EXPECT_EQ(a.transitions[k].reward, b.transitions[k].reward);
    EXPECT_EQ(a.transitions[k].nextState, b.transitions[k].nextState);
  }
  EXPECT_NE(run_episode_pnl(cfg, make_zero_policy(), 43), a.terminalPnl);
}

TEST(Env, ScenarioDoesNotDependOnActions) {
  const auto cfg = table1_env();
  const auto a = run_episode(cfg, make_zero_policy(), 8);
  const auto b = run_episode(cfg, noisy_policy(1), 8);
  ASSERT_EQ(a.transitions.size(), b.transitions.size());
  for (std::size_t k = 0; k < a.transitions.size(); ++k) {
    EXPECT_EQ(a.transitions[k].nextState[1], b.transitions[k].nextState[1]);
    EXPECT_EQ(a.transitions[k].nextState[3], b.transitions[k].nextState[3]);
  }
}

TEST(Env, UnhedgedQuietMarketEarnsRiderCharges) {
  auto cfg = table1_env(1);
  cfg.market.sigma = 1e-9;
  HedgingEnv env(cfg);
  env.reset(5);
  double accrued = 0.0;
  while (!env.state().terminal) {
    const auto& raw = env.state().raw;
    const double dt = cfg.grid.dt;
    accrued = accrued * std::exp(cfg.market.r * dt) + cfg.terms.me * raw.F * raw.survivors * dt * std::exp(cfg.market.r * dt);
    env.step(0.0);
  }
  EXPECT_GT(env.state().pnl(), 0.0);
  EXPECT_NEAR(env.state().pnl(), accrued, 1e-9);
}

TEST(Env, DeltaReplicatesInQuietMarket) {
  auto cfg = table1_env(1);
  cfg.market.sigma = 1e-6;
  cfg.mortality = ConstantForce{1e-9};
  const auto hedger = DeltaHedger::cfm_bs(cfg.market.r, cfg.market.sigma, 1e-9);
  // The portfolio starts empty, so the initial liability is carried at the risk-free rate.
  for (double S0 : {70.0, 100.0}) {
    HedgingEnv env(cfg);
    const double L0 = env.reset(1, S0).netLiability;
    const double pnl = run_episode_pnl(cfg, make_delta_policy(hedger), 1, S0);
    EXPECT_NEAR(pnl, -L0 * std::exp(cfg.market.r * cfg.terms.T), 1e-3);
  }
}

TEST(Env, EpisodeEndsWithLastDeath) {
  auto cfg = table1_env(3);
  cfg.mortality = ConstantForce{1e3};
  HedgingEnv env(cfg);
  env.reset(2);
  int steps = 0;
  while (!env.state().terminal) {
    env.step(1.0);
    ++steps;
  }
  EXPECT_EQ(env.state().raw.survivors, 0);
  EXPECT_LT(steps, cfg.grid.n);
  EXPECT_EQ(env.state().netLiability, 0.0);
  EXPECT_THROW(env.step(0.0), std::logic_error);
}

TEST(Env, ActionLimitClampsHoldings) {
  auto capped = table1_env(1);
  capped.actionLimit = 0.5;
  const auto a = run_episode_pnl(capped, [](const EpisodeState&, const HedgingEnv&) { return 7.0; }, 4);
  const auto b = run_episode_pnl(table1_env(1), [](const EpisodeState&, const HedgingEnv&) { return 0.5; }, 4);
  EXPECT_DOUBLE_EQ(a, b);
}

TEST(Env, MisuseIsReported) {
  HedgingEnv env(table1_env());
  EXPECT_THROW(env.step(0.0), std::logic_error);
  EXPECT_THROW(env.reset(1, -5.0), std::invalid_argument);
  auto cfg = table1_env();
  cfg.grid = PathGrid{100, 1.0 / 252.0};
  EXPECT_THROW(HedgingEnv{cfg}, std::invalid_argument);
  cfg = table1_env();
  cfg.mortality = UniformLifetime{0.0, 0.5};
  EXPECT_THROW(HedgingEnv{cfg}, std::invalid_argument);
}

TEST(Env, DeltaHedgeBeatsNoHedge) {
  const auto cfg = table1_env(1);
  const auto delta = evaluate_policy(make_delta_policy(DeltaHedger::cfm_bs(0.02, 0.2, 0.02)), cfg, 1000, 7);
  const auto naked = evaluate_policy(make_zero_policy(), cfg, 1000, 7);
  EXPECT_NEAR(delta.stats.rmse, 0.58, 0.08);
  EXPECT_GT(naked.stats.rmse, 4.0 * delta.stats.rmse);
}
