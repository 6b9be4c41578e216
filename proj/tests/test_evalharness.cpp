#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vahedge/evalharness.hpp"
#include "vahedge/liability.hpp"
#include "vahedge/policies.hpp"

using namespace vahedge;

namespace {

EnvConfig table1_eval() {
  EnvConfig cfg;
  cfg.terms.me = 0.019012;
  cfg.terms.N = 1;
  return cfg;
}

// Left-tail VaR and TVaR straight from the definition.
std::pair<double, double> tail_reference(std::vector<double> x, double alpha) {
  std::sort(x.begin(), x.end());
  const std::size_t k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * x.size() - 1e-9));
  const double var = x[std::max<std::size_t>(k, 1) - 1];
  double sum = 0.0;
  int n = 0;
  for (double v : x)
    if (v <= var) {
      sum += v;
      ++n;
    }
  return {var, sum / n};
}

}  // namespace

TEST(Statistics, ConstantSample) {
  const std::vector<double> x(17, -1.5);
  const auto s = summarize_pnls(x);
  EXPECT_EQ(s.mean, -1.5);
  EXPECT_EQ(s.median, -1.5);
  EXPECT_EQ(s.stdDev, 0.0);
  EXPECT_EQ(s.var90, -1.5);
  EXPECT_EQ(s.var95, -1.5);
  EXPECT_EQ(s.tvar90, -1.5);
  EXPECT_EQ(s.tvar95, -1.5);
  EXPECT_EQ(s.rmse, 1.5);
}

TEST(Statistics, HandCountedDecile) {
  const std::vector<double> x{3, -1, 5, 0, -4, 2, 1, -3, 4, -2};
  const auto s = summarize_pnls(x);
  EXPECT_EQ(s.var90, -4.0);
  EXPECT_EQ(s.tvar90, -4.0);
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_DOUBLE_EQ(s.median, 0.5);
  EXPECT_NEAR(s.stdDev, std::sqrt(82.5 / 9.0), 1e-12);
  EXPECT_NEAR(s.rmse, std::sqrt(8.5), 1e-12);
}

TEST(Statistics, RandomSamplesAgainstDefinition) {
  Engine rng = make_engine(1, 0, StreamPurpose::kEvaluation);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(37 + 13 * trial);
    for (auto& v : x) v = z(rng);
    const auto s = summarize_pnls(x);
    const auto [v90, t90] = tail_reference(x, 0.90);
    const auto [v95, t95] = tail_reference(x, 0.95);
    EXPECT_EQ(s.var90, v90);
    EXPECT_EQ(s.var95, v95);
    EXPECT_NEAR(s.tvar90, t90, 1e-12);
    EXPECT_NEAR(s.tvar95, t95, 1e-12);
    EXPECT_LE(s.tvar95, s.var95);

    std::shuffle(x.begin(), x.end(), rng);
    const auto shuffled = summarize_pnls(x);
    EXPECT_EQ(shuffled.var90, s.var90);
    EXPECT_EQ(shuffled.median, s.median);
    EXPECT_NEAR(shuffled.mean, s.mean, 1e-12);
  }
  EXPECT_THROW(summarize_pnls(std::vector<double>{}), std::invalid_argument);
}

TEST(Pairwise, IdenticalPolicies) {
  const auto zero = make_zero_policy();
  const auto r = compare_policies(zero, zero, table1_eval(), 50, 3);
  for (double d : r.differences) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(r.probNonNegative, 1.0);
  EXPECT_EQ(r.mean, 0.0);
}

TEST(Pairwise, SwappingNegates) {
  const auto delta = make_delta_policy(DeltaHedger::cfm_bs(0.02, 0.2, 0.02));
  const auto zero = make_zero_policy();
  const auto ab = compare_policies(delta, zero, table1_eval(), 200, 4);
  const auto ba = compare_policies(zero, delta, table1_eval(), 200, 4);
  EXPECT_NEAR(ab.mean, -ba.mean, 1e-12);
  EXPECT_NEAR(ab.median, -ba.median, 1e-12);
  EXPECT_NEAR(ab.stdDev, ba.stdDev, 1e-12);
  const double ties =
      static_cast<double>(std::count(ab.differences.begin(), ab.differences.end(), 0.0)) / ab.differences.size();
  EXPECT_NEAR(ab.probNonNegative + ba.probNonNegative - ties, 1.0, 1e-12);
}

TEST(Evaluation, ThreadsDoNotChangeResults) {
  const auto delta = make_delta_policy(DeltaHedger::cfm_bs(0.02, 0.2, 0.02));
  EvalOptions many;
  many.threads = 3;
  const auto a = evaluate_policy(delta, table1_eval(), 40, 5);
  const auto b = evaluate_policy(delta, table1_eval(), 40, 5, many);
  EXPECT_EQ(a.pnls, b.pnls);
  EXPECT_NE(evaluate_policy(delta, table1_eval(), 40, 6).pnls, a.pnls);
}

TEST(Evaluation, CustomInitialPrice) {
  EvalOptions opt;
  opt.initialPrice = 70.0;
  const auto a = evaluate_policy(make_zero_policy(), table1_eval(), 200, 5, opt);
  const auto b = evaluate_policy(make_zero_policy(), table1_eval(), 200, 5);
  EXPECT_LT(a.stats.mean, b.stats.mean);
}

TEST(Sensitivity, Overrides) {
  const auto overrides = default_sensitivity_overrides();
  ASSERT_EQ(overrides.size(), 6u);
  EXPECT_EQ(overrides[2].label(), "sigma=0.3");

  const auto base = table1_eval();
  const auto drift = apply_override(base, {"mu", 0.12});
  EXPECT_EQ(drift.market.mu, 0.12);
  EXPECT_EQ(drift.terms.me, base.terms.me);

  for (const ParameterOverride& change : {ParameterOverride{"sigma", 0.3}, ParameterOverride{"nu", 0.01}}) {
    const auto cfg = apply_override(base, change);
    const double L0 = bs_net_liability(0.0, cfg.terms.account_value(0.0, cfg.market.S0), 1, cfg.terms,
                                       cfg.market.r, cfg.market.sigma, cfg.mortality)
                          .net;
    EXPECT_NEAR(L0, 0.0, 1e-8);
  }
  const auto wild = apply_override(base, {"sigma", 0.3});
  EXPECT_GT(wild.terms.me, base.terms.me);
  EXPECT_EQ(wild.terms.m, wild.terms.me);
  const auto calm = apply_override(base, {"sigma", 0.1});
  EXPECT_EQ(calm.terms.me, base.terms.me);
  EXPECT_GT(calm.terms.m, base.terms.m);
  EXPECT_THROW(apply_override(base, {"kappa", 1.0}), std::invalid_argument);
}

TEST(Sensitivity, DeltaErrorGrowsWithVolatility) {
  double previous = 0.0;
  for (double sigma : {0.1, 0.2, 0.3}) {
    const auto cfg = apply_override(table1_eval(), {"sigma", sigma});
    const auto rmse =
        evaluate_policy(make_delta_policy(DeltaHedger::cfm_bs(0.02, sigma, 0.02)), cfg, 800, 9).stats.rmse;
    EXPECT_GT(rmse, previous);
    previous = rmse;
  }
}

TEST(Reports, CsvShapes) {
  const std::vector<double> x{0.5, -1.0, 2.0};
  std::ostringstream pnl, ecdf, stats;
  write_pnl_csv(pnl, x);
  write_ecdf_csv(ecdf, x);
  write_stats_header(stats, true);
  write_stats_row(stats, "zero", summarize_pnls(x));
  EXPECT_EQ(pnl.str(), "scenario,pnl\n0,0.5\n1,-1\n2,2\n");
  EXPECT_EQ(ecdf.str().substr(0, 14), "pnl,cdf\n-1,0.3");
  EXPECT_EQ(stats.str().substr(0, 5), "label");
  EXPECT_NE(stats.str().find("\nzero,"), std::string::npos);
}
