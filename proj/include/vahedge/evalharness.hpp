#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vahedge/env.hpp"
#include "vahedge/policygrad.hpp"

namespace vahedge {

/// Summary of terminal P&Ls. VaR/TVaR follow the left-tail convention:
/// VaR_a is the order statistic at ceil((1 - a) n) of the ascending sample,
/// TVaR_a the mean of all P&Ls at or below it. The standard deviation uses
/// n - 1, the RMSE 1/n.
struct PnlStatistics {
  double mean = 0.0;
  double median = 0.0;
  double stdDev = 0.0;
  double var90 = 0.0;
  double var95 = 0.0;
  double tvar90 = 0.0;
  double tvar95 = 0.0;
  double rmse = 0.0;
};

PnlStatistics summarize_pnls(std::span<const double> pnls);

/// Lower empirical quantile at level q in (0, 1].
double lower_quantile(std::span<const double> sortedAscending, double q);

struct EvalReport {
  std::vector<double> pnls;  // indexed by scenario
  PnlStatistics stats;
};

struct EvalOptions {
  int threads = 1;
  // Every scenario starts from this price instead of the market's S0 when set.
  std::optional<double> initialPrice;
};

/// Seed of scenario `index` in an evaluation keyed by `seed`. Policies
/// evaluated with the same seed face identical markets and deaths.
std::uint64_t scenario_seed(std::uint64_t seed, std::size_t index);

EvalReport evaluate_policy(const Policy& policy, const EnvConfig& config, int scenarios, std::uint64_t seed,
                           const EvalOptions& options = {});

struct PairwiseReport {
  std::vector<double> differences;  // P&L of A minus P&L of B per scenario
  double mean = 0.0;
  double median = 0.0;
  double stdDev = 0.0;
  double probNonNegative = 0.0;
};

PairwiseReport pairwise_report(std::span<const double> pnlA, std::span<const double> pnlB);

PairwiseReport compare_policies(const Policy& a, const Policy& b, const EnvConfig& config, int scenarios,
                                std::uint64_t seed, const EvalOptions& options = {});

/// One ceteris-paribus change of the base environment.
struct ParameterOverride {
  std::string key;  // "mu", "sigma" or "nu"
  double value = 0.0;

  std::string label() const;
};

/// The six overrides: mu in {0.12, 0.04}, sigma in {0.3, 0.1}, nu in {0.03, 0.01}.
std::vector<ParameterOverride> default_sensitivity_overrides();

/// Applies an override. sigma and nu change L_0, so the fees are recalibrated
/// with calibrate_fees to keep L_0 = 0; mu leaves them untouched.
EnvConfig apply_override(const EnvConfig& base, const ParameterOverride& change);

struct SensitivityRow {
  std::string label;
  double feeRate = 0.0;
  double riderCharge = 0.0;
  EvalReport agent;
  EvalReport delta;
};

struct SensitivityOptions {
  int evaluationPolicyholders = 1;
  int scenarios = 5000;
  int threads = 1;
  bool includeBase = true;
};

/// Retrains the agent in each overridden training environment and evaluates
/// it next to the CFM-BS Delta of that environment.
std::vector<SensitivityRow> sensitivity_sweep(const EnvConfig& base, const std::vector<ParameterOverride>& overrides,
                                              const PpoConfig& trainer, std::uint64_t seed,
                                              const SensitivityOptions& options = {});

// CSV writers.
void write_pnl_csv(std::ostream& os, std::span<const double> pnls);
void write_stats_header(std::ostream& os, bool withLabel);
void write_stats_row(std::ostream& os, const std::string& label, const PnlStatistics& stats);
void write_pairwise_csv(std::ostream& os, const std::vector<std::pair<std::string, PairwiseReport>>& rows);
/// Empirical CDF points (pnl, cumulative probability) of a sample.
void write_ecdf_csv(std::ostream& os, std::span<const double> pnls);

}  // namespace vahedge
