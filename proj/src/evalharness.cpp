#include "vahedge/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vahedge/policies.hpp"

namespace vahedge {

double lower_quantile(std::span<const double> sortedAscending, double q) {
  if (sortedAscending.empty()) throw std::invalid_argument("lower_quantile: empty sample");
  const double n = static_cast<double>(sortedAscending.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n - 1e-9)));
  return sortedAscending[std::min(rank, sortedAscending.size()) - 1];
}

PnlStatistics summarize_pnls(std::span<const double> pnls) {
  if (pnls.empty()) throw std::invalid_argument("summarize_pnls: empty sample");
  std::vector<double> sorted(pnls.begin(), pnls.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  PnlStatistics s;
  double sum = 0.0, sumSquares = 0.0;
  for (double x : sorted) {
    sum += x;
    sumSquares += x * x;
  }
  s.mean = sum / static_cast<double>(n);
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double centered = 0.0;
  for (double x : sorted) centered += (x - s.mean) * (x - s.mean);
  s.stdDev = n > 1 ? std::sqrt(centered / static_cast<double>(n - 1)) : 0.0;
  s.rmse = std::sqrt(sumSquares / static_cast<double>(n));

  const auto tail_mean = [&sorted](double threshold) {
    double total = 0.0;
    std::size_t count = 0;
    for (double x : sorted) {
      if (x > threshold) break;
      total += x;
      ++count;
    }
    return total / static_cast<double>(count);
  };
  s.var90 = lower_quantile(sorted, 0.10);
  s.var95 = lower_quantile(sorted, 0.05);
  s.tvar90 = tail_mean(s.var90);
  s.tvar95 = tail_mean(s.var95);
  return s;
}

std::uint64_t scenario_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, static_cast<std::uint64_t>(index), StreamPurpose::kEvaluation);
}

EvalReport evaluate_policy(const Policy& policy, const EnvConfig& config, int scenarios, std::uint64_t seed,
                           const EvalOptions& options) {
  if (scenarios < 1) throw std::invalid_argument("evaluate_policy: need at least one scenario");
  config.validate();
  EvalReport report;
  report.pnls.resize(static_cast<std::size_t>(scenarios));

  const auto run_range = [&](std::size_t begin, std::size_t end) {
    HedgingEnv env(config);
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint64_t s = scenario_seed(seed, i);
      if (options.initialPrice) env.reset(s, *options.initialPrice); else env.reset(s);
      while (!env.state().terminal) env.step(policy(env.state(), env));
      report.pnls[i] = env.state().pnl();
    }
  };

  const std::size_t total = report.pnls.size();
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.threads, 1)), 1, total);
  if (threads == 1) {
    run_range(0, total);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (total + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(total, begin + chunk);
      if (begin < end) workers.emplace_back(run_range, begin, end);
    }
  }
  report.stats = summarize_pnls(report.pnls);
  return report;
}

PairwiseReport pairwise_report(std::span<const double> pnlA, std::span<const double> pnlB) {
  if (pnlA.size() != pnlB.size() || pnlA.empty()) throw std::invalid_argument("pairwise_report: size mismatch");
  PairwiseReport out;
  out.differences.resize(pnlA.size());
  std::size_t nonNegative = 0;
  for (std::size_t i = 0; i < pnlA.size(); ++i) {
    out.differences[i] = pnlA[i] - pnlB[i];
    if (out.differences[i] >= 0.0) ++nonNegative;
  }
  const PnlStatistics s = summarize_pnls(out.differences);
  out.mean = s.mean;
  out.median = s.median;
  out.stdDev = s.stdDev;
  out.probNonNegative = static_cast<double>(nonNegative) / static_cast<double>(pnlA.size());
  return out;
}

PairwiseReport compare_policies(const Policy& a, const Policy& b, const EnvConfig& config, int scenarios,
                                std::uint64_t seed, const EvalOptions& options) {
  const EvalReport ra = evaluate_policy(a, config, scenarios, seed, options);
  const EvalReport rb = evaluate_policy(b, config, scenarios, seed, options);
  return pairwise_report(ra.pnls, rb.pnls);
}

std::string ParameterOverride::label() const {
  std::ostringstream os;
  os << key << '=' << value;
  return os.str();
}

std::vector<ParameterOverride> default_sensitivity_overrides() {
  return {{"mu", 0.12}, {"mu", 0.04}, {"sigma", 0.3}, {"sigma", 0.1}, {"nu", 0.03}, {"nu", 0.01}};
}

EnvConfig apply_override(const EnvConfig& base, const ParameterOverride& change) {
  EnvConfig out = base;
  if (change.key == "mu") {
    out.market.mu = change.value;
    return out;
  }
  if (change.key == "sigma") {
    out.market.sigma = change.value;
  } else if (change.key == "nu") {
    if (!std::holds_alternative<ConstantForce>(out.mortality))
      throw std::invalid_argument("override nu needs a constant-force mortality model");
    out.mortality = ConstantForce{change.value};
  } else {
    throw std::invalid_argument("unknown override key '" + change.key + "' (expected mu, sigma or nu)");
  }
  out.terms = calibrate_fees(out.terms, out.market.S0, out.market.r, out.market.sigma, out.mortality);
  return out;
}

std::vector<SensitivityRow> sensitivity_sweep(const EnvConfig& base, const std::vector<ParameterOverride>& overrides,
                                              const PpoConfig& trainer, std::uint64_t seed,
                                              const SensitivityOptions& options) {
  std::vector<std::pair<std::string, EnvConfig>> cases;
  if (options.includeBase) cases.emplace_back("base", base);
  for (const auto& change : overrides) cases.emplace_back(change.label(), apply_override(base, change));

  std::vector<SensitivityRow> rows;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [label, trainConfig] = cases[i];
    EnvConfig evalConfig = trainConfig;
    evalConfig.terms.N = options.evaluationPolicyholders;

    const TrainResult trained = train_ppo(trainConfig, trainer, derive_seed(seed, i, StreamPurpose::kTraining));
    const std::uint64_t evalSeed = derive_seed(seed, i, StreamPurpose::kEvaluation);
    EvalOptions evalOptions;
    evalOptions.threads = options.threads;

    const double nu = std::holds_alternative<ConstantForce>(trainConfig.mortality)
                          ? std::get<ConstantForce>(trainConfig.mortality).nu
                          : 0.0;
    const DeltaHedger delta = DeltaHedger::cfm_bs(trainConfig.market.r, trainConfig.market.sigma, nu);

    SensitivityRow row;
    row.label = label;
    row.feeRate = trainConfig.terms.m;
    row.riderCharge = trainConfig.terms.me;
    row.agent = evaluate_policy(make_network_policy(trained.params), evalConfig, options.scenarios, evalSeed, evalOptions);
    row.delta = evaluate_policy(make_delta_policy(delta), evalConfig, options.scenarios, evalSeed, evalOptions);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_pnl_csv(std::ostream& os, std::span<const double> pnls) {
  os << "scenario,pnl\n" << std::setprecision(17);
  for (std::size_t i = 0; i < pnls.size(); ++i) os << i << ',' << pnls[i] << '\n';
}

void write_stats_header(std::ostream& os, bool withLabel) {
  if (withLabel) os << "label,";
  os << "mean,median,std_dev,var90,var95,tvar90,tvar95,rmse\n";
}

void write_stats_row(std::ostream& os, const std::string& label, const PnlStatistics& s) {
  os << std::setprecision(10);
  if (!label.empty()) os << label << ',';
  os << s.mean << ',' << s.median << ',' << s.stdDev << ',' << s.var90 << ',' << s.var95 << ',' << s.tvar90 << ','
     << s.tvar95 << ',' << s.rmse << '\n';
}

void write_pairwise_csv(std::ostream& os, const std::vector<std::pair<std::string, PairwiseReport>>& rows) {
  os << "label,mean,median,std_dev,prob_non_negative\n" << std::setprecision(10);
  for (const auto& [label, r] : rows)
    os << label << ',' << r.mean << ',' << r.median << ',' << r.stdDev << ',' << r.probNonNegative << '\n';
}

void write_ecdf_csv(std::ostream& os, std::span<const double> pnls) {
  std::vector<double> sorted(pnls.begin(), pnls.end());
  std::sort(sorted.begin(), sorted.end());
  os << "pnl,cdf\n" << std::setprecision(17);
  for (std::size_t i = 0; i < sorted.size(); ++i)
    os << sorted[i] << ',' << static_cast<double>(i + 1) / static_cast<double>(sorted.size()) << '\n';
}

}  // namespace vahedge
