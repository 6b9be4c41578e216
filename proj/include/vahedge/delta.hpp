#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <variant>
#include <vector>

#include "vahedge/liability.hpp"
#include "vahedge/market.hpp"

namespace vahedge {

// Each hedger returns the number of risky-asset shares dL/dS to hold for the
// whole cohort. All of them return 0 when nobody is left or t >= T.

double cfm_bs_delta(double t, double S, int survivors, const ContractTerms& terms, double r, double sigma,
                    double nu);

double ifm_bs_delta(double t, double S, int survivors, const ContractTerms& terms, double r, double sigma,
                    double bUp);

/// Delta of the gross-liability leg only (the short put), for either mortality law.
double bs_gross_delta(double t, double S, int survivors, const ContractTerms& terms, double r, double sigma,
                      const MortalityModel& mortality);

struct MonteCarloDelta {
  double value = 0.0;
  double stdError = 0.0;
};

/// Central finite difference (L(S(1+h)) - L(S(1-h))) / (2hS) of the Monte-Carlo
/// liability with common random numbers on both bumps. Sigma is the variance
/// the hedger assumes at time t.
MonteCarloDelta heston_mc_delta(double t, double S, double Sigma, int survivors, const ContractTerms& terms,
                                const HestonParams& heston, const MortalityModel& mortality, std::size_t paths,
                                std::uint64_t seed, double bump = 1e-2);

/// Heston Deltas on every date of a hedging grid, from one batch of
/// risk-neutral fund-ratio paths per date. Heston returns do not depend on
/// the price level, so the cached ratios F_T / F_t price every S; mortality
/// enters through its survival probabilities. The finite difference on the
/// cached sample is the same common-random-number estimator as
/// heston_mc_delta.
class HestonDeltaSurface {
 public:
  HestonDeltaSurface(const ContractTerms& terms, const HestonParams& heston, const MortalityModel& mortality,
                     const PathGrid& grid, double Sigma, std::size_t paths, std::uint64_t seed,
                     double bump = 1e-2);

  double delta(int k, double S, int survivors) const;
  /// Net liability per policyholder at grid date k for account value F.
  double unit_liability(int k, double F) const;

 private:
  struct DateSample {
    std::vector<double> sortedRatio;   // F_T / F_t ascending
    std::vector<double> prefixRatio;   // prefixRatio[i] = sum of the first i ratios
    double riderFactor = 0.0;          // E[int e^{-r(s-t)} F_s/F_t p(s|t) ds]
    double grossFactor = 0.0;          // e^{-r tau} p(T|t)
  };

  ContractTerms terms_;
  PathGrid grid_;
  double bump_;
  std::vector<DateSample> dates_;
};

/// One of the four benchmark hedgers with its assumed model.
class DeltaHedger {
 public:
  enum class Kind { kCfmBs, kIfmBs, kCfmHeston, kIfmHeston };

  static DeltaHedger cfm_bs(double r, double sigma, double nu);
  static DeltaHedger ifm_bs(double r, double sigma, double bUp);
  /// Heston hedgers price with Sigma_t fixed at the long-run variance.
  static DeltaHedger heston(const HestonParams& heston, const MortalityModel& mortality, const ContractTerms& terms,
                            const PathGrid& grid, std::size_t paths, std::uint64_t seed);

  Kind kind() const { return kind_; }
  std::string_view name() const;

  /// Shares for the whole cohort at grid date k (time t) and price S.
  double shares(int k, double t, double S, int survivors, const ContractTerms& terms) const;

 private:
  Kind kind_ = Kind::kCfmBs;
  double r_ = 0.0;
  double sigma_ = 0.0;
  double nu_ = 0.0;
  double bUp_ = 0.0;
  std::shared_ptr<const HestonDeltaSurface> surface_;
};

}  // namespace vahedge
