#pragma once

#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include "vahedge/market.hpp"

namespace vahedge {

/// Homogeneous GMMB contract shared by all N policyholders.
struct ContractTerms {
  double G = 100.0;     // minimum guarantee
  double rho = 1.19;    // shares held per policyholder at inception
  double m = 0.02;      // asset-value-based fee rate
  double me = 0.019;    // rider-charge rate, 0 < me <= m
  double T = 1.0;       // term to maturity
  int N = 500;          // initial number of policyholders
  double age = 20.0;    // bookkeeping only

  void validate() const;

  /// Segregated account value F_t = rho S_t e^{-m t}.
  double account_value(double t, double S) const;
};

/// Value of the gross liability, the rider charges, and their difference.
struct LiabilityDecomposition {
  double grossLiability = 0.0;
  double riderCharge = 0.0;
  double net = 0.0;
};

double normal_cdf(double x);

/// Closed-form net liability under Black-Scholes with constant force of mortality.
LiabilityDecomposition bs_cfm_net_liability(double t, double F, int survivors, const ContractTerms& terms,
                                            double r, double sigma, double nu);

/// Closed-form net liability under Black-Scholes with a uniform lifetime on [0, bUp].
/// Requires T < bUp.
LiabilityDecomposition ifm_bs_net_liability(double t, double F, int survivors, const ContractTerms& terms,
                                            double r, double sigma, double bUp);

/// Dispatches to the closed form matching the mortality model.
LiabilityDecomposition bs_net_liability(double t, double F, int survivors, const ContractTerms& terms, double r,
                                        double sigma, const MortalityModel& mortality);

using FinancialModel = std::variant<BsParams, HestonParams>;

/// Discounted gross liability and rider-charge value realised on one path.
struct PathLiability {
  double gross = 0.0;
  double rider = 0.0;
};

/// Per-path samples behind mc_net_liability_oracle. Equal seeds give equal
/// driving noise, so two calls that differ only in F share their randomness.
std::vector<PathLiability> simulate_liability_paths(double t, double F, int survivors, const ContractTerms& terms,
                                                    const FinancialModel& model, const MortalityModel& mortality,
                                                    std::size_t paths, std::uint64_t seed,
                                                    double dt = 1.0 / kTradingDaysPerYear);

struct OracleEstimate {
  LiabilityDecomposition value;
  double grossStdError = 0.0;
  double riderStdError = 0.0;
  double netStdError = 0.0;
};

/// Monte-Carlo valuation of the same quantities. F follows the risk-neutral
/// dynamics of the given model (drift r - m), each survivor's death time is
/// drawn from the mortality model, and rider charges accrue with a
/// left-endpoint rule on a grid of spacing `dt`. For Heston, params.Sigma0 is
/// taken as the variance at time t.
OracleEstimate mc_net_liability_oracle(double t, double F, int survivors, const ContractTerms& terms,
                                       const FinancialModel& model, const MortalityModel& mortality,
                                       std::size_t paths, std::uint64_t seed,
                                       double dt = 1.0 / kTradingDaysPerYear);

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rider-charge rate me in (0, m] that zeroes the time-0 net liability under
/// Black-Scholes with initial price S0. `terms.me` is ignored. Throws
/// CalibrationError when even me = m leaves L_0 > 0.
double calibrate_rider_charge(const ContractTerms& terms, double S0, double r, double sigma,
                              const MortalityModel& mortality);

/// Contract terms with L_0 = 0. Keeps me and solves m in [me, 1) when that is
/// possible; otherwise every fee funds the guarantee (me = m) and both rise to
/// the rate that zeroes L_0.
ContractTerms calibrate_fees(const ContractTerms& terms, double S0, double r, double sigma,
                             const MortalityModel& mortality);

}  // namespace vahedge
