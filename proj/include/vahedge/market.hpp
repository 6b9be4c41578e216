#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "vahedge/rng.hpp"

namespace vahedge {

inline constexpr double kTradingDaysPerYear = 252.0;

/// Black-Scholes market: dS = mu S dt + sigma S dW, risk-free rate r.
struct BsParams {
  double r = 0.02;
  double S0 = 100.0;
  double mu = 0.08;
  double sigma = 0.2;

  void validate() const;
};

/// Heston market. Sigma0 and SigmaBar are variances, eta is the vol-of-vol
/// and phi the correlation between the price and variance drivers.
struct HestonParams {
  double r = 0.02;
  double S0 = 100.0;
  double mu = 0.08;
  double Sigma0 = 0.04;
  double kappa = 0.2;
  double SigmaBar = 0.04;
  double eta = 0.1;
  double phi = -0.5;

  void validate() const;
};

/// Constant force of mortality nu (per year).
struct ConstantForce {
  double nu = 0.02;
};

/// Future lifetime uniformly distributed on [bLow, bUp] (increasing force).
struct UniformLifetime {
  double bLow = 0.0;
  double bUp = 50.0;
};

using MortalityModel = std::variant<ConstantForce, UniformLifetime>;

void validate(const MortalityModel& model);

/// P(alive at s | alive at t) for contract times 0 <= t <= s.
double survival_probability(const MortalityModel& model, double t, double s);

/// Probability that a policyholder alive at t dies in (t, s].
double death_probability(const MortalityModel& model, double t, double s);

/// Uniform hedging grid t_0 = 0 < t_1 < ... < t_n = T.
struct PathGrid {
  int n = 252;
  double dt = 1.0 / kTradingDaysPerYear;

  /// Grid covering [0, T] with spacing as close to `dt` as an integer step count allows.
  static PathGrid covering(double T, double dt = 1.0 / kTradingDaysPerYear);

  double time(int k) const { return k * dt; }
  double horizon() const { return n * dt; }
  void validate() const;
};

/// One exact log-normal step of the risky asset.
double bs_step(double S, double mu, double sigma, double dt, double z);

std::vector<double> simulate_bs_path(const BsParams& params, const PathGrid& grid, Engine& rng);

struct HestonPath {
  std::vector<double> prices;
  std::vector<double> variances;  // truncated at zero
};

/// Full-truncation Euler scheme with exp-Euler prices.
HestonPath simulate_heston_path(const HestonParams& params, const PathGrid& grid, Engine& rng);

/// Survivor counts at every grid time. Each alive policyholder dies in
/// (t_k, t_{k+1}] with the model's one-step death probability; deaths are
/// recorded at the right endpoint.
std::vector<int> simulate_deaths(const MortalityModel& model, int N, const PathGrid& grid, Engine& rng);

}  // namespace vahedge
