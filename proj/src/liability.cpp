#include "vahedge/liability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace vahedge {
namespace {

struct PutLeg {
  double bond;   // G e^{-r tau} Phi(-d2)
  double fund;   // F e^{-m tau} Phi(-d1)
};

// Value of (G - F_T)_+ per policyholder, split in its two legs.
PutLeg put_legs(double tau, double F, double G, double r, double m, double sigma) {
  if (F <= 0.0) return {G * std::exp(-r * tau), 0.0};
  const double volRoot = sigma * std::sqrt(tau);
  const double d1 = (std::log(F / G) + (r - m + 0.5 * sigma * sigma) * tau) / volRoot;
  const double d2 = d1 - volRoot;
  return {G * std::exp(-r * tau) * normal_cdf(-d2), F * std::exp(-m * tau) * normal_cdf(-d1)};
}

LiabilityDecomposition at_maturity(double F, int survivors, const ContractTerms& terms) {
  const double gross = std::max(terms.G - F, 0.0) * survivors;
  return {gross, 0.0, gross};
}

void check_inputs(double t, double F, int survivors, const ContractTerms& terms) {
  if (t > terms.T || t < 0.0) throw std::domain_error("net liability: t must lie in [0, T]");
  if (F < 0.0 || survivors < 0) throw std::domain_error("net liability: F and survivors must be non-negative");
}

}  // namespace

void ContractTerms::validate() const {
  if (!(G > 0.0) || !(rho > 0.0)) throw std::invalid_argument("ContractTerms: G and rho must be positive");
  if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("ContractTerms: need 0 < m < 1");
  if (!(me > 0.0 && me <= m)) throw std::invalid_argument("ContractTerms: need 0 < me <= m");
  if (!(T > 0.0)) throw std::invalid_argument("ContractTerms: T must be positive");
  if (N < 1) throw std::invalid_argument("ContractTerms: N must be at least 1");
}

double ContractTerms::account_value(double t, double S) const { return rho * S * std::exp(-m * t); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

LiabilityDecomposition bs_cfm_net_liability(double t, double F, int survivors, const ContractTerms& terms,
                                            double r, double sigma, double nu) {
  check_inputs(t, F, survivors, terms);
  if (survivors == 0) return {};
  const double tau = terms.T - t;
  if (tau <= 0.0) return at_maturity(F, survivors, terms);

  const PutLeg put = put_legs(tau, F, terms.G, r, terms.m, sigma);
  const double gross = std::exp(-nu * tau) * (put.bond - put.fund) * survivors;
  const double decay = terms.m + nu;
  const double rider = terms.me * F * survivors * (-std::expm1(-decay * tau)) / decay;
  return {gross, rider, gross - rider};
}

LiabilityDecomposition ifm_bs_net_liability(double t, double F, int survivors, const ContractTerms& terms,
                                            double r, double sigma, double bUp) {
  if (terms.T >= bUp) throw std::domain_error("ifm_bs_net_liability: requires T < bUp");
  check_inputs(t, F, survivors, terms);
  if (survivors == 0) return {};
  const double tau = terms.T - t;
  if (tau <= 0.0) return at_maturity(F, survivors, terms);

  const double remaining = bUp - t;
  const PutLeg put = put_legs(tau, F, terms.G, r, terms.m, sigma);
  const double gross = ((bUp - terms.T) / remaining) * (put.bond - put.fund) * survivors;

  // int_0^tau e^{-m u} (remaining - u) / remaining du
  const double m = terms.m;
  const double decayed = -std::expm1(-m * tau);
  const double integral = decayed / m - (decayed - m * tau * std::exp(-m * tau)) / (m * m * remaining);
  const double rider = terms.me * F * survivors * integral;
  return {gross, rider, gross - rider};
}

LiabilityDecomposition bs_net_liability(double t, double F, int survivors, const ContractTerms& terms, double r,
                                        double sigma, const MortalityModel& mortality) {
  if (const auto* cfm = std::get_if<ConstantForce>(&mortality))
    return bs_cfm_net_liability(t, F, survivors, terms, r, sigma, cfm->nu);
  return ifm_bs_net_liability(t, F, survivors, terms, r, sigma, std::get<UniformLifetime>(mortality).bUp);
}

std::vector<PathLiability> simulate_liability_paths(double t, double F, int survivors, const ContractTerms& terms,
                                                    const FinancialModel& model, const MortalityModel& mortality,
                                                    std::size_t paths, std::uint64_t seed, double dt) {
  check_inputs(t, F, survivors, terms);
  const double tau = terms.T - t;
  if (survivors == 0) return std::vector<PathLiability>(paths);
  if (tau <= 0.0) {
    const auto terminal = at_maturity(F, survivors, terms);
    return std::vector<PathLiability>(paths, PathLiability{terminal.grossLiability, 0.0});
  }

  const int steps = std::max(1, static_cast<int>(std::ceil(tau / dt - 1e-9)));
  const double h = tau / steps;
  const double sqrtH = std::sqrt(h);
  const double r = std::visit([](const auto& p) { return p.r; }, model);
  const double m = terms.m;

  std::vector<double> discount(static_cast<std::size_t>(steps) + 1);
  for (int j = 0; j <= steps; ++j) discount[j] = std::exp(-r * j * h);

  Engine rng = make_engine(seed, 0, StreamPurpose::kOracle);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> exponential(1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Deaths bucketed by the grid step in which they settle (right endpoint).
  std::vector<int> deathsAt(static_cast<std::size_t>(steps) + 2);
  std::vector<PathLiability> out(paths);

  for (auto& sample : out) {
    std::fill(deathsAt.begin(), deathsAt.end(), 0);
    for (int i = 0; i < survivors; ++i) {
      double remainingLife;
      if (const auto* cfm = std::get_if<ConstantForce>(&mortality)) {
        remainingLife = exponential(rng) / cfm->nu;
      } else {
        const double bUp = std::get<UniformLifetime>(mortality).bUp;
        remainingLife = uniform(rng) * std::max(bUp - t, 0.0);
      }
      const double stepsToDeath = std::ceil(remainingLife / h);
      if (stepsToDeath <= steps) deathsAt[static_cast<std::size_t>(std::max(stepsToDeath, 1.0))] += 1;
    }

    double fund = F;
    double variance = 0.0;
    if (const auto* heston = std::get_if<HestonParams>(&model)) variance = heston->Sigma0;
    int alive = survivors;
    double rider = 0.0;
    for (int j = 0; j < steps; ++j) {
      rider += discount[j] * terms.me * fund * alive * h;
      if (const auto* bs = std::get_if<BsParams>(&model)) {
        fund *= std::exp((r - m - 0.5 * bs->sigma * bs->sigma) * h + bs->sigma * sqrtH * normal(rng));
      } else {
        const auto& hp = std::get<HestonParams>(model);
        const double z1 = normal(rng);
        const double z2 = hp.phi * z1 + std::sqrt(1.0 - hp.phi * hp.phi) * normal(rng);
        const double vPlus = std::max(variance, 0.0);
        const double volH = std::sqrt(vPlus) * sqrtH;
        fund *= std::exp((r - m - 0.5 * vPlus) * h + volH * z1);
        variance += hp.kappa * (hp.SigmaBar - vPlus) * h + hp.eta * volH * z2;
      }
      alive -= deathsAt[static_cast<std::size_t>(j) + 1];
    }
    sample.gross = discount[steps] * std::max(terms.G - fund, 0.0) * alive;
    sample.rider = rider;
  }
  return out;
}

OracleEstimate mc_net_liability_oracle(double t, double F, int survivors, const ContractTerms& terms,
                                       const FinancialModel& model, const MortalityModel& mortality,
                                       std::size_t paths, std::uint64_t seed, double dt) {
  if (paths < 2) throw std::invalid_argument("mc_net_liability_oracle: need at least two paths");
  const auto samples = simulate_liability_paths(t, F, survivors, terms, model, mortality, paths, seed, dt);

  double sumGross = 0.0, sumGross2 = 0.0, sumRider = 0.0, sumRider2 = 0.0, sumNet2 = 0.0;
  for (const auto& s : samples) {
    sumGross += s.gross;
    sumGross2 += s.gross * s.gross;
    sumRider += s.rider;
    sumRider2 += s.rider * s.rider;
    sumNet2 += (s.gross - s.rider) * (s.gross - s.rider);
  }
  const double n = static_cast<double>(paths);
  const auto std_error = [n](double sum, double sum2) {
    const double mean = sum / n;
    return std::sqrt(std::max(sum2 - n * mean * mean, 0.0) / (n - 1.0) / n);
  };
  OracleEstimate out;
  out.value = {sumGross / n, sumRider / n, (sumGross - sumRider) / n};
  out.grossStdError = std_error(sumGross, sumGross2);
  out.riderStdError = std_error(sumRider, sumRider2);
  out.netStdError = std_error(sumGross - sumRider, sumNet2);
  return out;
}

double calibrate_rider_charge(const ContractTerms& terms, double S0, double r, double sigma,
                              const MortalityModel& mortality) {
  ContractTerms trial = terms;
  const double F0 = terms.account_value(0.0, S0);
  const double tolerance = 1e-8 * terms.G * terms.N;
  const auto net_at = [&](double me) {
    trial.me = me;
    return bs_net_liability(0.0, F0, terms.N, trial, r, sigma, mortality).net;
  };

  if (net_at(terms.m) > 0.0)
    throw CalibrationError("calibrate_rider_charge: guarantee too expensive, no rider-charge rate in (0, m] zeroes L_0");

  // Bisect until the bracket cannot shrink any further.
  double lo = 0.0, hi = terms.m;
  double best = hi, bestValue = net_at(hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double value = net_at(mid);
    if (std::abs(value) < std::abs(bestValue)) {
      best = mid;
      bestValue = value;
    }
    if (value == 0.0) break;
    if (value > 0.0) lo = mid; else hi = mid;
  }
  if (!(std::abs(bestValue) < tolerance))
    throw CalibrationError("calibrate_rider_charge: no rate reaches |L_0| below the tolerance");
  return best;
}

ContractTerms calibrate_fees(const ContractTerms& terms, double S0, double r, double sigma,
                             const MortalityModel& mortality) {
  terms.validate();
  const double F0 = terms.account_value(0.0, S0);
  const auto net_at = [&](double m, double me) {
    ContractTerms trial = terms;
    trial.m = m;
    trial.me = me;
    return bs_net_liability(0.0, F0, terms.N, trial, r, sigma, mortality).net;
  };
  // solve expects a function that increases with the rate.
  const auto solve = [&](double lo, double hi, auto&& net) {
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (net(mid) > 0.0) hi = mid; else lo = mid;
    }
    return std::abs(net(lo)) <= std::abs(net(hi)) ? lo : hi;
  };
  constexpr double kMaxRate = 0.999;
  ContractTerms out = terms;
  const auto keep = [&](double m) { return net_at(m, terms.me); };
  if (keep(terms.me) <= 0.0) {
    if (keep(kMaxRate) < 0.0) throw CalibrationError("calibrate_fees: no fee rate below 1 zeroes L_0");
    out.m = solve(terms.me, kMaxRate, keep);
    return out;
  }
  const auto both = [&](double m) { return -net_at(m, m); };
  if (both(kMaxRate) < 0.0) throw CalibrationError("calibrate_fees: no fee rate below 1 zeroes L_0");
  out.m = out.me = solve(terms.me, kMaxRate, both);
  return out;
}

}  // namespace vahedge
