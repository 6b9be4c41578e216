#include "vahedge/market.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vahedge {

void BsParams::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("BsParams: sigma must be positive");
  if (!(S0 > 0.0)) throw std::invalid_argument("BsParams: S0 must be positive");
}

void HestonParams::validate() const {
  if (!(S0 > 0.0)) throw std::invalid_argument("HestonParams: S0 must be positive");
  if (Sigma0 < 0.0 || kappa < 0.0 || SigmaBar < 0.0 || eta < 0.0)
    throw std::invalid_argument("HestonParams: Sigma0, kappa, SigmaBar and eta must be non-negative");
  if (std::abs(phi) > 1.0) throw std::invalid_argument("HestonParams: |phi| must not exceed 1");
}

void validate(const MortalityModel& model) {
  if (const auto* cfm = std::get_if<ConstantForce>(&model)) {
    if (!(cfm->nu > 0.0)) throw std::invalid_argument("ConstantForce: nu must be positive");
  } else {
    const auto& ifm = std::get<UniformLifetime>(model);
    if (!(ifm.bLow >= 0.0 && ifm.bLow < ifm.bUp))
      throw std::invalid_argument("UniformLifetime: need 0 <= bLow < bUp");
  }
}

double survival_probability(const MortalityModel& model, double t, double s) {
  if (s <= t) return 1.0;
  if (const auto* cfm = std::get_if<ConstantForce>(&model)) return std::exp(-cfm->nu * (s - t));
  const double bUp = std::get<UniformLifetime>(model).bUp;
  if (t >= bUp || s >= bUp) return 0.0;
  return (bUp - s) / (bUp - t);
}

double death_probability(const MortalityModel& model, double t, double s) {
  if (s <= t) return 0.0;
  if (const auto* cfm = std::get_if<ConstantForce>(&model)) return -std::expm1(-cfm->nu * (s - t));
  return 1.0 - survival_probability(model, t, s);
}

PathGrid PathGrid::covering(double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) throw std::invalid_argument("PathGrid: T and dt must be positive");
  const int n = std::max(1, static_cast<int>(std::lround(T / dt)));
  return PathGrid{n, T / n};
}

void PathGrid::validate() const {
  if (n < 1 || !(dt > 0.0)) throw std::invalid_argument("PathGrid: need n >= 1 and dt > 0");
}

double bs_step(double S, double mu, double sigma, double dt, double z) {
  return S * std::exp((mu - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * z);
}

std::vector<double> simulate_bs_path(const BsParams& params, const PathGrid& grid, Engine& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> path(static_cast<std::size_t>(grid.n) + 1);
  path[0] = params.S0;
  for (int k = 0; k < grid.n; ++k) path[k + 1] = bs_step(path[k], params.mu, params.sigma, grid.dt, normal(rng));
  return path;
}

HestonPath simulate_heston_path(const HestonParams& params, const PathGrid& grid, Engine& rng) {
  std::normal_distribution<double> normal;
  const std::size_t len = static_cast<std::size_t>(grid.n) + 1;
  HestonPath out{std::vector<double>(len), std::vector<double>(len)};
  const double dt = grid.dt;
  const double sqrtDt = std::sqrt(dt);
  const double orth = std::sqrt(1.0 - params.phi * params.phi);

  double S = params.S0;
  double v = params.Sigma0;
  out.prices[0] = S;
  out.variances[0] = std::max(v, 0.0);
  for (int k = 0; k < grid.n; ++k) {
    const double z1 = normal(rng);
    const double z2 = params.phi * z1 + orth * normal(rng);
    const double vPlus = std::max(v, 0.0);
    const double volDt = std::sqrt(vPlus) * sqrtDt;
    S *= std::exp((params.mu - 0.5 * vPlus) * dt + volDt * z1);
    v += params.kappa * (params.SigmaBar - vPlus) * dt + params.eta * volDt * z2;
    out.prices[k + 1] = S;
    out.variances[k + 1] = std::max(v, 0.0);
  }
  return out;
}

std::vector<int> simulate_deaths(const MortalityModel& model, int N, const PathGrid& grid, Engine& rng) {
  if (N < 1) throw std::invalid_argument("simulate_deaths: N must be at least 1");
  std::vector<int> alive(static_cast<std::size_t>(grid.n) + 1);
  alive[0] = N;
  for (int k = 0; k < grid.n; ++k) {
    int count = alive[k];
    if (count > 0) {
      const double p = death_probability(model, grid.time(k), grid.time(k + 1));
      std::binomial_distribution<int> deaths(count, std::clamp(p, 0.0, 1.0));
      count -= deaths(rng);
    }
    alive[k + 1] = count;
  }
  return alive;
}

}  // namespace vahedge
