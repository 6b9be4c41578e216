#include "vahedge/delta.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vahedge {
namespace {

double put_fund_weight(double tau, double F, const ContractTerms& terms, double r, double sigma) {
  const double volRoot = sigma * std::sqrt(tau);
  const double d1 = (std::log(F / terms.G) + (r - terms.m + 0.5 * sigma * sigma) * tau) / volRoot;
  return std::exp(-terms.m * tau) * normal_cdf(-d1);
}

double ifm_rider_integral(double tau, double m, double remaining) {
  const double decayed = -std::expm1(-m * tau);
  return decayed / m - (decayed - m * tau * std::exp(-m * tau)) / (m * m * remaining);
}

}  // namespace

double cfm_bs_delta(double t, double S, int survivors, const ContractTerms& terms, double r, double sigma,
                    double nu) {
  if (survivors <= 0 || t >= terms.T) return 0.0;
  const double tau = terms.T - t;
  const double dFdS = terms.rho * std::exp(-terms.m * t);
  const double F = S * dFdS;
  const double decay = terms.m + nu;
  const double dLdF = -std::exp(-nu * tau) * put_fund_weight(tau, F, terms, r, sigma) -
                      terms.me * (-std::expm1(-decay * tau)) / decay;
  return dLdF * dFdS * survivors;
}

double ifm_bs_delta(double t, double S, int survivors, const ContractTerms& terms, double r, double sigma,
                    double bUp) {
  if (terms.T >= bUp) throw std::domain_error("ifm_bs_delta: requires T < bUp");
  if (survivors <= 0 || t >= terms.T) return 0.0;
  const double tau = terms.T - t;
  const double remaining = bUp - t;
  const double dFdS = terms.rho * std::exp(-terms.m * t);
  const double F = S * dFdS;
  const double dLdF = -((bUp - terms.T) / remaining) * put_fund_weight(tau, F, terms, r, sigma) -
                      terms.me * ifm_rider_integral(tau, terms.m, remaining);
  return dLdF * dFdS * survivors;
}

double bs_gross_delta(double t, double S, int survivors, const ContractTerms& terms, double r, double sigma,
                      const MortalityModel& mortality) {
  if (survivors <= 0 || t >= terms.T) return 0.0;
  const double tau = terms.T - t;
  const double dFdS = terms.rho * std::exp(-terms.m * t);
  return -survival_probability(mortality, t, terms.T) * put_fund_weight(tau, S * dFdS, terms, r, sigma) * dFdS *
         survivors;
}

MonteCarloDelta heston_mc_delta(double t, double S, double Sigma, int survivors, const ContractTerms& terms,
                                const HestonParams& heston, const MortalityModel& mortality, std::size_t paths,
                                std::uint64_t seed, double bump) {
  if (survivors <= 0 || t >= terms.T) return {};
  if (paths < 2) throw std::invalid_argument("heston_mc_delta: need at least two paths");
  HestonParams model = heston;
  model.Sigma0 = Sigma;
  const double F = terms.account_value(t, S);
  const auto up = simulate_liability_paths(t, F * (1.0 + bump), survivors, terms, model, mortality, paths, seed);
  const auto down = simulate_liability_paths(t, F * (1.0 - bump), survivors, terms, model, mortality, paths, seed);

  const double scale = 1.0 / (2.0 * bump * S);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    const double diff = ((up[i].gross - up[i].rider) - (down[i].gross - down[i].rider)) * scale;
    sum += diff;
    sum2 += diff * diff;
  }
  const double n = static_cast<double>(paths);
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(sum2 - n * mean * mean, 0.0) / (n - 1.0) / n)};
}

HestonDeltaSurface::HestonDeltaSurface(const ContractTerms& terms, const HestonParams& heston,
                                       const MortalityModel& mortality, const PathGrid& grid, double Sigma,
                                       std::size_t paths, std::uint64_t seed, double bump)
    : terms_(terms), grid_(grid), bump_(bump), dates_(static_cast<std::size_t>(grid.n)) {
  if (paths < 2) throw std::invalid_argument("HestonDeltaSurface: need at least two paths");
  const double r = heston.r;
  const double m = terms.m;
  const double orth = std::sqrt(1.0 - heston.phi * heston.phi);
  const double h = grid.dt;
  const double sqrtH = std::sqrt(h);
  std::normal_distribution<double> normal;

  for (int k = 0; k < grid.n; ++k) {
    const double t = grid.time(k);
    const int steps = grid.n - k;
    std::vector<double> weight(static_cast<std::size_t>(steps));
    for (int j = 0; j < steps; ++j) weight[j] = std::exp(-r * j * h) * survival_probability(mortality, t, t + j * h) * h;

    Engine rng = make_engine(seed, static_cast<std::uint64_t>(k), StreamPurpose::kDeltaSurface);
    DateSample& date = dates_[k];
    date.sortedRatio.resize(paths);
    double riderSum = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
      double ratio = 1.0;
      double variance = Sigma;
      for (int j = 0; j < steps; ++j) {
        riderSum += weight[j] * ratio;
        const double z1 = normal(rng);
        const double z2 = heston.phi * z1 + orth * normal(rng);
        const double vPlus = std::max(variance, 0.0);
        const double volH = std::sqrt(vPlus) * sqrtH;
        ratio *= std::exp((r - m - 0.5 * vPlus) * h + volH * z1);
        variance += heston.kappa * (heston.SigmaBar - vPlus) * h + heston.eta * volH * z2;
      }
      date.sortedRatio[p] = ratio;
    }
    std::sort(date.sortedRatio.begin(), date.sortedRatio.end());
    date.prefixRatio.resize(paths + 1);
    date.prefixRatio[0] = 0.0;
    for (std::size_t p = 0; p < paths; ++p) date.prefixRatio[p + 1] = date.prefixRatio[p] + date.sortedRatio[p];
    date.riderFactor = riderSum / static_cast<double>(paths);
    date.grossFactor = std::exp(-r * steps * h) * survival_probability(mortality, t, terms.T);
  }
}

double HestonDeltaSurface::unit_liability(int k, double F) const {
  const DateSample& date = dates_.at(static_cast<std::size_t>(k));
  const double n = static_cast<double>(date.sortedRatio.size());
  // (G - F R)_+ > 0  <=>  R < G / F
  const auto end = std::lower_bound(date.sortedRatio.begin(), date.sortedRatio.end(), terms_.G / F);
  const auto count = static_cast<std::size_t>(end - date.sortedRatio.begin());
  const double putMean = (terms_.G * static_cast<double>(count) - F * date.prefixRatio[count]) / n;
  return date.grossFactor * putMean - terms_.me * F * date.riderFactor;
}

double HestonDeltaSurface::delta(int k, double S, int survivors) const {
  if (survivors <= 0 || k >= grid_.n) return 0.0;
  const double F = terms_.account_value(grid_.time(k), S);
  const double diff = unit_liability(k, F * (1.0 + bump_)) - unit_liability(k, F * (1.0 - bump_));
  return diff / (2.0 * bump_ * S) * survivors;
}

DeltaHedger DeltaHedger::cfm_bs(double r, double sigma, double nu) {
  DeltaHedger h;
  h.kind_ = Kind::kCfmBs;
  h.r_ = r;
  h.sigma_ = sigma;
  h.nu_ = nu;
  return h;
}

DeltaHedger DeltaHedger::ifm_bs(double r, double sigma, double bUp) {
  DeltaHedger h;
  h.kind_ = Kind::kIfmBs;
  h.r_ = r;
  h.sigma_ = sigma;
  h.bUp_ = bUp;
  return h;
}

DeltaHedger DeltaHedger::heston(const HestonParams& heston, const MortalityModel& mortality,
                                const ContractTerms& terms, const PathGrid& grid, std::size_t paths,
                                std::uint64_t seed) {
  heston.validate();
  validate(mortality);
  DeltaHedger h;
  h.kind_ = std::holds_alternative<ConstantForce>(mortality) ? Kind::kCfmHeston : Kind::kIfmHeston;
  h.surface_ =
      std::make_shared<const HestonDeltaSurface>(terms, heston, mortality, grid, heston.SigmaBar, paths, seed);
  return h;
}

std::string_view DeltaHedger::name() const {
  switch (kind_) {
    case Kind::kCfmBs: return "cfm-bs";
    case Kind::kIfmBs: return "ifm-bs";
    case Kind::kCfmHeston: return "cfm-heston";
    case Kind::kIfmHeston: return "ifm-heston";
  }
  return "unknown";
}

double DeltaHedger::shares(int k, double t, double S, int survivors, const ContractTerms& terms) const {
  switch (kind_) {
    case Kind::kCfmBs: return cfm_bs_delta(t, S, survivors, terms, r_, sigma_, nu_);
    case Kind::kIfmBs: return ifm_bs_delta(t, S, survivors, terms, r_, sigma_, bUp_);
    case Kind::kCfmHeston:
    case Kind::kIfmHeston: return surface_->delta(k, S, survivors);
  }
  return 0.0;
}

}  // namespace vahedge
