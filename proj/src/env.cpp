#include "vahedge/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vahedge {

void EnvConfig::validate() const {
  market.validate();
  vahedge::validate(mortality);
  terms.validate();
  grid.validate();
  if (std::abs(grid.horizon() - terms.T) > 1e-9 * std::max(1.0, terms.T))
    throw std::invalid_argument("EnvConfig: grid horizon must equal the contract term T");
  if (const auto* ifm = std::get_if<UniformLifetime>(&mortality); ifm && terms.T >= ifm->bUp)
    throw std::invalid_argument("EnvConfig: uniform lifetime requires T < bUp");
  if (!(actionLimit >= 0.0)) throw std::invalid_argument("EnvConfig: action limit must be nonnegative");
}

double EnvConfig::action_from_shares(double shares) const {
  return actionPerInitialPolicyholder ? shares / terms.N : shares;
}

double EnvConfig::shares_from_action(double action) const {
  return actionPerInitialPolicyholder ? action * terms.N : action;
}

Observation make_observation(const RawState& raw, const EnvConfig& config) {
  const double N = config.terms.N;
  return {raw.F / config.terms.G,
          raw.S / config.terms.G,
          raw.P / N,
          raw.survivors / N,
          raw.deathsThisStep / N,
          raw.k >= config.grid.n ? 0.0 : std::max(config.terms.T - config.grid.time(raw.k), 0.0)};
}

HedgingEnv::HedgingEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

double HedgingEnv::liability(int k, double F, int survivors) const {
  const double t = (k == config_.grid.n) ? config_.terms.T : config_.grid.time(k);
  return bs_net_liability(t, F, survivors, config_.terms, config_.market.r, config_.market.sigma,
                          config_.mortality)
      .net;
}

const EpisodeState& HedgingEnv::reset(std::uint64_t seed) { return reset(seed, config_.market.S0); }

const EpisodeState& HedgingEnv::reset(std::uint64_t seed, double initialPrice) {
  if (!(initialPrice > 0.0)) throw std::invalid_argument("HedgingEnv::reset: initial price must be positive");
  marketRng_ = make_engine(seed, 0, StreamPurpose::kMarket);
  mortalityRng_ = make_engine(seed, 0, StreamPurpose::kMortality);
  RawState raw;
  raw.k = 0;
  raw.S = initialPrice;
  raw.F = config_.terms.account_value(0.0, initialPrice);
  raw.P = 0.0;
  raw.survivors = config_.terms.N;
  raw.deathsThisStep = 0;
  state_.raw = raw;
  state_.obs = make_observation(raw, config_);
  state_.netLiability = liability(0, raw.F, raw.survivors);
  state_.terminal = false;
  started_ = true;
  return state_;
}

StepResult HedgingEnv::step(double action) {
  if (!started_) throw std::logic_error("HedgingEnv::step: call reset first");
  if (state_.terminal) throw std::logic_error("HedgingEnv::step: episode already terminated");

  const auto& grid = config_.grid;
  const auto& terms = config_.terms;
  const RawState before = state_.raw;
  const double pnlBefore = state_.pnl();
  if (config_.actionLimit > 0.0) action = std::clamp(action, -config_.actionLimit, config_.actionLimit);
  const double hedge = before.survivors > 0 ? config_.shares_from_action(action) : 0.0;

  const double t0 = grid.time(before.k);
  const double t1 = (before.k + 1 == grid.n) ? terms.T : grid.time(before.k + 1);
  const double dt = t1 - t0;

  std::normal_distribution<double> normal;
  const double S1 = bs_step(before.S, config_.market.mu, config_.market.sigma, dt, normal(marketRng_));

  int deaths = 0;
  if (before.survivors > 0) {
    std::binomial_distribution<int> dying(before.survivors, death_probability(config_.mortality, t0, t1));
    deaths = dying(mortalityRng_);
  }

  const double growth = std::exp(config_.market.r * dt);
  const double riderCharges = terms.me * before.F * before.survivors * dt * growth;

  RawState after;
  after.k = before.k + 1;
  after.S = S1;
  after.F = terms.account_value(t1, S1);
  after.P = (before.P - hedge * before.S) * growth + hedge * S1 + riderCharges;
  after.survivors = before.survivors - deaths;
  after.deathsThisStep = deaths;

  state_.raw = after;
  state_.obs = make_observation(after, config_);
  state_.netLiability = liability(after.k, after.F, after.survivors);
  state_.terminal = after.survivors == 0 || after.k == grid.n;

  const double pnlAfter = state_.pnl();
  const double reward = pnlBefore * pnlBefore - pnlAfter * pnlAfter;
  return {state_, reward, state_.terminal};
}

EpisodeResult run_episode(const EnvConfig& config, const Policy& policy, std::uint64_t seed) {
  HedgingEnv env(config);
  EpisodeResult result;
  result.transitions.reserve(static_cast<std::size_t>(config.grid.n));
  env.reset(seed);
  while (!env.state().terminal) {
    Transition tr;
    tr.state = env.state().obs;
    tr.action = policy(env.state(), env);
    const auto outcome = env.step(tr.action);
    tr.reward = outcome.reward;
    tr.nextState = outcome.state.obs;
    tr.terminal = outcome.terminal;
    result.transitions.push_back(tr);
  }
  result.terminalPnl = env.state().pnl();
  return result;
}

double run_episode_pnl(const EnvConfig& config, const Policy& policy, std::uint64_t seed,
                       std::optional<double> initialPrice) {
  HedgingEnv env(config);
  if (initialPrice) env.reset(seed, *initialPrice); else env.reset(seed);
  while (!env.state().terminal) env.step(policy(env.state(), env));
  return env.state().pnl();
}

}  // namespace vahedge
