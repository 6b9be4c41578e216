#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "vahedge/liability.hpp"
#include "vahedge/market.hpp"
#include "vahedge/rng.hpp"

namespace vahedge {

inline constexpr std::size_t kObservationSize = 6;
using Observation = std::array<double, kObservationSize>;

/// Everything that defines one hedging environment. The market evolves under
/// the physical Black-Scholes law in `market`; the same mortality law drives
/// both deaths and the liability valuation.
struct EnvConfig {
  BsParams market;
  MortalityModel mortality = ConstantForce{0.02};
  ContractTerms terms;
  PathGrid grid;
  // Actions are shares per initial policyholder; the environment holds action * N shares.
  bool actionPerInitialPolicyholder = true;
  // Actions are clamped to [-actionLimit, actionLimit] before they are executed.
  // Zero leaves them unbounded.
  double actionLimit = 0.0;

  void validate() const;
  /// Converts a cohort-level share count into the environment's action unit.
  double action_from_shares(double shares) const;
  double shares_from_action(double action) const;
};

struct RawState {
  int k = 0;
  double S = 0.0;
  double F = 0.0;
  double P = 0.0;
  int survivors = 0;
  int deathsThisStep = 0;
};

struct EpisodeState {
  RawState raw;
  Observation obs{};
  double netLiability = 0.0;
  bool terminal = false;

  double pnl() const { return raw.P - netLiability; }
};

/// (F/G, S/G, P/N, survivors/N, deaths/N, T - t_k)
Observation make_observation(const RawState& raw, const EnvConfig& config);

struct StepResult {
  const EpisodeState& state;
  double reward;
  bool terminal;
};

/// Discrete daily hedging of the net liability. The reward
/// (P_k - L_k)^2 - (P_{k+1} - L_{k+1})^2 telescopes to minus the squared
/// terminal P&L over an episode.
class HedgingEnv {
 public:
  explicit HedgingEnv(EnvConfig config);

  /// Starts a new contract. Market and mortality randomness come from
  /// separate streams of `seed`, so the scenario does not depend on actions.
  const EpisodeState& reset(std::uint64_t seed);
  /// Same as reset(seed) with a custom initial risky-asset price.
  const EpisodeState& reset(std::uint64_t seed, double initialPrice);

  /// Advances one hedging period holding the hedge implied by `action`.
  StepResult step(double action);

  const EpisodeState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  double time() const { return config_.grid.time(state_.raw.k); }

 private:
  double liability(int k, double F, int survivors) const;

  EnvConfig config_;
  EpisodeState state_;
  Engine marketRng_;
  Engine mortalityRng_;
  bool started_ = false;
};

struct Transition {
  Observation state{};
  double action = 0.0;
  double reward = 0.0;
  Observation nextState{};
  bool terminal = false;
};

/// Maps the current state to an action in the environment's unit.
using Policy = std::function<double(const EpisodeState&, const HedgingEnv&)>;

struct EpisodeResult {
  std::vector<Transition> transitions;
  double terminalPnl = 0.0;
};

EpisodeResult run_episode(const EnvConfig& config, const Policy& policy, std::uint64_t seed);

/// Terminal P&L only, without recording transitions.
double run_episode_pnl(const EnvConfig& config, const Policy& policy, std::uint64_t seed,
                       std::optional<double> initialPrice = std::nullopt);

}  // namespace vahedge
