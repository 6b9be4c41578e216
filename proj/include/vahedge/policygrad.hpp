#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "vahedge/delta.hpp"
#include "vahedge/env.hpp"
#include "vahedge/neuralnet.hpp"

namespace vahedge {

struct PpoConfig {
  double learningRate = 0.002;
  int batchSize = 60;
  double clip = 0.2;
  double valueCoef = 0.25;
  double entropyCoef = 0.01;
  long totalTimesteps = 100000;
  double maxGradNorm = 10.0;
  // Multiplies every reward before advantages are formed. 0 selects 1/N^2,
  // i.e. squared P&L per initial policyholder.
  double rewardScale = 0.0;
  // Standardizes the advantages of each batch before they enter L_clip.
  bool normalizeAdvantages = true;
  // Policy spread of freshly initialised networks.
  double initialStd = 0.1;

  void validate() const;
  /// One update per full batch.
  long update_count() const { return totalTimesteps / batchSize; }
  double effective_reward_scale(const EnvConfig& config) const;
};

/// One recorded step. A fragment is a maximal run of consecutive steps from
/// the same episode; `endsFragment` marks its last step, which either ends
/// the episode (`terminal`) or is cut by the batch boundary, in which case
/// `bootstrapValue` holds V(next state) under the collecting weights.
struct BatchStep {
  Observation obs{};
  double action = 0.0;
  double reward = 0.0;
  double oldLogDensity = 0.0;
  double oldValue = 0.0;
  bool terminal = false;
  bool endsFragment = false;
  double bootstrapValue = 0.0;
};

struct Batch {
  std::vector<BatchStep> steps;

  std::size_t size() const { return steps.size(); }
  int fragment_count() const;
};

/// Keeps one environment alive across batches so that consecutive batches
/// continue the same episode.
class RolloutCollector {
 public:
  /// With `chainPrices`, each new contract starts at the final price of the
  /// previous one instead of the configured S0.
  RolloutCollector(EnvConfig config, std::uint64_t seed, bool chainPrices = false);

  Batch collect(const NetworkParams& params, int K);

  long timesteps() const { return timesteps_; }
  int episodes_started() const { return episodes_; }
  const HedgingEnv& env() const { return env_; }
  /// Price the next evaluation or contract would start from.
  double live_price() const;
  /// Elapsed real time across all contracts.
  double live_time() const { return liveTime_; }
  /// Terminal P&Ls of completed episodes, in order.
  const std::vector<double>& completed_pnls() const { return completedPnls_; }

 private:
  void start_episode();

  HedgingEnv env_;
  std::uint64_t seed_;
  bool chainPrices_;
  Engine actionRng_;
  bool active_ = false;
  int episodes_ = 0;
  long timesteps_ = 0;
  double liveTime_ = 0.0;
  std::vector<double> completedPnls_;
};

Batch collect_batch(const EnvConfig& config, const NetworkParams& params, int K, std::uint64_t seed);

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + old value: the value-function target
};

/// Undiscounted returns to the end of each fragment, bootstrapped with the
/// stored value at a cut, minus the stored value of the current state.
AdvantageEstimate compute_advantages(const Batch& batch, double rewardScale = 1.0);

/// Shifts and scales the advantages to zero mean and unit standard deviation.
/// Return targets are left alone. Batches of one, or with constant
/// advantages, are only centred.
void normalize_advantages(AdvantageEstimate& estimate);

/// Adaptive moment estimation, written for gradient ascent.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learningRate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void ascend(NetworkParams& params, const NetworkParams& gradient);
  long steps() const { return steps_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  long steps_ = 0;
  std::vector<double> m_, v_;
};

/// Batch-mean surrogate J = L_clip - c1 L_vf + c2 L_en and its gradient.
struct SurrogateEvaluation {
  double objective = 0.0;
  double clipTerm = 0.0;
  double valueLoss = 0.0;
  double entropyTerm = 0.0;
  double clipFraction = 0.0;
  NetworkParams gradient;
};

SurrogateEvaluation ppo_surrogate(const NetworkParams& params, const Batch& batch, const AdvantageEstimate& adv,
                                  const PpoConfig& cfg);

struct UpdateDiagnostics {
  double meanBootstrappedReward = 0.0;
  double batchEntropy = 0.0;
  double clipFraction = 0.0;
  double valueLoss = 0.0;
  double gradientNorm = 0.0;
  bool gradientClipped = false;
  bool aborted = false;
};

/// One gradient-ascent step on the surrogate. A non-finite gradient leaves
/// the weights untouched and sets `aborted`.
UpdateDiagnostics ppo_update(NetworkParams& params, AdamOptimizer& optimizer, const Batch& batch,
                             const PpoConfig& cfg, double rewardScale);

struct TrainingLogRow {
  int update = 0;
  long timestep = 0;
  double meanBootstrappedReward = 0.0;
  double batchEntropy = 0.0;
  double clipFraction = 0.0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<TrainingLogRow> log;
};

using TrainingCallback = std::function<void(const TrainingLogRow&)>;

/// Starts from `initial` when given, otherwise from freshly initialised weights.
TrainResult train_ppo(const EnvConfig& config, const PpoConfig& cfg, std::uint64_t seed,
                      std::optional<NetworkParams> initial = std::nullopt, const TrainingCallback& onUpdate = {});

/// REINFORCE surrogate of one whole episode, batch-mean form:
/// mean_k [A_k ln phi(a_k) - (A_k + V_old(x_k) - V(x_k))^2].
SurrogateEvaluation reinforce_surrogate(const NetworkParams& params, const Batch& episode,
                                        const AdvantageEstimate& adv);

struct ReinforceConfig {
  double learningRate = 0.002;
  int episodes = 400;
  double maxGradNorm = 10.0;
  double rewardScale = 0.0;
};

struct ReinforceLogRow {
  int episode = 0;
  double terminalPnl = 0.0;
  double episodeReturn = 0.0;
};

struct ReinforceResult {
  NetworkParams params;
  std::vector<ReinforceLogRow> log;
};

ReinforceResult train_reinforce(const EnvConfig& config, const ReinforceConfig& cfg, std::uint64_t seed,
                                std::optional<NetworkParams> initial = std::nullopt);

struct OnlineConfig {
  PpoConfig ppo{0.001, 30, 0.2, 0.25, 0.01, 600, 10.0, 0.0};
  int updates = 20;
  int evalScenarios = 500;
  bool learning = true;
  int threads = 1;
};

/// Rolling evaluation after each online update (row 0 is before any update).
/// Means are over the evaluation scenarios, which start from the live price.
struct OnlineRow {
  int update = 0;
  long timestep = 0;
  double liveTime = 0.0;
  double initialPrice = 0.0;
  double agentMean = 0.0;
  double agentRmse = 0.0;
  double frozenMean = 0.0;
  double incorrectDeltaMean = 0.0;
  double correctDeltaMean = 0.0;
};

/// Continues PPO inside the live evaluation environment. Contracts are
/// chained: each new one starts at the previous one's final price.
std::vector<OnlineRow> online_learning_run(const NetworkParams& trained, const EnvConfig& evalConfig,
                                           const DeltaHedger& incorrectDelta, const DeltaHedger& correctDelta,
                                           const OnlineConfig& cfg, std::uint64_t seed);

}  // namespace vahedge
