#include "vahedge/policygrad.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vahedge/evalharness.hpp"
#include "vahedge/policies.hpp"

namespace vahedge {
namespace {

double gaussian_entropy(double stdDev) { return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(stdDev); }

void clip_gradient(NetworkParams& gradient, double maxNorm, UpdateDiagnostics& diag) {
  diag.gradientNorm = gradient.norm();
  if (maxNorm > 0.0 && diag.gradientNorm > maxNorm) {
    gradient *= maxNorm / diag.gradientNorm;
    diag.gradientClipped = true;
  }
}

}  // namespace

void PpoConfig::validate() const {
  if (!(learningRate > 0.0 && learningRate <= 1.0)) throw std::invalid_argument("PpoConfig: learning rate must lie in (0, 1]");
  if (batchSize < 1) throw std::invalid_argument("PpoConfig: batch size must be at least 1");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("PpoConfig: clip factor must lie in (0, 1)");
  if (valueCoef < 0.0 || valueCoef > 1.0 || entropyCoef < 0.0 || entropyCoef > 1.0)
    throw std::invalid_argument("PpoConfig: loss coefficients must lie in [0, 1]");
  if (totalTimesteps < 0) throw std::invalid_argument("PpoConfig: total timesteps must be non-negative");
  if (rewardScale < 0.0) throw std::invalid_argument("PpoConfig: reward scale must be non-negative");
  if (!(initialStd > kStdFloor)) throw std::invalid_argument("PpoConfig: initial std must exceed the floor");
}

double PpoConfig::effective_reward_scale(const EnvConfig& config) const {
  if (rewardScale > 0.0) return rewardScale;
  const double N = config.terms.N;
  return 1.0 / (N * N);
}

int Batch::fragment_count() const {
  return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const BatchStep& s) { return s.endsFragment; }));
}

RolloutCollector::RolloutCollector(EnvConfig config, std::uint64_t seed, bool chainPrices)
    : env_(std::move(config)),
      seed_(seed),
      chainPrices_(chainPrices),
      actionRng_(make_engine(seed, 0, StreamPurpose::kAction)) {}

double RolloutCollector::live_price() const {
  if (!active_ && episodes_ == 0) return env_.config().market.S0;
  return env_.state().raw.S;
}

void RolloutCollector::start_episode() {
  const std::uint64_t episodeSeed = derive_seed(seed_, static_cast<std::uint64_t>(episodes_), StreamPurpose::kTraining);
  if (chainPrices_ && episodes_ > 0) env_.reset(episodeSeed, env_.state().raw.S);
  else env_.reset(episodeSeed);
  ++episodes_;
  active_ = true;
}

Batch RolloutCollector::collect(const NetworkParams& params, int K) {
  if (K < 1) throw std::invalid_argument("collect: batch size must be at least 1");
  Batch batch;
  batch.steps.reserve(static_cast<std::size_t>(K));
  const double dt = env_.config().grid.dt;
  for (int i = 0; i < K; ++i) {
    if (!active_) start_episode();
    BatchStep step;
    step.obs = env_.state().obs;
    const NetworkOutput out = forward(params, step.obs);
    step.action = sample_action(out.policy, actionRng_);
    step.oldLogDensity = log_density(out.policy, step.action).value;
    step.oldValue = out.value;
    const auto result = env_.step(step.action);
    step.reward = result.reward;
    step.terminal = result.terminal;
    ++timesteps_;
    liveTime_ += dt;
    if (result.terminal) {
      step.endsFragment = true;
      completedPnls_.push_back(env_.state().pnl());
      active_ = false;
    } else if (i + 1 == K) {
      step.endsFragment = true;
      step.bootstrapValue = forward(params, env_.state().obs).value;
    }
    batch.steps.push_back(step);
  }
  return batch;
}

Batch collect_batch(const EnvConfig& config, const NetworkParams& params, int K, std::uint64_t seed) {
  RolloutCollector collector(config, seed);
  return collector.collect(params, K);
}

AdvantageEstimate compute_advantages(const Batch& batch, double rewardScale) {
  const std::size_t n = batch.size();
  AdvantageEstimate out{std::vector<double>(n), std::vector<double>(n)};
  double tail = 0.0;
  for (std::size_t idx = n; idx-- > 0;) {
    const BatchStep& s = batch.steps[idx];
    if (s.endsFragment) tail = s.terminal ? 0.0 : s.bootstrapValue;
    tail += rewardScale * s.reward;
    out.returns[idx] = tail;
    out.advantages[idx] = tail - s.oldValue;
  }
  return out;
}

void normalize_advantages(AdvantageEstimate& estimate) {
  auto& a = estimate.advantages;
  if (a.empty()) return;
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (double x : a) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = a.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
  for (double& x : a) x = (x - mean) * scale;
}

AdamOptimizer::AdamOptimizer(double learningRate, double beta1, double beta2, double epsilon)
    : lr_(learningRate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void AdamOptimizer::ascend(NetworkParams& params, const NetworkParams& gradient) {
  auto theta = params.flatten();
  const auto g = gradient.flatten();
  if (m_.empty()) {
    m_.assign(theta.size(), 0.0);
    v_.assign(theta.size(), 0.0);
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    theta[i] += lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
  params.assign(theta);
}

SurrogateEvaluation ppo_surrogate(const NetworkParams& params, const Batch& batch, const AdvantageEstimate& adv,
                                  const PpoConfig& cfg) {
  const Eigen::Index K = static_cast<Eigen::Index>(batch.size());
  std::vector<Observation> obs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) obs[i] = batch.steps[i].obs;
  const ForwardPass pass(params, stack_observations(obs));

  Eigen::VectorXd dMean(K), dStd(K), dValue(K);
  SurrogateEvaluation eval;
  int clipped = 0;
  const double invK = 1.0 / static_cast<double>(K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const auto& s = batch.steps[static_cast<std::size_t>(j)];
    const double A = adv.advantages[static_cast<std::size_t>(j)];
    const double target = adv.returns[static_cast<std::size_t>(j)];
    const NetworkOutput out = pass.output(j);
    const LogDensity ld = log_density(out.policy, s.action);

    const double ratio = std::exp(ld.value - s.oldLogDensity);
    const double clippedRatio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclippedTerm = ratio * A;
    const double clippedTerm = clippedRatio * A;
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
    // The min picks the clipped branch only when it is strictly smaller; its
    // derivative is then zero because the clip is saturated.
    const double dLogDensity = clippedTerm < unclippedTerm ? 0.0 : A * ratio;
    eval.clipTerm += std::min(unclippedTerm, clippedTerm) * invK;

    const double residual = target - out.value;
    eval.valueLoss += residual * residual * invK;
    eval.entropyTerm += std::log(out.policy.stdDev) * invK;

    dMean(j) = invK * dLogDensity * ld.dMean;
    dStd(j) = invK * (dLogDensity * ld.dStd + cfg.entropyCoef / out.policy.stdDev);
    dValue(j) = invK * 2.0 * cfg.valueCoef * residual;
  }
  eval.objective = eval.clipTerm - cfg.valueCoef * eval.valueLoss + cfg.entropyCoef * eval.entropyTerm;
  eval.clipFraction = static_cast<double>(clipped) * invK;
  eval.gradient = pass.backward(dMean, dStd, dValue);
  return eval;
}

UpdateDiagnostics ppo_update(NetworkParams& params, AdamOptimizer& optimizer, const Batch& batch,
                             const PpoConfig& cfg, double rewardScale) {
  AdvantageEstimate adv = compute_advantages(batch, rewardScale);
  if (cfg.normalizeAdvantages) normalize_advantages(adv);
  SurrogateEvaluation eval = ppo_surrogate(params, batch, adv, cfg);

  UpdateDiagnostics diag;
  double entropy = 0.0;
  for (const auto& s : batch.steps) entropy += gaussian_entropy(forward(params, s.obs).policy.stdDev);
  diag.batchEntropy = entropy / static_cast<double>(batch.size());
  double meanReturn = 0.0;
  for (double r : adv.returns) meanReturn += r;
  diag.meanBootstrappedReward = meanReturn / static_cast<double>(batch.size());
  diag.clipFraction = eval.clipFraction;
  diag.valueLoss = eval.valueLoss;

  if (!eval.gradient.all_finite()) {
    diag.aborted = true;
    return diag;
  }
  clip_gradient(eval.gradient, cfg.maxGradNorm, diag);
  optimizer.ascend(params, eval.gradient);
  return diag;
}

TrainResult train_ppo(const EnvConfig& config, const PpoConfig& cfg, std::uint64_t seed,
                      std::optional<NetworkParams> initial, const TrainingCallback& onUpdate) {
  cfg.validate();
  TrainResult result{initial ? std::move(*initial) : NetworkParams::initialize(NetworkShape{}, seed, 0.01, cfg.initialStd),
                     {}};
  RolloutCollector collector(config, seed);
  AdamOptimizer optimizer(cfg.learningRate);
  const double scale = cfg.effective_reward_scale(config);
  const long updates = cfg.update_count();
  result.log.reserve(static_cast<std::size_t>(updates));
  for (long u = 0; u < updates; ++u) {
    const Batch batch = collector.collect(result.params, cfg.batchSize);
    const UpdateDiagnostics diag = ppo_update(result.params, optimizer, batch, cfg, scale);
    TrainingLogRow row{static_cast<int>(u + 1), collector.timesteps(), diag.meanBootstrappedReward, diag.batchEntropy,
                       diag.clipFraction};
    result.log.push_back(row);
    if (onUpdate) onUpdate(row);
  }
  return result;
}

SurrogateEvaluation reinforce_surrogate(const NetworkParams& params, const Batch& episode,
                                        const AdvantageEstimate& adv) {
  const Eigen::Index K = static_cast<Eigen::Index>(episode.size());
  std::vector<Observation> obs(episode.size());
  for (std::size_t i = 0; i < episode.size(); ++i) obs[i] = episode.steps[i].obs;
  const ForwardPass pass(params, stack_observations(obs));

  Eigen::VectorXd dMean(K), dStd(K), dValue(K);
  SurrogateEvaluation eval;
  const double invK = 1.0 / static_cast<double>(K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const auto& s = episode.steps[static_cast<std::size_t>(j)];
    const double A = adv.advantages[static_cast<std::size_t>(j)];
    const NetworkOutput out = pass.output(j);
    const LogDensity ld = log_density(out.policy, s.action);
    const double residual = A + s.oldValue - out.value;
    eval.clipTerm += A * ld.value * invK;
    eval.valueLoss += residual * residual * invK;
    dMean(j) = invK * A * ld.dMean;
    dStd(j) = invK * A * ld.dStd;
    dValue(j) = invK * 2.0 * residual;
  }
  eval.objective = eval.clipTerm - eval.valueLoss;
  eval.gradient = pass.backward(dMean, dStd, dValue);
  return eval;
}

ReinforceResult train_reinforce(const EnvConfig& config, const ReinforceConfig& cfg, std::uint64_t seed,
                                std::optional<NetworkParams> initial) {
  if (cfg.episodes < 0 || !(cfg.learningRate > 0.0)) throw std::invalid_argument("train_reinforce: invalid config");
  ReinforceResult result{initial ? std::move(*initial) : NetworkParams::initialize(NetworkShape{}, seed), {}};
  AdamOptimizer optimizer(cfg.learningRate);
  PpoConfig scaleCfg;
  scaleCfg.rewardScale = cfg.rewardScale;
  const double scale = scaleCfg.effective_reward_scale(config);
  RolloutCollector collector(config, seed);
  for (int e = 0; e < cfg.episodes; ++e) {
    // One whole episode: collect until the terminal step.
    Batch episode;
    do {
      Batch step = collector.collect(result.params, 1);
      episode.steps.push_back(step.steps.front());
    } while (!episode.steps.back().terminal);
    const AdvantageEstimate adv = compute_advantages(episode, scale);
    SurrogateEvaluation eval = reinforce_surrogate(result.params, episode, adv);
    if (eval.gradient.all_finite()) {
      UpdateDiagnostics diag;
      clip_gradient(eval.gradient, cfg.maxGradNorm, diag);
      optimizer.ascend(result.params, eval.gradient);
    }
    double episodeReturn = 0.0;
    for (const auto& s : episode.steps) episodeReturn += s.reward;
    result.log.push_back({e + 1, collector.completed_pnls().back(), episodeReturn});
  }
  return result;
}

std::vector<OnlineRow> online_learning_run(const NetworkParams& trained, const EnvConfig& evalConfig,
                                           const DeltaHedger& incorrectDelta, const DeltaHedger& correctDelta,
                                           const OnlineConfig& cfg, std::uint64_t seed) {
  cfg.ppo.validate();
  if (cfg.updates < 0 || cfg.evalScenarios < 1) throw std::invalid_argument("online_learning_run: invalid config");
  NetworkParams params = trained;
  AdamOptimizer optimizer(cfg.ppo.learningRate);
  RolloutCollector live(evalConfig, derive_seed(seed, 0, StreamPurpose::kOnline), true);
  const double scale = cfg.ppo.effective_reward_scale(evalConfig);

  const Policy frozen = make_network_policy(trained);
  const Policy incorrect = make_delta_policy(incorrectDelta);
  const Policy correct = make_delta_policy(correctDelta);

  std::vector<OnlineRow> rows;
  for (int u = 0; u <= cfg.updates; ++u) {
    if (u > 0) {
      const Batch batch = live.collect(params, cfg.ppo.batchSize);
      if (cfg.learning) ppo_update(params, optimizer, batch, cfg.ppo, scale);
    }
    EvalOptions options;
    options.threads = cfg.threads;
    options.initialPrice = live.live_price();
    const std::uint64_t evalSeed = derive_seed(seed, static_cast<std::uint64_t>(u), StreamPurpose::kEvaluation);

    OnlineRow row;
    row.update = u;
    row.timestep = live.timesteps();
    row.liveTime = live.live_time();
    row.initialPrice = *options.initialPrice;
    const EvalReport agent = evaluate_policy(make_network_policy(params), evalConfig, cfg.evalScenarios, evalSeed, options);
    row.agentMean = agent.stats.mean;
    row.agentRmse = agent.stats.rmse;
    row.frozenMean = evaluate_policy(frozen, evalConfig, cfg.evalScenarios, evalSeed, options).stats.mean;
    row.incorrectDeltaMean = evaluate_policy(incorrect, evalConfig, cfg.evalScenarios, evalSeed, options).stats.mean;
    row.correctDeltaMean = evaluate_policy(correct, evalConfig, cfg.evalScenarios, evalSeed, options).stats.mean;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace vahedge
