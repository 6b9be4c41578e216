#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "vahedge/config.hpp"
#include "vahedge/evalharness.hpp"
#include "vahedge/liability.hpp"
#include "vahedge/neuralnet.hpp"
#include "vahedge/policies.hpp"
#include "vahedge/policygrad.hpp"

namespace fs = std::filesystem;
using namespace vahedge;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string weights;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string hedger = "rl";
  std::optional<int> scenarios;
  bool noLearning = false;
};

const std::vector<std::string> kHedgers{"rl", "cfm-bs", "ifm-bs", "cfm-heston", "ifm-heston", "zero"};

RunConfig load(const Options& opt) {
  RunConfig cfg = load_run_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.threads) cfg.threads = *opt.threads;
  if (opt.scenarios) {
    if (*opt.scenarios < 1) throw UsageError("--scenarios must be at least 1");
    cfg.evaluation.scenarios = *opt.scenarios;
  }
  return cfg;
}

fs::path output_dir(const Options& opt, const RunConfig& cfg) {
  const fs::path dir = opt.out.empty() ? cfg.output.dir : fs::path(opt.out);
  if (!fs::is_directory(dir)) throw OutputError("output directory does not exist: " + dir.string());
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw OutputError("cannot write " + path.string());
  os << std::setprecision(10);
  return os;
}

NetworkParams require_weights(const Options& opt) {
  if (opt.weights.empty()) throw UsageError("--weights is required for the rl hedger");
  return load_params(opt.weights, NetworkShape{});
}

DeltaHedger make_hedger(const std::string& name, const RunConfig& cfg, const EnvConfig& env) {
  const auto& h = cfg.hedgers;
  if (name == "cfm-bs") return DeltaHedger::cfm_bs(env.market.r, h.sigma, h.nu);
  if (name == "ifm-bs") return DeltaHedger::ifm_bs(env.market.r, h.sigma, h.ifm.bUp);
  HestonParams heston = h.heston;
  heston.r = env.market.r;
  if (name == "cfm-heston")
    return DeltaHedger::heston(heston, ConstantForce{h.nu}, env.terms, env.grid, h.hestonPaths,
                               derive_seed(cfg.seed, 0, StreamPurpose::kDeltaSurface));
  if (name == "ifm-heston")
    return DeltaHedger::heston(heston, h.ifm, env.terms, env.grid, h.hestonPaths,
                               derive_seed(cfg.seed, 1, StreamPurpose::kDeltaSurface));
  throw UsageError("unknown hedger '" + name + "'");
}

Policy make_policy(const std::string& name, const Options& opt, const RunConfig& cfg, const EnvConfig& env) {
  if (name == "rl") return make_network_policy(require_weights(opt));
  if (name == "zero") return make_zero_policy();
  return make_delta_policy(make_hedger(name, cfg, env));
}

void print_stats(const std::string& label, const PnlStatistics& s) {
  std::printf("%-11s mean %8.4f  median %8.4f  sd %8.4f  VaR90 %8.4f  VaR95 %8.4f  TVaR90 %8.4f  TVaR95 %8.4f  RMSE %8.4f\n",
              label.c_str(), s.mean, s.median, s.stdDev, s.var90, s.var95, s.tvar90, s.tvar95, s.rmse);
}

std::uint64_t eval_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 0, StreamPurpose::kEvaluation); }

int cmd_calibrate(const Options& opt) {
  RunConfig cfg = load(opt);
  const auto& env = cfg.training;
  const double me = calibrate_rider_charge(env.terms, env.market.S0, env.market.r, env.market.sigma, env.mortality);
  ContractTerms terms = env.terms;
  terms.me = me;
  const double l0 = bs_net_liability(0.0, terms.account_value(0.0, env.market.S0), terms.N, terms, env.market.r,
                                     env.market.sigma, env.mortality)
                        .net;
  std::printf("me = %.10f\nL0 = %.3e\n", me, l0);
  if (!opt.out.empty()) {
    std::ifstream in(opt.config);
    std::stringstream text;
    text << in.rdbuf();
    std::ostringstream value;
    value << std::setprecision(10) << me;
    const std::regex line(R"((^|\n)([ \t]*me[ \t]*=)[^\n]*)");
    const std::string updated = std::regex_replace(text.str(), line, "$1$2 " + value.str());
    auto os = open_output(opt.out);
    os << updated;
  }
  return 0;
}

int cmd_train(const Options& opt) {
  RunConfig cfg = load(opt);
  const fs::path dir = output_dir(opt, cfg);
  std::optional<NetworkParams> initial;
  if (!opt.weights.empty()) initial = load_params(opt.weights, NetworkShape{});

  auto log = open_output(dir / "training_log.csv");
  log << "update,timestep,mean_bootstrapped_reward,batch_entropy,clip_fraction\n";
  const TrainResult result =
      train_ppo(cfg.training, cfg.trainer, derive_seed(cfg.seed, 0, StreamPurpose::kTraining), std::move(initial),
                [&log](const TrainingLogRow& r) {
                  log << r.update << ',' << r.timestep << ',' << r.meanBootstrappedReward << ',' << r.batchEntropy
                      << ',' << r.clipFraction << '\n';
                });
  save_params(result.params, dir / "weights.bin");
  std::printf("trained %zu updates; weights written to %s\n", result.log.size(), (dir / "weights.bin").c_str());
  return 0;
}

int cmd_evaluate(const Options& opt) {
  RunConfig cfg = load(opt);
  const fs::path dir = output_dir(opt, cfg);
  const EnvConfig env = cfg.evaluation_env();
  const Policy policy = make_policy(opt.hedger, opt, cfg, env);
  EvalOptions options;
  options.threads = cfg.thread_count();
  const EvalReport report = evaluate_policy(policy, env, cfg.evaluation.scenarios, eval_seed(cfg), options);
  auto pnl = open_output(dir / ("pnl_" + opt.hedger + ".csv"));
  write_pnl_csv(pnl, report.pnls);
  auto stats = open_output(dir / ("stats_" + opt.hedger + ".csv"));
  write_stats_header(stats, true);
  write_stats_row(stats, opt.hedger, report.stats);
  print_stats(opt.hedger, report.stats);
  return 0;
}

int cmd_compare(const Options& opt) {
  RunConfig cfg = load(opt);
  const fs::path dir = output_dir(opt, cfg);
  const EnvConfig env = cfg.evaluation_env();
  EvalOptions options;
  options.threads = cfg.thread_count();

  std::vector<std::pair<std::string, EvalReport>> reports;
  for (const std::string name : {"rl", "cfm-bs", "ifm-bs", "cfm-heston", "ifm-heston"}) {
    const Policy policy = make_policy(name, opt, cfg, env);
    reports.emplace_back(name, evaluate_policy(policy, env, cfg.evaluation.scenarios, eval_seed(cfg), options));
    print_stats(name, reports.back().second.stats);
  }

  auto stats = open_output(dir / "stats.csv");
  write_stats_header(stats, true);
  for (const auto& [name, report] : reports) write_stats_row(stats, name, report.stats);

  std::vector<std::pair<std::string, PairwiseReport>> pairs;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    pairs.emplace_back(reports[i].first, pairwise_report(reports[0].second.pnls, reports[i].second.pnls));
    const auto& p = pairs.back().second;
    std::printf("rl - %-11s mean %8.4f  median %8.4f  sd %8.4f  P(>=0) %6.2f%%\n", reports[i].first.c_str(), p.mean,
                p.median, p.stdDev, 100.0 * p.probNonNegative);
  }
  auto pairwise = open_output(dir / "pairwise.csv");
  write_pairwise_csv(pairwise, pairs);

  for (const auto& [name, report] : reports) {
    auto pnl = open_output(dir / ("pnl_" + name + ".csv"));
    write_pnl_csv(pnl, report.pnls);
    auto ecdf = open_output(dir / ("ecdf_" + name + ".csv"));
    write_ecdf_csv(ecdf, report.pnls);
  }
  return 0;
}

int cmd_online(const Options& opt) {
  RunConfig cfg = load(opt);
  const fs::path dir = output_dir(opt, cfg);
  const NetworkParams trained = require_weights(opt);
  const EnvConfig live = cfg.online_env();
  const DeltaHedger incorrect = DeltaHedger::cfm_bs(cfg.training.market.r, cfg.hedgers.sigma, cfg.hedgers.nu);
  const DeltaHedger correct = DeltaHedger::cfm_bs(live.market.r, cfg.online.sigma, cfg.online.nu);

  OnlineConfig online = cfg.online.learner;
  online.learning = !opt.noLearning;
  online.threads = cfg.thread_count();
  const auto rows = online_learning_run(trained, live, incorrect, correct, online, cfg.seed);

  auto os = open_output(dir / (opt.noLearning ? "online_frozen.csv" : "online.csv"));
  os << "update,timestep,live_time,initial_price,agent_mean,agent_rmse,frozen_mean,incorrect_delta_mean,"
        "correct_delta_mean\n";
  for (const auto& r : rows) {
    os << r.update << ',' << r.timestep << ',' << r.liveTime << ',' << r.initialPrice << ',' << r.agentMean << ','
       << r.agentRmse << ',' << r.frozenMean << ',' << r.incorrectDeltaMean << ',' << r.correctDeltaMean << '\n';
    std::printf("update %2d  agent %8.4f  incorrect delta %8.4f  correct delta %8.4f\n", r.update, r.agentMean,
                r.incorrectDeltaMean, r.correctDeltaMean);
  }
  return 0;
}

int cmd_sensitivity(const Options& opt) {
  RunConfig cfg = load(opt);
  const fs::path dir = output_dir(opt, cfg);
  SensitivityOptions options;
  options.evaluationPolicyholders = cfg.evaluation.policyholders;
  options.scenarios = cfg.evaluation.scenarios;
  options.threads = cfg.thread_count();
  const auto rows = sensitivity_sweep(cfg.training, cfg.sensitivity, cfg.trainer, cfg.seed, options);

  auto os = open_output(dir / "sensitivity.csv");
  os << "override,fee_rate,rider_charge,hedger,mean,median,std_dev,var90,var95,tvar90,tvar95,rmse\n";
  for (const auto& row : rows) {
    for (const auto& [name, report] : {std::pair{"rl", &row.agent}, std::pair{"cfm-bs", &row.delta}}) {
      const auto& s = report->stats;
      os << row.label << ',' << row.feeRate << ',' << row.riderCharge << ',' << name << ',' << s.mean << ','
         << s.median << ',' << s.stdDev << ',' << s.var90 << ',' << s.var95 << ',' << s.tvar90 << ',' << s.tvar95
         << ',' << s.rmse << '\n';
    }
    std::printf("%-10s m %.5f me %.5f  rl RMSE %7.4f  delta RMSE %7.4f\n", row.label.c_str(), row.feeRate,
                row.riderCharge, row.agent.stats.rmse, row.delta.stats.rmse);
  }
  return 0;
}

void fail(const char* kind, const std::string& message) {
  std::string line = message;
  for (char& c : line)
    if (c == '\n') c = ' ';
  std::fprintf(stderr, "error: %s: %s\n", kind, line.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable annuity hedging lab"};
  app.require_subcommand(1);
  Options opt;

  const auto common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory (calibrate: updated config file)");
    sub->add_option("--seed", opt.seed, "Override the configured seed");
    sub->add_option("--threads", opt.threads, "Evaluation threads")->check(CLI::PositiveNumber);
  };

  auto* calibrate = app.add_subcommand("calibrate", "Solve the rider-charge rate from L0 = 0");
  common(calibrate);
  auto* train = app.add_subcommand("train", "Train the PPO agent");
  common(train);
  train->add_option("--weights", opt.weights, "Resume from these weights")->check(CLI::ExistingFile);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate one hedger");
  common(evaluate);
  evaluate->add_option("--weights", opt.weights, "Agent weights")->check(CLI::ExistingFile);
  evaluate->add_option("--hedger", opt.hedger, "Hedging strategy")->check(CLI::IsMember(kHedgers));
  evaluate->add_option("--scenarios", opt.scenarios, "Number of evaluation scenarios");
  auto* compare = app.add_subcommand("compare", "Evaluate the agent against every Delta hedger");
  common(compare);
  compare->add_option("--weights", opt.weights, "Agent weights")->required()->check(CLI::ExistingFile);
  compare->add_option("--scenarios", opt.scenarios, "Number of evaluation scenarios");
  auto* online = app.add_subcommand("online", "Online learning in the live environment");
  common(online);
  online->add_option("--weights", opt.weights, "Trained agent weights")->required()->check(CLI::ExistingFile);
  online->add_flag("--no-learning", opt.noLearning, "Keep the weights frozen");
  auto* sensitivity = app.add_subcommand("sensitivity", "Retrain and evaluate under parameter overrides");
  common(sensitivity);
  sensitivity->add_option("--scenarios", opt.scenarios, "Number of evaluation scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*calibrate) return cmd_calibrate(opt);
    if (*train) return cmd_train(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*compare) return cmd_compare(opt);
    if (*online) return cmd_online(opt);
    if (*sensitivity) return cmd_sensitivity(opt);
  } catch (const UsageError& e) {
    fail("usage", e.what());
    return 2;
  } catch (const ConfigError& e) {
    fail("config", e.what());
    return 3;
  } catch (const CalibrationError& e) {
    fail("calibration", e.what());
    return 4;
  } catch (const WeightFileError& e) {
    fail("weights", e.what());
    return 5;
  } catch (const OutputError& e) {
    fail("output", e.what());
    return 6;
  } catch (const std::exception& e) {
    fail("runtime", e.what());
    return 1;
  }
  return 0;
}
