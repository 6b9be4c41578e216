#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vahedge/delta.hpp"
#include "vahedge/env.hpp"
#include "vahedge/evalharness.hpp"
#include "vahedge/policygrad.hpp"

namespace vahedge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvaluationSection {
  int scenarios = 5000;
  int policyholders = 1;
};

/// Assumed models of the benchmark hedgers.
struct HedgerSection {
  double nu = 0.02;     // force of mortality assumed by the CFM hedgers
  double sigma = 0.2;   // volatility assumed by the BS hedgers
  UniformLifetime ifm{0.0, 50.0};
  HestonParams heston;
  std::size_t hestonPaths = 10000;
};

/// Differences of the live evaluation market from the training one.
struct OnlineSection {
  double mu = -0.2;
  double sigma = 0.4;
  double nu = 0.03;
  double rho = 1.58;
  int policyholders = 1;
  OnlineConfig learner;
};

struct OutputSection {
  std::filesystem::path dir = "out";
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  EnvConfig training;
  bool calibrateRiderCharge = false;  // contract.me = auto
  PpoConfig trainer;
  EvaluationSection evaluation;
  HedgerSection hedgers;
  OnlineSection online;
  std::vector<ParameterOverride> sensitivity;
  OutputSection output;

  /// Training environment with N replaced by the evaluation cohort size.
  EnvConfig evaluation_env() const;
  /// Live environment of online learning.
  EnvConfig online_env() const;
  int thread_count() const;
};

/// Parses an INI-style file. Sections: run, market, mortality, contract,
/// trainer, evaluation, hedgers, online, sensitivity, output. Unknown
/// sections or keys are errors.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::string& sourceName = "<string>");

}  // namespace vahedge
