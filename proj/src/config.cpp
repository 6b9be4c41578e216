#include "vahedge/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace vahedge {
namespace {

namespace pt = boost::property_tree;

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool present() const { return tree_ != nullptr; }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    const auto child = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return *child;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const auto text = raw(key);
    return text ? convert<T>(key, *text) : fallback;
  }

  template <typename T>
  T require(const std::string& key) {
    const auto text = raw(key);
    if (!text) throw ConfigError("missing key '" + key + "' in section [" + name_ + "]");
    return convert<T>(key, *text);
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, _] : *tree_)
      if (!used_.contains(key)) throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
  }

 private:
  template <typename T>
  T convert(const std::string& key, const std::string& text) const {
    std::istringstream is(text);
    T value{};
    is >> value;
    if (!is || !(is >> std::ws).eof())
      throw ConfigError("invalid value '" + text + "' for key '" + key + "' in section [" + name_ + "]");
    return value;
  }

  const pt::ptree* tree_;
  std::string name_;
  std::set<std::string> used_;
};

template <>
std::string Section::convert<std::string>(const std::string&, const std::string& text) const {
  return text;
}

template <>
bool Section::convert<bool>(const std::string& key, const std::string& text) const {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid value '" + text + "' for key '" + key + "' in section [" + name_ + "] (expected true or false)");
}

std::string trim(std::string s) {
  const auto notSpace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notSpace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notSpace).base(), s.end());
  return s;
}

std::vector<ParameterOverride> parse_overrides(const std::string& text) {
  std::vector<ParameterOverride> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("override '" + item + "' must look like key:value");
    ParameterOverride o{trim(item.substr(0, colon)), 0.0};
    if (o.key != "mu" && o.key != "sigma" && o.key != "nu")
      throw ConfigError("invalid override key '" + o.key + "' (expected mu, sigma or nu)");
    try {
      std::size_t used = 0;
      const std::string valueText = trim(item.substr(colon + 1));
      o.value = std::stod(valueText, &used);
      if (used != valueText.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("invalid override value in '" + item + "'");
    }
    out.push_back(o);
  }
  return out;
}

RunConfig build(const pt::ptree& tree) {
  static const std::set<std::string> kSections{"run", "market", "mortality", "contract", "trainer",
                                               "evaluation", "hedgers", "online", "sensitivity", "output"};
  for (const auto& [name, _] : tree)
    if (!kSections.contains(name)) throw ConfigError("unknown section [" + name + "]");

  const auto section = [&tree](const std::string& name) {
    const auto child = tree.get_child_optional(name);
    return Section(child ? &*child : nullptr, name);
  };

  RunConfig cfg;

  Section run = section("run");
  cfg.seed = run.get<std::uint64_t>("seed", 0);
  cfg.threads = run.get<int>("threads", 0);
  run.reject_unknown();

  Section market = section("market");
  if (!market.present()) throw ConfigError("missing section [market]");
  const std::string model = market.get<std::string>("model", "bs");
  if (model != "bs") throw ConfigError("market model '" + model + "' is not supported by the hedging environment (use bs)");
  cfg.training.market.r = market.require<double>("r");
  cfg.training.market.S0 = market.require<double>("S0");
  cfg.training.market.mu = market.require<double>("mu");
  cfg.training.market.sigma = market.require<double>("sigma");
  market.reject_unknown();

  Section mortality = section("mortality");
  if (!mortality.present()) throw ConfigError("missing section [mortality]");
  const std::string law = mortality.get<std::string>("model", "cfm");
  if (law == "cfm") {
    cfg.training.mortality = ConstantForce{mortality.require<double>("nu")};
  } else if (law == "ifm") {
    cfg.training.mortality = UniformLifetime{mortality.get<double>("b_low", 0.0), mortality.require<double>("b_up")};
  } else {
    throw ConfigError("mortality model must be cfm or ifm, got '" + law + "'");
  }
  mortality.reject_unknown();

  Section contract = section("contract");
  if (!contract.present()) throw ConfigError("missing section [contract]");
  auto& terms = cfg.training.terms;
  terms.G = contract.require<double>("G");
  terms.rho = contract.require<double>("rho");
  terms.m = contract.require<double>("m");
  const std::string me = contract.require<std::string>("me");
  cfg.calibrateRiderCharge = me == "auto";
  terms.me = terms.m;
  if (!cfg.calibrateRiderCharge) {
    std::istringstream is(me);
    if (!(is >> terms.me) || !(is >> std::ws).eof()) throw ConfigError("invalid value '" + me + "' for key 'me' in section [contract]");
  }
  terms.T = contract.require<double>("T");
  terms.N = contract.require<int>("N");
  terms.age = contract.get<double>("age", 20.0);
  const double daysPerYear = contract.get<double>("hedges_per_year", kTradingDaysPerYear);
  contract.reject_unknown();
  if (!(daysPerYear > 0.0)) throw ConfigError("hedges_per_year must be positive");
  cfg.training.grid = PathGrid::covering(terms.T, 1.0 / daysPerYear);

  if (cfg.calibrateRiderCharge) {
    try {
      cfg.training.market.validate();
      terms.validate();
      validate(cfg.training.mortality);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    terms.me = calibrate_rider_charge(terms, cfg.training.market.S0, cfg.training.market.r,
                                      cfg.training.market.sigma, cfg.training.mortality);
  }

  Section trainer = section("trainer");
  auto& ppo = cfg.trainer;
  ppo.learningRate = trainer.get("learning_rate", ppo.learningRate);
  ppo.batchSize = trainer.get("batch_size", ppo.batchSize);
  ppo.clip = trainer.get("clip", ppo.clip);
  ppo.valueCoef = trainer.get("value_coef", ppo.valueCoef);
  ppo.entropyCoef = trainer.get("entropy_coef", ppo.entropyCoef);
  ppo.totalTimesteps = trainer.get("total_timesteps", ppo.totalTimesteps);
  ppo.maxGradNorm = trainer.get("max_grad_norm", ppo.maxGradNorm);
  ppo.rewardScale = trainer.get("reward_scale", ppo.rewardScale);
  ppo.normalizeAdvantages = trainer.get("normalize_advantages", ppo.normalizeAdvantages);
  ppo.initialStd = trainer.get("initial_std", ppo.initialStd);
  cfg.training.actionLimit = trainer.get("action_limit", cfg.training.actionLimit);
  trainer.reject_unknown();

  Section evaluation = section("evaluation");
  cfg.evaluation.scenarios = evaluation.get("scenarios", cfg.evaluation.scenarios);
  cfg.evaluation.policyholders = evaluation.get("policyholders", cfg.evaluation.policyholders);
  evaluation.reject_unknown();

  Section hedgers = section("hedgers");
  auto& h = cfg.hedgers;
  const auto* cfm = std::get_if<ConstantForce>(&cfg.training.mortality);
  h.nu = hedgers.get("cfm_nu", cfm ? cfm->nu : h.nu);
  h.sigma = hedgers.get("bs_sigma", cfg.training.market.sigma);
  h.ifm.bLow = hedgers.get("ifm_b_low", h.ifm.bLow);
  h.ifm.bUp = hedgers.get("ifm_b_up", h.ifm.bUp);
  h.heston.r = cfg.training.market.r;
  h.heston.S0 = cfg.training.market.S0;
  h.heston.mu = hedgers.get("heston_mu", cfg.training.market.mu);
  h.heston.Sigma0 = hedgers.get("heston_Sigma0", h.heston.Sigma0);
  h.heston.kappa = hedgers.get("heston_kappa", h.heston.kappa);
  h.heston.SigmaBar = hedgers.get("heston_SigmaBar", h.heston.SigmaBar);
  h.heston.eta = hedgers.get("heston_eta", h.heston.eta);
  h.heston.phi = hedgers.get("heston_phi", h.heston.phi);
  h.hestonPaths = hedgers.get<std::size_t>("heston_paths", h.hestonPaths);
  hedgers.reject_unknown();

  Section online = section("online");
  auto& o = cfg.online;
  o.mu = online.get("mu", o.mu);
  o.sigma = online.get("sigma", o.sigma);
  o.nu = online.get("nu", o.nu);
  o.rho = online.get("rho", o.rho);
  o.policyholders = online.get("policyholders", o.policyholders);
  o.learner.ppo.learningRate = online.get("learning_rate", o.learner.ppo.learningRate);
  o.learner.ppo.batchSize = online.get("batch_size", o.learner.ppo.batchSize);
  o.learner.ppo.clip = online.get("clip", o.learner.ppo.clip);
  o.learner.ppo.valueCoef = online.get("value_coef", o.learner.ppo.valueCoef);
  o.learner.ppo.entropyCoef = online.get("entropy_coef", o.learner.ppo.entropyCoef);
  o.learner.ppo.rewardScale = online.get("reward_scale", o.learner.ppo.rewardScale);
  o.learner.updates = online.get("updates", o.learner.updates);
  o.learner.evalScenarios = online.get("eval_scenarios", o.learner.evalScenarios);
  o.learner.ppo.totalTimesteps = static_cast<long>(o.learner.updates) * o.learner.ppo.batchSize;
  online.reject_unknown();

  Section sensitivity = section("sensitivity");
  if (const auto text = sensitivity.raw("overrides")) cfg.sensitivity = parse_overrides(*text);
  else cfg.sensitivity = default_sensitivity_overrides();
  sensitivity.reject_unknown();

  Section output = section("output");
  cfg.output.dir = output.get<std::string>("dir", cfg.output.dir.string());
  output.reject_unknown();

  try {
    cfg.training.validate();
    cfg.trainer.validate();
    cfg.online.learner.ppo.validate();
    cfg.evaluation_env().validate();
    cfg.online_env().validate();
    cfg.hedgers.heston.validate();
    validate(MortalityModel{cfg.hedgers.ifm});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(h.nu > 0.0) || !(h.sigma > 0.0)) throw ConfigError("hedger cfm_nu and bs_sigma must be positive");
  if (cfg.evaluation.scenarios < 1) throw ConfigError("evaluation scenarios must be at least 1");
  return cfg;
}

}  // namespace

EnvConfig RunConfig::evaluation_env() const {
  EnvConfig env = training;
  env.terms.N = evaluation.policyholders;
  return env;
}

EnvConfig RunConfig::online_env() const {
  EnvConfig env = training;
  env.market.mu = online.mu;
  env.market.sigma = online.sigma;
  env.mortality = ConstantForce{online.nu};
  env.terms.rho = online.rho;
  env.terms.N = online.policyholders;
  return env;
}

int RunConfig::thread_count() const {
  if (threads > 0) return threads;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

RunConfig parse_run_config(const std::string& text, const std::string& sourceName) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(sourceName + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  try {
    return build(tree);
  } catch (const ConfigError& e) {
    throw ConfigError(sourceName + ": " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

}  // namespace vahedge
