#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const std::string command = std::string(VAHEDGE_CLI_PATH) + " " + args + " 2>&1";
  Outcome out;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return out;
  std::array<char, 512> buffer{};
  while (fgets(buffer.data(), buffer.size(), pipe)) out.output += buffer.data();
  const int raw = pclose(pipe);
  out.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

std::size_t line_count(const fs::path& path) {
  std::ifstream is(path);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) ++n;
  return n;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("vahedge_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_ / "out");
    std::ifstream base(std::string(VAHEDGE_CONFIG_DIR) + "/baseline.ini");
    std::ofstream os(config());
    for (std::string line; std::getline(base, line);) {
      if (line.starts_with("total_timesteps")) line = "total_timesteps = 240";
      else if (line.starts_with("scenarios")) line = "scenarios = 30";
      else if (line.starts_with("heston_paths")) line = "heston_paths = 200";
      else if (line.starts_with("updates")) line = "updates = 2";
      else if (line.starts_with("eval_scenarios")) line = "eval_scenarios = 10";
      else if (line.starts_with("overrides")) line = "overrides =";
      else if (line.starts_with("dir")) line = "dir = " + (dir_ / "out").string();
      os << line << '\n';
    }
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string config() const { return (dir_ / "run.ini").string(); }
  fs::path out() const { return dir_ / "out"; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, Calibrate) {
  const auto r = run("calibrate --config " + config());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("me = 0.019"), std::string::npos) << r.output;

  const auto written = dir_ / "calibrated.ini";
  EXPECT_EQ(run("calibrate --config " + config() + " --out " + written.string()).status, 0);
  EXPECT_NE(slurp(written).find("me = 0.0190"), std::string::npos);
}

TEST_F(Cli, TrainEvaluateOnline) {
  auto r = run("train --config " + config());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(out() / "weights.bin"));
  EXPECT_EQ(line_count(out() / "training_log.csv"), 5u);
  const std::string firstLog = slurp(out() / "training_log.csv");

  const fs::path resumed = dir_ / "resumed";
  fs::create_directories(resumed);
  r = run("train --config " + config() + " --weights " + (out() / "weights.bin").string() + " --out " + resumed.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(slurp(resumed / "training_log.csv"), firstLog);

  r = run("evaluate --config " + config() + " --hedger rl --weights " + (out() / "weights.bin").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(line_count(out() / "pnl_rl.csv"), 31u);

  r = run("online --config " + config() + " --weights " + (out() / "weights.bin").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(line_count(out() / "online.csv"), 4u);
  const std::string first = slurp(out() / "online.csv");
  r = run("online --config " + config() + " --weights " + (out() / "weights.bin").string());
  EXPECT_EQ(slurp(out() / "online.csv"), first);
  r = run("online --no-learning --config " + config() + " --weights " + (out() / "weights.bin").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(out() / "online_frozen.csv"));
}

TEST_F(Cli, EvaluateBenchmarks) {
  for (const char* hedger : {"zero", "cfm-bs", "ifm-heston"}) {
    const auto r = run(std::string("evaluate --config ") + config() + " --hedger " + hedger + " --scenarios 20");
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_EQ(line_count(out() / (std::string("pnl_") + hedger + ".csv")), 21u);
    EXPECT_EQ(line_count(out() / (std::string("stats_") + hedger + ".csv")), 2u);
  }
}

TEST_F(Cli, SensitivityBaseRowOnly) {
  const auto r = run("sensitivity --config " + config());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(line_count(out() / "sensitivity.csv"), 3u);
}

TEST_F(Cli, Errors) {
  auto r = run("evaluate --config " + config() + " --hedger martingale");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("error: usage"), std::string::npos) << r.output;

  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("evaluate --hedger rl --config " + config()).status, 2);

  const auto broken = dir_ / "broken.ini";
  std::ofstream(broken) << "[market]\nr = 0.02\nno equals sign here\n";
  r = run("calibrate --config " + broken.string());
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.output.find("broken.ini:3"), std::string::npos) << r.output;

  const auto expensive = dir_ / "expensive.ini";
  std::ofstream(expensive) << std::regex_replace(slurp(config()), std::regex("G = 100"), "G = 300");
  EXPECT_EQ(run("calibrate --config " + expensive.string()).status, 4);

  const auto junk = dir_ / "junk.bin";
  std::ofstream(junk) << "junk";
  EXPECT_EQ(run("evaluate --config " + config() + " --hedger rl --weights " + junk.string()).status, 5);

  EXPECT_EQ(run("train --config " + config() + " --out " + (dir_ / "missing").string()).status, 6);
}
