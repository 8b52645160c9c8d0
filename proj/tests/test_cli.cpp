#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "poisson_malliavin/cli/commands.hpp"
#include "poisson_malliavin/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using pm::cli::config_error;

namespace {

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pm_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const json& doc, const std::string& name = "cfg.json") {
    const auto p = dir_ / name;
    std::ofstream(p) << doc.dump(2);
    return p.string();
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Exit status of the CLI; stdout goes to `stdout_file` when given.
  int run(const std::string& args, const std::string& stdout_file = "") const {
    std::string cmd = std::string(PM_CLI_PATH) + " " + args;
    cmd += stdout_file.empty() ? " > /dev/null" : " > " + stdout_file;
    cmd += " 2> " + (dir_ / "stderr.txt").string();
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, sep)) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == sep) {
    out.emplace_back();
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream s(text);
  std::string line;
  while (std::getline(s, line)) {
    rows.push_back(split(line, ','));
  }
  return rows;
}

json small_study(double t) {
  return {{"model", "pareto"}, {"d", 1},         {"t", t},          {"seed", 42},
          {"n_sigma", 400},    {"n_outer", 100}, {"n_space", 4},    {"n_samples", 500},
          {"cyclic", true}};
}

} // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto c = pm::cli::parse_config(json{{"seed", 3}, {"t", 20.0}, {"d", 2}});
  EXPECT_EQ(c.model, "pareto");
  EXPECT_EQ(c.d, 2u);
  EXPECT_EQ(c.t, 20.0);
  EXPECT_EQ(*c.seed, 3u);
  EXPECT_EQ(c.n_outer, 1000u);
  EXPECT_EQ(c.oracle.weights, (std::vector<double>{0.2, 0.3, 0.4}));
  EXPECT_NO_THROW(pm::cli::validate(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW((void)pm::cli::parse_config(json{{"seed", 1}, {"sede", 2}}), config_error);
  EXPECT_THROW((void)pm::cli::parse_config(json{{"embedding", {{"b_low", {0.0}}}}}), config_error);
  EXPECT_THROW((void)pm::cli::parse_config(json{{"oracle", {{"nmax", 3}}}}), config_error);
  EXPECT_THROW((void)pm::cli::parse_config(json{{"sweep", {{"param", "t"}}}}), config_error);
}

TEST(Config, BadTypesAndValues) {
  EXPECT_THROW((void)pm::cli::parse_config(json{{"t", "big"}}), config_error);
  EXPECT_THROW((void)pm::cli::parse_config(json{{"n_outer", -3}}), config_error);
  EXPECT_THROW((void)pm::cli::parse_config(json{{"seed", 1.5}}), config_error);
  EXPECT_THROW((void)pm::cli::parse_config(json::array()), config_error);
}

TEST(Config, ValidationNeedsSeedAndBudgets) {
  auto c = pm::cli::parse_config(json::object());
  EXPECT_THROW(pm::cli::validate(c), config_error);
  c.seed = 1;
  c.n_outer = 1;
  EXPECT_THROW(pm::cli::validate(c), config_error);
  c.n_outer = 10;
  c.model = "ising";
  EXPECT_THROW(pm::cli::validate(c), config_error);
  c.model = "pareto";
  c.sweep = pm::cli::SweepSpec{"volume", {1.0}};
  EXPECT_THROW(pm::cli::validate(c), config_error);
}

TEST(Format, SeventeenSignificantDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    const auto s = pm::cli::format_real(v);
    EXPECT_EQ(std::stod(s), v);
  }
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("study"), 1);
  EXPECT_EQ(run("study --config " + path("missing.json")), 1);
  EXPECT_EQ(run("study --config " + write_config(json{{"seed", 1}, {"bogus", 0}})), 1);
  // No seed anywhere.
  EXPECT_EQ(run("sample --config " + write_config(json{{"n_samples", 3}})), 1);
  // --seed supplies it.
  EXPECT_EQ(run("sample --seed 4 --config " + write_config(json{{"n_samples", 3}})), 0);
}

TEST_F(CliTest, OracleDefaultPasses) {
  const auto out = path("oracle.txt");
  EXPECT_EQ(run("oracle --config " + std::string(PM_CONFIG_DIR) + "/oracle.json", out), 0);
  const auto text = slurp(out);
  EXPECT_NE(text.find("mecke[const]"), std::string::npos);
  EXPECT_NE(text.find("iterated_bound[19]"), std::string::npos);
  EXPECT_EQ(text.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, OracleSmallTruncationStillPasses) {
  json doc{{"seed", 1}, {"oracle", {{"n_max", 2}, {"integrands", 3}, {"kernels", 3}}}};
  const auto out = path("oracle.txt");
  EXPECT_EQ(run("oracle --config " + write_config(doc), out), 0);
  EXPECT_EQ(slurp(out).find("FAIL"), std::string::npos);
}

TEST_F(CliTest, CorruptedIdentityExitsTwo) {
  json doc{{"seed", 1}, {"oracle", {{"integrands", 1}, {"kernels", 1}, {"corrupt", true}}}};
  const auto out = path("oracle.txt");
  EXPECT_EQ(run("oracle --config " + write_config(doc), out), 2);
  EXPECT_NE(slurp(out).find("mecke_without_compensator"), std::string::npos);
}

TEST_F(CliTest, InfeasibleOracleSpaceExitsOne) {
  json doc{{"seed", 1}, {"oracle", {{"weights", {1, 1, 1, 1, 1, 1, 1}}}}};
  EXPECT_EQ(run("oracle --config " + write_config(doc)), 1);
}

TEST_F(CliTest, ZeroSamplesGivesEmptyFile) {
  json doc{{"seed", 9}, {"n_samples", 0}};
  const auto out = path("s.txt");
  EXPECT_EQ(run("sample --config " + write_config(doc) + " --out " + out), 0);
  ASSERT_TRUE(fs::exists(out));
  EXPECT_EQ(fs::file_size(out), 0u);
}

TEST_F(CliTest, SamplesAreReproducibleAndCentred) {
  json doc{{"model", "pareto"}, {"d", 1}, {"t", 100.0}, {"seed", 123}, {"n_samples", 10000}};
  const auto cfg = write_config(doc);
  const auto a = path("a.txt"), b = path("b.txt"), c = path("c.txt");
  ASSERT_EQ(run("sample --config " + cfg + " --out " + a), 0);
  ASSERT_EQ(run("sample --config " + cfg + " --out " + b), 0);
  ASSERT_EQ(run("sample --config " + cfg + " --seed 124 --out " + c), 0);
  const auto ta = slurp(a);
  EXPECT_EQ(ta, slurp(b));
  EXPECT_NE(ta, slurp(c));
  std::vector<double> xs;
  std::istringstream s(ta);
  std::string line;
  while (std::getline(s, line)) {
    xs.push_back(std::stod(line));
  }
  ASSERT_EQ(xs.size(), 10000u);
  EXPECT_EQ(ta.back(), '\n');
  EXPECT_EQ(ta.find('\r'), std::string::npos);
  const auto m = pm::mean_se(xs);
  EXPECT_NEAR(m.mean, 0.0, 3.0 * m.std_error);
}

TEST_F(CliTest, StudyCsvHeaderAndCellsAreWellFormed) {
  json doc = small_study(20.0);
  doc["sweep"] = {{"parameter", "t"}, {"values", {10.0, 30.0}}};
  const auto out = path("study.csv");
  ASSERT_EQ(run("study --config " + write_config(doc) + " --out " + out), 0);
  const auto rows = read_csv(slurp(out));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], pm::cli::study_columns());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    ASSERT_EQ(rows[r].size(), rows[0].size());
    for (const auto& cell : rows[r]) {
      ASSERT_FALSE(cell.empty());
      EXPECT_TRUE(std::isfinite(std::stod(cell)));
    }
  }
  EXPECT_EQ(std::stod(rows[1][0]), 10.0);
  EXPECT_EQ(std::stod(rows[2][0]), 30.0);
}

TEST_F(CliTest, StudyIsByteIdenticalAcrossRuns) {
  const auto cfg = write_config(small_study(15.0));
  const auto a = path("a.csv"), b = path("b.csv");
  ASSERT_EQ(run("study --config " + cfg + " --out " + a), 0);
  ASSERT_EQ(run("study --config " + cfg + " --out " + b), 0);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(CliTest, StudyThirdTermMatchesClosedColumn) {
  json doc = small_study(20.0);
  doc["n_outer"] = 2000;
  doc["n_space"] = 8;
  doc["n_sigma"] = 4000;
  doc["sweep"] = {{"parameter", "t"}, {"values", {10.0, 100.0, 1000.0}}};
  const auto out = path("study.csv");
  ASSERT_EQ(run("study --config " + write_config(doc) + " --out " + out), 0);
  const auto rows = read_csv(slurp(out));
  const auto& h = rows[0];
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double t3 = std::stod(rows[r][col("T3")]);
    const double se = std::stod(rows[r][col("T3_se")]);
    const double closed = std::stod(rows[r][col("closed_T3")]);
    EXPECT_NEAR(t3, closed, 3.0 * se) << rows[r][0];
  }
}

TEST_F(CliTest, EmbeddingVarianceScalesWithVolume) {
  json doc{{"model", "embedding"},
           {"embedding", {{"g_a", 1.0}, {"g_b", 0.0}, {"y_cap", 1.0}, {"h_height", 1.0}}},
           {"seed", 8},
           {"n_sigma", 2000},
           {"n_outer", 50},
           {"n_space", 2},
           {"n_samples", 0},
           {"sweep", {{"parameter", "b_volume"}, {"values", {10.0, 100.0}}}}};
  const auto out = path("study.csv");
  ASSERT_EQ(run("study --config " + write_config(doc) + " --out " + out), 0);
  const auto rows = read_csv(slurp(out));
  ASSERT_EQ(rows.size(), 3u);
  const double ratio = std::stod(rows[2][1]) / std::stod(rows[1][1]);
  EXPECT_NEAR(ratio, 10.0, 2.0);
  // Empirical columns are empty without samples.
  EXPECT_TRUE(rows[1][std::find(rows[0].begin(), rows[0].end(), "empirical_d_K") -
                      rows[0].begin()]
                  .empty());
}

TEST_F(CliTest, DegenerateVarianceExitsThree) {
  json doc{{"model", "constant"}, {"constant_value", 0.0}, {"seed", 1}, {"n_sigma", 10},
           {"n_outer", 10},      {"n_space", 1},          {"n_samples", 0}};
  EXPECT_EQ(run("study --config " + write_config(doc)), 3);
}

TEST_F(CliTest, UnwritableOutputExitsOne) {
  json doc{{"seed", 1}, {"n_samples", 2}};
  EXPECT_EQ(run("sample --config " + write_config(doc) + " --out " + path("no/such/dir/x.txt")),
            1);
}
