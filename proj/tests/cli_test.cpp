// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spreadometer/cli.hpp"
#include "test_support.hpp"

namespace spreadometer {
namespace {

namespace fs = std::filesystem;

struct Run {
  int status;
  std::string out;
};

// Runs the installed binary through the shell; stderr is merged into out.
Run run_binary(const std::string& args) {
  const std::string cmd = std::string(SPREADOMETER_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

struct InProcess {
  int status;
  std::string out;
  std::string err;
};

InProcess run_in_process(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run_cli(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spreadometer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return (dir_ / name).string();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, MeasureLineFixture) {
  const auto pop = write("pop.csv", "id,x,y,pi\n0,0,0,0.5\n1,1,0,0.5\n2,2,0,0.5\n3,3,0,0.5\n");
  const auto ids = write("ids.csv", "id\n0\n2\n");
  const auto r = run_binary("measure --population " + pop + " --sample " + ids);
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["i_b"].get<double>(), -1.0, 1e-9);
  EXPECT_NEAR(j["b"].get<double>(), 0.0625, 1e-12);
  EXPECT_EQ(j["n"], 2);
}

TEST_F(CliTest, MeasureDerivesEqualProbabilitiesFromSampleSize) {
  const auto pop = write("pop.csv", "id,x,y\n0,0,0\n1,1,0\n2,2,0\n3,3,0\n");
  const auto ids = write("ids.csv", "id\n0\n1\n");
  const auto r = run_in_process({"measure", "--population", pop, "--sample", ids, "--dump-weights", path("w.csv")});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NEAR(nlohmann::json::parse(r.out)["i_b"].get<double>(), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_EQ(slurp(path("w.csv")), "i,j,w\n0,1,1\n1,0,0.5\n1,2,0.5\n2,1,0.5\n2,3,0.5\n3,2,1\n");
}

TEST_F(CliTest, GenerateIsReproducibleAndMatchesLibrary) {
  const auto a = run_binary("generate csr --n 1000 --seed 7 --out " + path("a.csv"));
  const auto b = run_binary("generate csr --n 1000 --seed 7 --out " + path("b.csv"));
  ASSERT_EQ(a.status, 0) << a.out;
  ASSERT_EQ(b.status, 0) << b.out;
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));

  RngStream rng(7, 0);
  std::ostringstream expected;
  write_population(expected, gen_csr(1000, Window::square(1.0), rng));
  EXPECT_EQ(slurp(path("a.csv")), expected.str());
}

TEST_F(CliTest, GenerateOtherPatterns) {
  auto r = run_in_process({"generate", "aggregated", "--n", "200", "--clusters", "20", "--seed", "1"});
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream agg(r.out);
  EXPECT_EQ(load_population(agg, {.allow_coordinates_only = true}).population.size(), 200u);

  r = run_in_process({"generate", "regular", "--n", "300", "--seed", "1", "--sample-size", "30"});
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream reg(r.out);
  const auto loaded = load_population(reg);
  ASSERT_TRUE(loaded.pi);
  EXPECT_DOUBLE_EQ((*loaded.pi)[0], 0.1);
  for (const auto& p : loaded.population.points()) ASSERT_LE(p.x, 1.5);

  r = run_in_process({"generate", "aggregated", "--n", "205", "--clusters", "20", "--seed", "1"});
  EXPECT_EQ(r.status, 1);
}

TEST_F(CliTest, SampleMatchesLibraryDraw) {
  const auto gen = run_in_process({"generate", "csr", "--n", "300", "--seed", "3", "--sample-size", "30",
                                   "--out", path("pop.csv")});
  ASSERT_EQ(gen.status, 0) << gen.err;
  std::ifstream in(path("pop.csv"));
  auto loaded = load_population(in);
  const PopulationFrame frame(loaded.population, *loaded.pi);

  for (const std::string design : {"srs", "lpm", "kclust", "umes"}) {
    const auto r = run_in_process({"sample", "--population", path("pop.csv"), "--design", design, "--seed", "11"});
    ASSERT_EQ(r.status, 0) << r.err;
    RngStream rng(11, 0);
    SampleSelection expected;
    if (design == "srs") expected = srs(frame, 30, rng);
    if (design == "lpm") expected = lpm(frame, rng);
    if (design == "kclust") expected = kclust(frame, 30, 5, 5, rng);
    if (design == "umes") expected = umes(frame, rng);
    std::ostringstream text;
    write_sample(text, expected, frame.population());
    EXPECT_EQ(r.out, text.str()) << design;
  }
}

TEST_F(CliTest, MeasureMatchesLibrary) {
  RngStream rng(5, 0);
  const auto frame = PopulationFrame(testing::random_population(150, rng), testing::random_probabilities(150, 15, rng));
  std::ofstream(path("pop.csv")) << [&] {
    std::ostringstream s;
    write_population(s, frame);
    return s.str();
  }();
  const auto selection = lpm(frame, rng);
  std::ofstream(path("ids.csv")) << [&] {
    std::ostringstream s;
    write_sample(s, selection, frame.population());
    return s.str();
  }();
  const auto r = run_in_process({"measure", "--population", path("pop.csv"), "--sample", path("ids.csv")});
  ASSERT_EQ(r.status, 0) << r.err;
  // The CSV round trip is exact, so the JSON must match to the last digit.
  const auto expected = to_json(measure_balance(frame, selection.units(), build_weights(frame))).dump() + "\n";
  EXPECT_EQ(r.out, expected);
}

TEST_F(CliTest, SimulateWritesReportsWithOrdering) {
  const std::string cfg = std::string(SPREADOMETER_CONFIG_DIR) + "/csr.cfg";
  const auto r = run_binary("simulate --config " + cfg + " --reps 60 --seed 4 --out " + path("report"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto csv = slurp(path("report.csv"));
  EXPECT_EQ(csv.rfind("population,design,n,index,mean,se,reps\n", 0), 0u);

  const auto j = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(j["config"]["replications"], 60);
  std::map<std::string, double> ib, b;
  for (const auto& cell : j["cells"]) {
    if (cell["n"] != 50) continue;
    ib[cell["design"]] = cell["I_B"]["mean"].get<double>();
    b[cell["design"]] = cell["B"]["mean"].get<double>();
  }
  EXPECT_GT(ib["kCLUST"], ib["SRS"]);
  EXPECT_GT(ib["SRS"], ib["LPM"]);
  EXPECT_GT(b["kCLUST"], b["SRS"]);
  EXPECT_GT(b["SRS"], b["LPM"]);

  // Same inputs through the library give the same CSV.
  std::ifstream in(cfg);
  auto parsed = parse_config(in);
  parsed.seed = 4;
  parsed.replications = 60;
  std::ostringstream expected;
  write_report_csv(expected, run_experiment(parsed));
  EXPECT_EQ(csv, expected.str());
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_binary("").status, 2);
  EXPECT_EQ(run_binary("frobnicate").status, 2);
  EXPECT_EQ(run_binary("generate csr --n 10").status, 2);  // seed is mandatory
  EXPECT_EQ(run_binary("generate hexagonal --seed 1").status, 2);
  EXPECT_EQ(run_binary("sample --population x.csv --design stratified --seed 1").status, 2);
  EXPECT_EQ(run_binary("generate csr --n ten --seed 1").status, 2);
}

TEST_F(CliTest, LibraryErrorsExitOneWithTypedName) {
  const auto pop = write("pop.csv", "id,x,y,pi\n0,0,0,0.5\n1,1,0,0.5\n");
  const auto ids = write("ids.csv", "id\n9\n");
  auto r = run_binary("measure --population " + pop + " --sample " + ids);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.out.rfind("error: LookupError: ", 0), 0u) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);

  r = run_binary("measure --population " + path("missing.csv") + " --sample " + ids);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.out.rfind("error: IoError: ", 0), 0u) << r.out;

  const auto bad = write("bad.csv", "id,x,y,pi\n0,0,0,1.5\n");
  r = run_binary("sample --population " + bad + " --design srs --seed 1");
  EXPECT_EQ(r.out.rfind("error: DomainError: ", 0), 0u) << r.out;

  const auto cfg = write("noseed.cfg", "population = csr\ndesigns = srs\nn = 5\n");
  r = run_binary("simulate --config " + cfg);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.out.rfind("error: ConfigError: ", 0), 0u) << r.out;
}

}  // namespace
}  // namespace spreadometer
