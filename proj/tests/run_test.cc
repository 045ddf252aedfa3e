#include "rsmfg/run.h"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rsmfg/errors.h"

namespace rsmfg {
namespace {

namespace fs = std::filesystem;

const std::string kConfigs = std::string(RSMFG_SOURCE_DIR) + "/configs/";

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rsmfg_run_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kSmallGame = R"({
  "model": {"T": 1, "major": {"A": -1, "F": 0.5, "B": 1, "sigma": 0.5,
      "Q": 2, "R": 1, "H": 1, "delta": 1, "x0": [1]},
    "minors": [{"A": -2, "F": 0.5, "G": 0.5, "B": 1, "sigma": 0.5, "Q": 3,
      "R": 1, "H": 0.5, "H_hat": 0.5, "delta": 1, "x0": [0.5]}]},
  "grid": {"steps": 200},
  "montecarlo": {"seed": 12},
  "population": {"n_agents": [2, 4], "n_reps": 50, "coarse_steps": 50}
})";

TEST(RunTest, GitBlobHash) {
  EXPECT_EQ(GitBlobHash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(GitBlobHash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(RunTest, ExitCodes) {
  EXPECT_EQ(ExitCode(ParseError("x")), 2);
  EXPECT_EQ(ExitCode(AssumptionViolated("x")), 2);
  EXPECT_EQ(ExitCode(DimensionMismatch("x")), 2);
  EXPECT_EQ(ExitCode(NotConverged(3, 1.0)), 3);
  EXPECT_EQ(ExitCode(FiniteEscape(0.5)), 4);
  EXPECT_EQ(ExitCode(NonFiniteState(0.5, "x")), 5);
  EXPECT_EQ(ExitCode(std::runtime_error("x")), 1);
}

TEST(RunTest, RerunsAreByteStable) {
  const ExperimentConfig c = ParseConfig(kSmallGame, Mode::kNashGap);
  const fs::path a = TempDir("stable_a"), b = TempDir("stable_b");
  const ResultBundle ra = rsmfg::Run(c, {a.string(), 1});
  const ResultBundle rb = rsmfg::Run(c, {b.string(), 2});
  ASSERT_EQ(ra.files, rb.files);
  for (const std::string& f : ra.files) {
    EXPECT_EQ(Slurp(a / f), Slurp(b / f)) << f;
  }
  EXPECT_EQ(ra.files.back(), "manifest.json");
}

TEST(RunTest, CsvHeadersNameUnits) {
  const ExperimentConfig c = ParseConfig(kSmallGame, Mode::kSolveMfg);
  const fs::path dir = TempDir("headers");
  const ResultBundle r = rsmfg::Run(c, {dir.string(), 1});
  for (const std::string& f : r.files) {
    if (f.size() < 4 || f.substr(f.size() - 4) != ".csv") continue;
    const std::string text = Slurp(dir / f);
    const std::string header = text.substr(0, text.find('\n'));
    EXPECT_FALSE(header.empty()) << f;
    if (f != "convergence.csv") {
      EXPECT_EQ(header,
                "time (problem units),entity,component,value (dimensionless)")
          << f;
    }
  }
}

TEST(RunTest, ManifestHashTracksConfigNumbers) {
  std::string changed = kSmallGame;
  changed.replace(changed.find("\"Q\": 3"), 6, "\"Q\": 3.0001");
  const fs::path a = TempDir("hash_a"), b = TempDir("hash_b");
  rsmfg::Run(ParseConfig(kSmallGame, Mode::kSolveMfg), {a.string(), 1});
  rsmfg::Run(ParseConfig(changed, Mode::kSolveMfg), {b.string(), 1});
  const auto ma = nlohmann::json::parse(Slurp(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(Slurp(b / "manifest.json"));
  EXPECT_NE(ma["config_hash"], mb["config_hash"]);
  EXPECT_EQ(ma["config_hash"], GitBlobHash(kSmallGame));
  EXPECT_EQ(ma["config"]["model"]["minors"][0]["Q"], 3);
}

TEST(RunTest, UnconvergedStillWritesLog) {
  std::string text = kSmallGame;
  text.insert(1, R"("fixedpoint": {"max_iter": 2},)");
  const fs::path dir = TempDir("unconverged");
  EXPECT_THROW(rsmfg::Run(ParseConfig(text, Mode::kSolveMfg), {dir.string(), 1}),
               NotConverged);
  EXPECT_TRUE(fs::exists(dir / "convergence.csv"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

// The CLI binary end to end.
int Cli(const std::string& args) {
  const std::string cmd = std::string(RSMFG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ExitCodesPerErrorClass) {
  const fs::path out = TempDir("cli");
  EXPECT_EQ(Cli("solve-single --config " + kConfigs + "finite_escape.json --out " +
                out.string()),
            4);
  EXPECT_EQ(Cli("solve-mfg --config " + kConfigs + "toy_model.json --out " +
                out.string()),
            0);
  EXPECT_EQ(Cli("nash-gap --config " + kConfigs + "toy_model.json"), 2);
  EXPECT_EQ(Cli("solve-mfg --config /nonexistent.json"), 2);
  EXPECT_EQ(Cli("bogus-mode --config " + kConfigs + "toy_model.json"), 2);
  EXPECT_EQ(Cli("solve-mfg"), 2);
}

TEST(CliTest, FiniteEscapeDiagnosticNamesTime) {
  const std::string cmd = std::string(RSMFG_CLI) + " solve-single --config " +
                          kConfigs + "finite_escape.json --out " +
                          TempDir("escape").string() + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string output;
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) output += buf;
  pclose(pipe);
  // Closed form: Pi(t) = tan(3 (T - t) + atan 3) / 3 escapes at
  // t = 1 - (pi/2 - atan 3) / 3 = 0.89273.
  EXPECT_NE(output.find("near t=0.89"), std::string::npos) << output;
}

}  // namespace
}  // namespace rsmfg
