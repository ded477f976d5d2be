#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = HTE_CLI_PATH;

int run(const std::string& args, const std::string& stderrFile = "") {
  std::string cmd = kCli + " " + args + " >/dev/null";
  cmd += stderrFile.empty() ? " 2>/dev/null" : " 2>" + stderrFile;
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / ("hte_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void writeFile(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

TEST_CASE("simulate then estimate produces the full artifact set") {
  TempDir dir("pipeline");

  writeFile(dir.path / "sim.json", R"({
    "schemaVersion": 1,
    "dgp": {"model": "gaussian", "n": 300, "setup": "RCT_ONE_SIDED"}
  })");
  REQUIRE(run("simulate --config " + (dir.path / "sim.json").string() + " --seed 7 --out " +
              (dir.path / "data").string()) == 0);
  REQUIRE(fs::exists(dir.path / "data" / "dataset.csv"));

  writeFile(dir.path / "est.json", R"({
    "schemaVersion": 1,
    "data": {"path": ")" + (dir.path / "data" / "dataset.csv").string() + R"(",
             "setup": "RCT_ONE_SIDED"},
    "sampler": {"target": "quasi", "iterations": 400, "warmup": 150, "quadratureOrder": 16},
    "estimands": {"gridPoints": 21}
  })");
  const std::string estimateArgs = "estimate --model gaussian --config " +
                                   (dir.path / "est.json").string() + " --seed 11 --out " +
                                   (dir.path / "fitA").string();
  REQUIRE(run(estimateArgs) == 0);
  for (const char* name : {"params.json", "estimands.json", "hte_curve.csv", "diagnostics.json"})
    CHECK(fs::exists(dir.path / "fitA" / name));

  const std::string curve = slurp(dir.path / "fitA" / "hte_curve.csv");
  CHECK(curve.rfind("y0,mean,lo95,hi95", 0) == 0);

  // identical invocation, identical bytes
  const std::string rerunArgs = "estimate --model gaussian --config " +
                                (dir.path / "est.json").string() + " --seed 11 --out " +
                                (dir.path / "fitB").string();
  REQUIRE(run(rerunArgs) == 0);
  CHECK(slurp(dir.path / "fitB" / "hte_curve.csv") == curve);
  CHECK(slurp(dir.path / "fitB" / "params.json") == slurp(dir.path / "fitA" / "params.json"));
}

TEST_CASE("macro setup without auxiliary moments fails loudly") {
  TempDir dir("macro");

  writeFile(dir.path / "sim.json", R"({
    "schemaVersion": 1,
    "dgp": {"model": "gaussian", "n": 200, "setup": "OBS_MACRO"}
  })");
  REQUIRE(run("simulate --config " + (dir.path / "sim.json").string() + " --seed 3 --out " +
              (dir.path / "data").string()) == 0);

  writeFile(dir.path / "est.json", R"({
    "schemaVersion": 1,
    "data": {"path": ")" + (dir.path / "data" / "dataset.csv").string() + R"(",
             "setup": "OBS_MACRO"},
    "sampler": {"target": "quasi", "iterations": 200, "warmup": 100}
  })");
  const fs::path errFile = dir.path / "stderr.txt";
  const int rc = run("estimate --model gaussian --config " + (dir.path / "est.json").string() +
                         " --seed 3 --out " + (dir.path / "fit").string(),
                     errFile.string());
  CHECK(rc != 0);
  const std::string err = slurp(errFile);
  CHECK(err.find("error") != std::string::npos);
  CHECK(err.find("data.aux") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected") {
  TempDir dir("badkey");
  writeFile(dir.path / "sim.json", R"({
    "schemaVersion": 1,
    "dgp": {"model": "gaussian", "n": 50, "bogusKnob": true}
  })");
  const fs::path errFile = dir.path / "stderr.txt";
  const int rc = run("simulate --config " + (dir.path / "sim.json").string() + " --out " +
                         (dir.path / "data").string(),
                     errFile.string());
  CHECK(rc != 0);
  CHECK(slurp(errFile).find("bogusKnob") != std::string::npos);

  writeFile(dir.path / "old.json", R"({"schemaVersion": 2, "dgp": {"n": 50}})");
  CHECK(run("simulate --config " + (dir.path / "old.json").string() + " --out " +
            (dir.path / "data").string()) != 0);
}

TEST_CASE("identify subcommand writes a json report") {
  TempDir dir("identify");
  writeFile(dir.path / "id.json", R"({
    "schemaVersion": 1,
    "identify": {"nX": 12, "nY0": 12, "tolerance": 1e-8}
  })");
  REQUIRE(run("identify --config " + (dir.path / "id.json").string() + " --out " +
              dir.path.string()) == 0);
  const std::string report = slurp(dir.path / "identify.json");
  CHECK(report.find("\"numericalRank\": 12") != std::string::npos);
  CHECK(report.find("COMPLETE_AT_TOLERANCE") != std::string::npos);
  CHECK(report.find("caveat") != std::string::npos);
}
