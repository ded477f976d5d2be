// Command-line front end: simulate, estimate (alias fit), replicate, identify.
// All file output stays inside the --out directory; errors are reported as a
// JSON object on stderr with a nonzero exit code.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hte/censored.hpp"
#include "hte/estimands.hpp"
#include "hte/identify.hpp"
#include "hte/io.hpp"
#include "hte/model.hpp"
#include "hte/replicate.hpp"
#include "hte/sampler.hpp"
#include "hte/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void rejectUnknownKeys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw hte::ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

json loadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hte::ConfigError("cannot open config file: " + path);
  json j;
  in >> j;
  if (!j.contains("schemaVersion") || j.at("schemaVersion").get<int>() != hte::kSchemaVersion)
    throw hte::ConfigError("config: schemaVersion " + std::to_string(hte::kSchemaVersion) +
                           " is required");
  return j;
}

hte::StudySetup parseSetup(const std::string& s) {
  if (s == "RCT_ONE_SIDED") return hte::StudySetup::RCT_ONE_SIDED;
  if (s == "OBS_MICRO") return hte::StudySetup::OBS_MICRO;
  if (s == "OBS_MACRO") return hte::StudySetup::OBS_MACRO;
  throw hte::ConfigError("config: unknown setup '" + s + "'");
}

hte::GaussianModelParams gaussianParamsFromJson(const json& j) {
  const auto names = hte::GaussianModelParams::parameterNames();
  std::vector<double> v;
  v.reserve(names.size());
  for (const auto& name : names) {
    if (!j.contains(name)) throw hte::ConfigError("config: dgp params missing '" + name + "'");
    v.push_back(j.at(name).get<double>());
  }
  if (j.size() != names.size()) throw hte::ConfigError("config: dgp params has extra keys");
  return hte::GaussianModelParams::fromVector(v);
}

hte::TobitGumbelParams censoredParamsFromJson(const json& j) {
  const int d = j.at("xiX").get<std::vector<double>>().size();
  hte::TobitGumbelParams psi;
  rejectUnknownKeys(j, {"xi0", "xiX", "sigma0", "lambda0", "lambda1", "lambdaX", "sigma1",
                        "beta0", "beta1", "beta2", "betaX"},
                    "dgp.params");
  psi.xi0 = j.at("xi0").get<double>();
  psi.xiX = j.at("xiX").get<std::vector<double>>();
  psi.sigma0 = j.at("sigma0").get<double>();
  psi.lambda0 = j.at("lambda0").get<double>();
  psi.lambda1 = j.at("lambda1").get<double>();
  psi.lambdaX = j.at("lambdaX").get<std::vector<double>>();
  psi.sigma1 = j.at("sigma1").get<double>();
  psi.beta0 = j.at("beta0").get<double>();
  psi.beta1 = j.at("beta1").get<double>();
  psi.beta2 = j.at("beta2").get<double>();
  psi.betaX = j.at("betaX").get<std::vector<double>>();
  if (psi.d() != d) throw hte::ConfigError("config: censored dgp covariate dims disagree");
  return psi;
}

struct SamplerSection {
  hte::PosteriorTarget target = hte::PosteriorTarget::QUASI_BAYES;
  int iterations = 3000;
  int warmup = 1000;
  int quadratureOrder = hte::kDefaultQuadratureOrder;
};

SamplerSection parseSamplerSection(const json& cfg) {
  SamplerSection s;
  if (!cfg.contains("sampler")) return s;
  const json& j = cfg.at("sampler");
  rejectUnknownKeys(j, {"target", "iterations", "warmup", "quadratureOrder"}, "sampler");
  if (j.contains("target")) {
    const auto t = j.at("target").get<std::string>();
    if (t == "marginal")
      s.target = hte::PosteriorTarget::MARGINAL_BAYES;
    else if (t == "augmented")
      s.target = hte::PosteriorTarget::AUGMENTED_BAYES;
    else if (t == "quasi")
      s.target = hte::PosteriorTarget::QUASI_BAYES;
    else
      throw hte::ConfigError("config: unknown sampler target '" + t + "'");
  }
  if (j.contains("iterations")) s.iterations = j.at("iterations").get<int>();
  if (j.contains("warmup")) s.warmup = j.at("warmup").get<int>();
  if (j.contains("quadratureOrder")) s.quadratureOrder = j.at("quadratureOrder").get<int>();
  return s;
}

void writeJson(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw hte::ConfigError("cannot open output file: " + path.string());
  out << j.dump(2) << "\n";
}

int cmdSimulate(const std::string& configPath, std::uint64_t seed, const std::string& outDir) {
  const json cfg = loadConfig(configPath);
  rejectUnknownKeys(cfg, {"schemaVersion", "dgp"}, "top level");
  if (!cfg.contains("dgp")) throw hte::ConfigError("config: simulate requires a dgp section");
  const json& dgp = cfg.at("dgp");
  rejectUnknownKeys(dgp, {"model", "params", "n", "xSd", "setup"}, "dgp");

  hte::SimulationConfig sim;
  sim.n = dgp.at("n").get<int>();
  sim.seed = seed;
  if (dgp.contains("xSd")) sim.xSd = dgp.at("xSd").get<double>();
  if (dgp.contains("setup")) sim.setup = parseSetup(dgp.at("setup").get<std::string>());

  const std::string model = dgp.value("model", std::string("gaussian"));
  hte::Dataset data;
  if (model == "gaussian") {
    sim.dgp = dgp.contains("params") && dgp.at("params").is_object()
                  ? gaussianParamsFromJson(dgp.at("params"))
                  : hte::GaussianModelParams::simulationTruth();
    data = hte::simulateGaussianStudy(sim);
  } else if (model == "censored") {
    if (!dgp.contains("params"))
      throw hte::ConfigError("config: censored simulation requires dgp.params");
    sim.dgp = censoredParamsFromJson(dgp.at("params"));
    data = hte::simulateTobitGumbelStudy(sim);
  } else {
    throw hte::ConfigError("config: unknown model '" + model + "'");
  }

  fs::create_directories(outDir);
  hte::writeDatasetCsv(data, (fs::path(outDir) / "dataset.csv").string());
  return 0;
}

int cmdEstimate(const std::string& model, const std::string& targetFlag,
                const std::string& configPath, std::uint64_t seed, const std::string& outDir) {
  const json cfg = loadConfig(configPath);
  rejectUnknownKeys(cfg, {"schemaVersion", "data", "sampler", "gmm", "estimands"}, "top level");
  if (!cfg.contains("data")) throw hte::ConfigError("config: estimate requires a data section");
  const json& dataSec = cfg.at("data");
  rejectUnknownKeys(dataSec, {"path", "setup", "aux"}, "data");

  const auto setup = parseSetup(dataSec.value("setup", std::string("RCT_ONE_SIDED")));
  hte::Dataset data = hte::readDatasetCsv(dataSec.at("path").get<std::string>(), setup,
                                          model == "censored");
  if (setup == hte::StudySetup::OBS_MACRO) {
    if (!dataSec.contains("aux"))
      throw hte::ConfigError("config: OBS_MACRO requires the data.aux key (auxiliary moments)");
    data.aux = hte::auxMomentsFromJson(dataSec.at("aux"));
  }

  SamplerSection sampler = parseSamplerSection(cfg);
  if (targetFlag == "marginal") sampler.target = hte::PosteriorTarget::MARGINAL_BAYES;
  if (targetFlag == "augmented") sampler.target = hte::PosteriorTarget::AUGMENTED_BAYES;
  if (targetFlag == "quasi") sampler.target = hte::PosteriorTarget::QUASI_BAYES;
  hte::GmmConfig gmm;
  if (cfg.contains("gmm")) {
    rejectUnknownKeys(cfg.at("gmm"), {"weight"}, "gmm");
    const auto w = cfg.at("gmm").value("weight", std::string("identity"));
    if (w == "identity")
      gmm.weight = hte::GmmConfig::Weight::IDENTITY;
    else if (w == "twoStep")
      gmm.weight = hte::GmmConfig::Weight::TWO_STEP;
    else
      throw hte::ConfigError("config: unknown gmm weight '" + w + "'");
  }
  int gridPoints = 101;
  if (cfg.contains("estimands")) {
    rejectUnknownKeys(cfg.at("estimands"), {"gridPoints"}, "estimands");
    gridPoints = cfg.at("estimands").value("gridPoints", 101);
  }

  fs::create_directories(outDir);

  hte::PosteriorDraws draws;
  json paramsJson, estimandsJson, diagnosticsJson;
  paramsJson["schemaVersion"] = hte::kSchemaVersion;
  estimandsJson["schemaVersion"] = hte::kSchemaVersion;
  diagnosticsJson["schemaVersion"] = hte::kSchemaVersion;

  if (model == "gaussian") {
    hte::PosteriorSpec spec;
    spec.target = sampler.target;
    spec.data = &data;
    spec.quadratureOrder = sampler.quadratureOrder;
    std::optional<hte::AuxiliaryMoments> aux;
    if (sampler.target == hte::PosteriorTarget::QUASI_BAYES) {
      aux = data.aux ? *data.aux : hte::auxFromControlArm(data);
      spec.gmm = gmm;
      spec.aux = aux;
    }
    draws = hte::runChain(spec, sampler.iterations, sampler.warmup, seed);

    const hte::PosteriorEstimands est =
        hte::posteriorEstimands(draws, data, aux, sampler.quadratureOrder);
    estimandsJson["ate"] = hte::summaryToJson(est.ate);
    estimandsJson["att"] = hte::summaryToJson(est.att);
    estimandsJson["atu"] = hte::summaryToJson(est.atu);

    const hte::HteCurve curve = hte::hteCurve(draws, data, hte::defaultHteGrid(data, gridPoints));
    hte::writeHteCurveCsv(curve, (fs::path(outDir) / "hte_curve.csv").string());
  } else if (model == "censored") {
    hte::CensoredFitConfig fit;
    fit.quadratureOrder = std::max(sampler.quadratureOrder, 32);
    draws = hte::runCensoredChain(data, fit, sampler.iterations, sampler.warmup, seed);

    std::vector<double> positives;
    for (const auto& u : data.units) {
      if (u.y0 && *u.y0 > 0.0) positives.push_back(*u.y0);
      if (u.y1 && *u.y1 > 0.0) positives.push_back(*u.y1);
    }
    std::sort(positives.begin(), positives.end());
    const double lo = positives[positives.size() / 50];
    const double hi = positives[positives.size() - 1 - positives.size() / 50];
    std::vector<double> grid(static_cast<std::size_t>(gridPoints));
    for (int i = 0; i < gridPoints; ++i)
      grid[static_cast<std::size_t>(i)] =
          lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(gridPoints - 1);
    const hte::CensoredHteCurve curve =
        hte::censoredHteCurve(draws, data, grid, fit.quadratureOrder);
    hte::writeHteCurveCsv(curve.curve, (fs::path(outDir) / "hte_curve.csv").string());
    estimandsJson["atomAtZero"] = hte::summaryToJson(curve.atom);
  } else {
    throw hte::ConfigError("unknown model '" + model + "' (use gaussian or censored)");
  }

  paramsJson["parameters"] = json::array();
  std::vector<double> col(static_cast<std::size_t>(draws.retained()));
  for (Eigen::Index p = 0; p < draws.parameterDraws.cols(); ++p) {
    for (int i = 0; i < draws.retained(); ++i) col[static_cast<std::size_t>(i)] =
        draws.parameterDraws(i, p);
    const hte::EstimandSummary s = hte::detail::summarize(col);
    json row = hte::summaryToJson(s);
    row["name"] = draws.parameterNames[static_cast<std::size_t>(p)];
    paramsJson["parameters"].push_back(row);
  }

  const hte::ConvergenceReport conv = hte::convergenceDiagnostics({draws});
  diagnosticsJson["rhat"] = conv.rhatPerParam;
  diagnosticsJson["ess"] = conv.essPerParam;
  diagnosticsJson["acceptanceRates"] = draws.acceptanceRates;
  diagnosticsJson["seed"] = seed;

  writeJson(fs::path(outDir) / "params.json", paramsJson);
  writeJson(fs::path(outDir) / "estimands.json", estimandsJson);
  writeJson(fs::path(outDir) / "diagnostics.json", diagnosticsJson);
  return 0;
}

int cmdReplicate(const std::string& configPath, std::uint64_t seed, const std::string& outDir,
                 int threads) {
  const json cfg = loadConfig(configPath);
  rejectUnknownKeys(cfg, {"schemaVersion", "dgp", "sampler", "gmm", "replicate"}, "top level");

  hte::ReplicationConfig rc;
  rc.baseSeed = seed;
  rc.threads = threads;
  if (cfg.contains("dgp")) {
    const json& dgp = cfg.at("dgp");
    rejectUnknownKeys(dgp, {"model", "params", "n", "xSd", "setup"}, "dgp");
    if (dgp.contains("params") && dgp.at("params").is_object())
      rc.dgp = gaussianParamsFromJson(dgp.at("params"));
    if (dgp.contains("n")) rc.n = dgp.at("n").get<int>();
    if (dgp.contains("xSd")) rc.xSd = dgp.at("xSd").get<double>();
    if (dgp.contains("setup")) rc.setup = parseSetup(dgp.at("setup").get<std::string>());
  }
  const SamplerSection sampler = parseSamplerSection(cfg);
  rc.target = sampler.target;
  rc.iterations = sampler.iterations;
  rc.warmup = sampler.warmup;
  rc.quadratureOrder = sampler.quadratureOrder;
  if (cfg.contains("replicate")) {
    const json& rep = cfg.at("replicate");
    rejectUnknownKeys(rep, {"replications", "trueAte"}, "replicate");
    if (rep.contains("replications")) rc.replications = rep.at("replications").get<int>();
    if (rep.contains("trueAte")) rc.trueAte = rep.at("trueAte").get<double>();
  }
  if (rc.trueAte == 0.0)
    rc.trueAte = hte::trueEstimandOracle(rc.dgp, rc.xSd, 100000).ate;

  fs::create_directories(outDir);
  rc.artifactDir = (fs::path(outDir) / "replications").string();
  const hte::ReplicationSummary summary = hte::replicate(rc);
  writeJson(fs::path(outDir) / "summary.json", hte::replicationSummaryToJson(summary));
  return 0;
}

int cmdIdentify(const std::string& configPath, const std::string& outDir) {
  const json cfg = loadConfig(configPath);
  rejectUnknownKeys(cfg, {"schemaVersion", "identify"}, "top level");
  if (!cfg.contains("identify"))
    throw hte::ConfigError("config: identify requires an identify section");
  const json& sec = cfg.at("identify");
  rejectUnknownKeys(sec, {"params", "xRange", "y0Range", "nX", "nY0", "tolerance"}, "identify");

  const hte::GaussianModelParams psi = sec.contains("params")
                                           ? gaussianParamsFromJson(sec.at("params"))
                                           : hte::GaussianModelParams::simulationTruth();
  const auto xRange = sec.value("xRange", std::vector<double>{-4.5, 4.5});
  const auto y0Range = sec.value("y0Range", std::vector<double>{-1.0, 3.0});
  const int nX = sec.value("nX", 15);
  const int nY0 = sec.value("nY0", 15);
  const double tol = sec.value("tolerance", 1e-8);
  if (xRange.size() != 2 || y0Range.size() != 2)
    throw hte::ConfigError("config: xRange and y0Range must be [lo, hi]");

  const hte::CompletenessReport report = hte::completenessDiagnostic(
      psi, hte::linspace(xRange[0], xRange[1], nX), hte::linspace(y0Range[0], y0Range[1], nY0),
      tol);

  json j;
  j["schemaVersion"] = hte::kSchemaVersion;
  j["numericalRank"] = report.numericalRank;
  j["conditionNumber"] = report.conditionNumber;
  j["smallestSingularValue"] = report.smallestSingularValue;
  j["nX"] = report.nX;
  j["nY0"] = report.nY0;
  j["verdict"] = report.verdict == hte::CompletenessVerdict::COMPLETE_AT_TOLERANCE
                     ? "COMPLETE_AT_TOLERANCE"
                     : "DEFICIENT";
  j["caveat"] = hte::CompletenessReport::kCaveat;
  fs::create_directories(outDir);
  writeJson(fs::path(outDir) / "identify.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous treatment effect estimation under nonignorable assignment"};
  app.require_subcommand(1);

  std::string configPath, outDir = ".", model = "gaussian";
  std::uint64_t seed = 1;
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;

  auto* sim = app.add_subcommand("simulate", "Draw a synthetic study to dataset.csv");
  sim->add_option("--config", configPath)->required();
  sim->add_option("--seed", seed);
  sim->add_option("--out", outDir);

  std::string targetFlag;
  auto* est = app.add_subcommand("estimate", "Fit a model and emit summaries");
  est->alias("fit");
  est->add_option("--model", model)->check(CLI::IsMember({"gaussian", "censored"}));
  est->add_option("--target", targetFlag, "overrides sampler.target in the config")
      ->check(CLI::IsMember({"marginal", "augmented", "quasi"}));
  est->add_option("--config", configPath)->required();
  est->add_option("--seed", seed);
  est->add_option("--out", outDir);

  auto* rep = app.add_subcommand("replicate", "Run the simulation study harness");
  rep->add_option("--config", configPath)->required();
  rep->add_option("--seed", seed);
  rep->add_option("--out", outDir);
  rep->add_option("--threads", threads);

  auto* ident = app.add_subcommand("identify", "Completeness diagnostic for a fitted kernel");
  ident->add_option("--config", configPath)->required();
  ident->add_option("--out", outDir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmdSimulate(configPath, seed, outDir);
    if (est->parsed()) return cmdEstimate(model, targetFlag, configPath, seed, outDir);
    if (rep->parsed()) return cmdReplicate(configPath, seed, outDir, threads);
    if (ident->parsed()) return cmdIdentify(configPath, outDir);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
