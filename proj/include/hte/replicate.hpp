#pragma once

// Replication harness: R independent simulate -> fit -> summarize pipelines
// with seeds base+1..base+R, distributed across a worker pool. Per-replication
// artifacts can be persisted as JSON and the summary recomputed from them.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hte/baselines.hpp"
#include "hte/estimands.hpp"
#include "hte/model.hpp"
#include "hte/sampler.hpp"
#include "hte/simulate.hpp"

namespace hte {

struct ReplicationConfig {
  GaussianModelParams dgp = GaussianModelParams::simulationTruth();
  double xSd = 1.5;
  StudySetup setup = StudySetup::RCT_ONE_SIDED;
  int n = 1000;
  int replications = 50;
  int iterations = 3000;
  int warmup = 1000;
  std::uint64_t baseSeed = 20230901;
  int threads = 8;
  PosteriorTarget target = PosteriorTarget::QUASI_BAYES;
  PriorSpec prior;
  GmmConfig gmm;
  int quadratureOrder = kDefaultQuadratureOrder;
  double trueAte = 0.0;           // reference value for coverage and MSE
  std::string artifactDir;        // empty -> no files written

  void validate() const {
    if (n < 10) throw ConfigError("ReplicationConfig: n too small");
    if (replications < 1) throw ConfigError("ReplicationConfig: need at least one replication");
    if (threads < 1) throw ConfigError("ReplicationConfig: threads must be positive");
  }
};

struct ReplicationResult {
  bool failed = false;
  std::string failure;
  std::uint64_t seed = 0;
  std::vector<double> postMean, lo95, hi95;  // per parameter
  double ateMean = 0.0, ateLo = 0.0, ateHi = 0.0;
  BaselineResult meanDiff, ipwe, wald;
  double cStat = 0.0;
};

struct ParameterRow {
  std::string name;
  double trueValue = 0.0;
  double meanOfPosteriorMeans = 0.0;
  double sdOfPosteriorMeans = 0.0;
  double coveragePercent = 0.0;
  double mse = 0.0;
};

struct AteRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double coveragePercent = 0.0;
  double mse = 0.0;
};

struct ReplicationSummary {
  std::vector<ParameterRow> parameterRows;
  std::vector<AteRow> ateRows;  // Proposed, MeanDiff, IPWE, Wald
  double cStatisticMean = 0.0;
  int replications = 0;
  int failedReplications = 0;
};

namespace detail {

inline nlohmann::json replicationResultToJson(const ReplicationResult& r) {
  nlohmann::json j;
  j["failed"] = r.failed;
  j["failure"] = r.failure;
  j["seed"] = r.seed;
  j["postMean"] = r.postMean;
  j["lo95"] = r.lo95;
  j["hi95"] = r.hi95;
  j["ate"] = {{"mean", r.ateMean}, {"lo", r.ateLo}, {"hi", r.ateHi}};
  auto baseline = [](const BaselineResult& b) {
    return nlohmann::json{{"estimate", b.estimate}, {"se", b.se}, {"lo95", b.lo95}, {"hi95", b.hi95}};
  };
  j["meanDiff"] = baseline(r.meanDiff);
  j["ipwe"] = baseline(r.ipwe);
  j["wald"] = baseline(r.wald);
  j["cStat"] = r.cStat;
  return j;
}

inline ReplicationResult replicationResultFromJson(const nlohmann::json& j) {
  ReplicationResult r;
  r.failed = j.at("failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.postMean = j.at("postMean").get<std::vector<double>>();
  r.lo95 = j.at("lo95").get<std::vector<double>>();
  r.hi95 = j.at("hi95").get<std::vector<double>>();
  r.ateMean = j.at("ate").at("mean").get<double>();
  r.ateLo = j.at("ate").at("lo").get<double>();
  r.ateHi = j.at("ate").at("hi").get<double>();
  auto baseline = [](const nlohmann::json& b) {
    BaselineResult out;
    out.estimate = b.at("estimate").get<double>();
    out.se = b.at("se").get<double>();
    out.lo95 = b.at("lo95").get<double>();
    out.hi95 = b.at("hi95").get<double>();
    return out;
  };
  r.meanDiff = baseline(j.at("meanDiff"));
  r.ipwe = baseline(j.at("ipwe"));
  r.wald = baseline(j.at("wald"));
  r.cStat = j.at("cStat").get<double>();
  return r;
}

}  // namespace detail

inline ReplicationResult runOneReplication(const ReplicationConfig& cfg, std::uint64_t seed) {
  ReplicationResult out;
  out.seed = seed;
  try {
    SimulationConfig sim;
    sim.n = cfg.n;
    sim.dgp = cfg.dgp;
    sim.xSd = cfg.xSd;
    sim.seed = seed;
    sim.setup = cfg.setup;
    const Dataset data = simulateGaussianStudy(sim);

    PosteriorSpec spec;
    spec.target = cfg.target;
    spec.data = &data;
    spec.prior = cfg.prior;
    spec.quadratureOrder = cfg.quadratureOrder;
    if (cfg.target == PosteriorTarget::QUASI_BAYES) {
      spec.gmm = cfg.gmm;
      spec.aux = auxFromControlArm(data);
    }
    const PosteriorDraws draws = runChain(spec, cfg.iterations, cfg.warmup, seed);

    const auto dim = static_cast<std::size_t>(draws.parameterDraws.cols());
    out.postMean.resize(dim);
    out.lo95.resize(dim);
    out.hi95.resize(dim);
    std::vector<double> col(static_cast<std::size_t>(draws.retained()));
    for (std::size_t p = 0; p < dim; ++p) {
      for (int i = 0; i < draws.retained(); ++i)
        col[static_cast<std::size_t>(i)] = draws.parameterDraws(i, static_cast<Eigen::Index>(p));
      const EstimandSummary s = detail::summarize(col);
      out.postMean[p] = s.mean;
      out.lo95[p] = s.lo95;
      out.hi95[p] = s.hi95;
    }

    const PosteriorEstimands est =
        posteriorEstimands(draws, data, spec.aux, cfg.quadratureOrder);
    out.ateMean = est.ate.mean;
    out.ateLo = est.ate.lo95;
    out.ateHi = est.ate.hi95;

    out.meanDiff = meanDifference(data);
    const IpweDetail ipwe = ipweAteDetail(data, quadraticPsBasis());
    out.ipwe = ipwe.result;
    out.wald = waldLate(data);
    out.cStat = cStatistic(ipwe.fittedScores, ipwe.fittedZ);
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure = e.what();
  }
  return out;
}

inline ReplicationSummary summarizeReplications(const std::vector<ReplicationResult>& results,
                                                const ReplicationConfig& cfg) {
  ReplicationSummary summary;
  summary.replications = static_cast<int>(results.size());
  std::vector<const ReplicationResult*> ok;
  for (const auto& r : results) {
    if (r.failed)
      ++summary.failedReplications;
    else
      ok.push_back(&r);
  }
  if (ok.empty()) return summary;

  const std::vector<double> truth = cfg.dgp.toVector();
  const auto names = GaussianModelParams::parameterNames();
  const auto nOk = static_cast<double>(ok.size());
  for (std::size_t p = 0; p < truth.size(); ++p) {
    ParameterRow row;
    row.name = names[p];
    row.trueValue = truth[p];
    double sum = 0.0, sumSq = 0.0, cover = 0.0, mse = 0.0;
    for (const auto* r : ok) {
      sum += r->postMean[p];
      sumSq += r->postMean[p] * r->postMean[p];
      if (r->lo95[p] <= truth[p] && truth[p] <= r->hi95[p]) cover += 1.0;
      mse += (r->postMean[p] - truth[p]) * (r->postMean[p] - truth[p]);
    }
    row.meanOfPosteriorMeans = sum / nOk;
    const double var = std::max(0.0, (sumSq - sum * sum / nOk) / std::max(nOk - 1.0, 1.0));
    row.sdOfPosteriorMeans = std::sqrt(var);
    row.coveragePercent = 100.0 * cover / nOk;
    row.mse = mse / nOk;
    summary.parameterRows.push_back(std::move(row));
  }

  struct Accessor {
    std::string name;
    double (*est)(const ReplicationResult&);
    double (*lo)(const ReplicationResult&);
    double (*hi)(const ReplicationResult&);
  };
  const std::vector<Accessor> estimators = {
      {"Proposed", [](const ReplicationResult& r) { return r.ateMean; },
       [](const ReplicationResult& r) { return r.ateLo; },
       [](const ReplicationResult& r) { return r.ateHi; }},
      {"MeanDiff", [](const ReplicationResult& r) { return r.meanDiff.estimate; },
       [](const ReplicationResult& r) { return r.meanDiff.lo95; },
       [](const ReplicationResult& r) { return r.meanDiff.hi95; }},
      {"IPWE", [](const ReplicationResult& r) { return r.ipwe.estimate; },
       [](const ReplicationResult& r) { return r.ipwe.lo95; },
       [](const ReplicationResult& r) { return r.ipwe.hi95; }},
      {"Wald", [](const ReplicationResult& r) { return r.wald.estimate; },
       [](const ReplicationResult& r) { return r.wald.lo95; },
       [](const ReplicationResult& r) { return r.wald.hi95; }},
  };
  for (const auto& acc : estimators) {
    AteRow row;
    row.name = acc.name;
    double sum = 0.0, sumSq = 0.0, cover = 0.0, mse = 0.0;
    for (const auto* r : ok) {
      const double e = acc.est(*r);
      sum += e;
      sumSq += e * e;
      if (acc.lo(*r) <= cfg.trueAte && cfg.trueAte <= acc.hi(*r)) cover += 1.0;
      mse += (e - cfg.trueAte) * (e - cfg.trueAte);
    }
    row.mean = sum / nOk;
    const double var = std::max(0.0, (sumSq - sum * sum / nOk) / std::max(nOk - 1.0, 1.0));
    row.sd = std::sqrt(var);
    row.coveragePercent = 100.0 * cover / nOk;
    row.mse = mse / nOk;
    summary.ateRows.push_back(std::move(row));
  }

  double cSum = 0.0;
  for (const auto* r : ok) cSum += r->cStat;
  summary.cStatisticMean = cSum / nOk;
  return summary;
}

inline std::vector<ReplicationResult> runReplications(const ReplicationConfig& cfg) {
  cfg.validate();
  std::vector<ReplicationResult> results(static_cast<std::size_t>(cfg.replications));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= cfg.replications) return;
      results[static_cast<std::size_t>(k)] =
          runOneReplication(cfg, cfg.baseSeed + static_cast<std::uint64_t>(k) + 1);
    }
  };
  const int nThreads = std::min(cfg.threads, cfg.replications);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nThreads));
  for (int t = 0; t < nThreads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (!cfg.artifactDir.empty()) {
    std::filesystem::create_directories(cfg.artifactDir);
    for (std::size_t k = 0; k < results.size(); ++k) {
      std::ofstream out(std::filesystem::path(cfg.artifactDir) /
                        ("rep_" + std::to_string(k + 1) + ".json"));
      out << detail::replicationResultToJson(results[k]).dump(2) << "\n";
    }
  }
  return results;
}

inline ReplicationSummary replicate(const ReplicationConfig& cfg) {
  return summarizeReplications(runReplications(cfg), cfg);
}

/// Rebuilds the summary from persisted per-replication artifacts.
inline ReplicationSummary summarizeFromArtifacts(const std::string& dir,
                                                 const ReplicationConfig& cfg) {
  std::vector<ReplicationResult> results;
  for (int k = 1;; ++k) {
    const auto path = std::filesystem::path(dir) / ("rep_" + std::to_string(k) + ".json");
    std::ifstream in(path);
    if (!in) break;
    nlohmann::json j;
    in >> j;
    results.push_back(detail::replicationResultFromJson(j));
  }
  if (results.empty()) throw ConfigError("summarizeFromArtifacts: no artifacts found in " + dir);
  return summarizeReplications(results, cfg);
}

inline nlohmann::json replicationSummaryToJson(const ReplicationSummary& s) {
  nlohmann::json j;
  j["schemaVersion"] = 1;
  j["replications"] = s.replications;
  j["failedReplications"] = s.failedReplications;
  j["cStatisticMean"] = s.cStatisticMean;
  j["parameters"] = nlohmann::json::array();
  for (const auto& row : s.parameterRows)
    j["parameters"].push_back({{"name", row.name},
                               {"trueValue", row.trueValue},
                               {"meanOfPosteriorMeans", row.meanOfPosteriorMeans},
                               {"sdOfPosteriorMeans", row.sdOfPosteriorMeans},
                               {"coveragePercent", row.coveragePercent},
                               {"mse", row.mse}});
  j["ate"] = nlohmann::json::array();
  for (const auto& row : s.ateRows)
    j["ate"].push_back({{"name", row.name},
                        {"mean", row.mean},
                        {"sd", row.sd},
                        {"coveragePercent", row.coveragePercent},
                        {"mse", row.mse}});
  return j;
}

}  // namespace hte
