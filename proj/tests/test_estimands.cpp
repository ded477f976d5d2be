#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hte/estimands.hpp"
#include "hte/rng.hpp"
#include "hte/simulate.hpp"

using namespace hte;

namespace {

PosteriorDraws frozenDraws(const GaussianModelParams& psi, int rows = 1) {
  PosteriorDraws d;
  const std::vector<double> v = psi.toVector();
  d.parameterDraws.resize(rows, static_cast<Eigen::Index>(v.size()));
  for (int r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < v.size(); ++j)
      d.parameterDraws(r, static_cast<Eigen::Index>(j)) = v[j];
  d.parameterNames = GaussianModelParams::parameterNames();
  return d;
}

Dataset fixture(std::int64_t n, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.dgp = GaussianModelParams::simulationTruth();
  cfg.seed = seed;
  return simulateGaussianStudy(cfg);
}

}  // namespace

TEST_CASE("hte curve at a frozen truth draw") {
  const GaussianModelParams truth = GaussianModelParams::simulationTruth();
  const Dataset data = fixture(20'000, 101);
  const PosteriorDraws draws = frozenDraws(truth);

  const HteCurve curve = hteCurve(draws, data, {1.0});
  CHECK(curve.mean[0] == Catch::Approx(0.9).margin(0.02));

  // no x dependence in mu1: importance weights cancel exactly
  GaussianModelParams flat = truth;
  flat.theta11 = 0.0;
  const HteCurve flatCurve =
      hteCurve(frozenDraws(flat), data, {0.0, 0.5, 1.0, 2.0});
  for (std::size_t i = 0; i < flatCurve.grid.size(); ++i) {
    const double y0 = flatCurve.grid[i];
    CHECK(flatCurve.mean[i] ==
          Catch::Approx(flat.theta10 + flat.theta12 * y0 + flat.theta13 * y0 * y0 - y0)
              .margin(1e-10));
  }

  CHECK_THROWS_AS(hteCurve(draws, data, {1.0, 1.0}), ConfigError);
}

TEST_CASE("hte curve uncertainty grows in the tail") {
  const GaussianModelParams truth = GaussianModelParams::simulationTruth();
  const Dataset data = fixture(5'000, 55);
  // jitter the curvature parameter across draws
  PosteriorDraws draws = frozenDraws(truth, 50);
  CounterRng rng(7, 0, 3);
  for (int r = 0; r < 50; ++r) draws.parameterDraws(r, 5) += 0.02 * rng.normal();

  const std::vector<double> grid = defaultHteGrid(data);
  REQUIRE(grid.size() == 101);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);

  const HteCurve curve = hteCurve(draws, data, grid);
  const std::size_t mid = 50, edge = 100;
  CHECK(curve.hi95[edge] - curve.lo95[edge] >= curve.hi95[mid] - curve.lo95[mid]);
}

TEST_CASE("hte curve flags points with no importance mass") {
  const Dataset data = fixture(500, 77);
  const HteCurve curve =
      hteCurve(frozenDraws(GaussianModelParams::simulationTruth()), data, {1.0, 1.0e5});
  CHECK_FALSE(curve.flagged[0]);
  CHECK(curve.flagged[1] == 1);
  CHECK(std::isnan(curve.mean[1]));
}

TEST_CASE("odds weights") {
  const GaussianModelParams truth = GaussianModelParams::simulationTruth();
  Dataset data;
  auto addZ0 = [&](double y0, double x) {
    UnitRecord u;
    u.id = static_cast<std::int64_t>(data.units.size());
    u.r = 1;
    u.z = 0;
    u.x = {x};
    u.y0 = y0;
    data.units.push_back(u);
  };
  addZ0(1.0, 0.0);
  addZ0(2.0, 0.0);
  // propensities 0.8 and 0.2 (odds 4 and 0.25) realized through beta2
  GaussianModelParams mixed = truth;
  mixed.beta1 = 0.0;
  const double b2 = (std::log(0.8 / 0.2) - std::log(0.2 / 0.8)) / (1.0 - 2.0);
  mixed.beta2 = b2;
  mixed.beta0 = std::log(0.8 / 0.2) - b2 * 1.0;
  const std::vector<double> w = oddsWeights(data, mixed);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == Catch::Approx(0.941176).margin(1e-6));
  CHECK(w[1] == Catch::Approx(0.058824).margin(1e-6));

  // constant propensity: uniform weights
  GaussianModelParams constant = truth;
  constant.beta1 = constant.beta2 = 0.0;
  constant.beta0 = 0.0;
  const std::vector<double> u = oddsWeights(data, constant);
  CHECK(u[0] == Catch::Approx(0.5).margin(1e-12));
  CHECK(u[1] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("posterior estimands at a frozen truth draw") {
  const GaussianModelParams truth = GaussianModelParams::simulationTruth();
  const Dataset data = fixture(20'000, 9);
  const PosteriorDraws draws = frozenDraws(truth);

  const PosteriorEstimands est = posteriorEstimands(draws, data, std::nullopt);
  CHECK(est.ate.mean == Catch::Approx(0.688).margin(0.02));
  CHECK(est.ateDraws.size() == 1);

  // degenerate case: constant treated mean
  GaussianModelParams flat = truth;
  flat.theta11 = flat.theta12 = flat.theta13 = 0.0;
  AuxiliaryMoments aux;
  aux.meanY0 = 1.0;
  aux.meanX = {0.0};
  aux.probZ0 = 0.6;
  const PosteriorEstimands flatEst =
      posteriorEstimands(frozenDraws(flat), data, aux);
  CHECK(flatEst.ate.mean == Catch::Approx(flat.theta10 - 1.0).margin(1e-10));
}

TEST_CASE("att from latents agrees with the odds-weight route") {
  const GaussianModelParams truth = GaussianModelParams::simulationTruth();
  SimulationConfig cfg;
  // The odds weights are heavy-tailed (effective sample size is a few percent
  // of the z=0 arm), so a large n is needed before the two routes agree.
  cfg.n = 200'000;
  cfg.dgp = truth;
  cfg.seed = 5;
  const Dataset data = simulateGaussianStudy(cfg);

  // regenerate the simulation's true y0 for treated units as a perfect latent
  std::vector<double> trueLatents;
  for (const auto& u : data.units) {
    if (!u.treated()) continue;
    const double y0 =
        CounterRng(cfg.seed, static_cast<std::uint64_t>(u.id), 2).normal(truth.mu0(u.x[0]),
                                                                         truth.sigma0);
    trueLatents.push_back(y0);
  }

  PosteriorDraws withLatents = frozenDraws(truth);
  withLatents.latentDraws.emplace(1, static_cast<Eigen::Index>(trueLatents.size()));
  for (std::size_t j = 0; j < trueLatents.size(); ++j)
    (*withLatents.latentDraws)(0, static_cast<Eigen::Index>(j)) = trueLatents[j];

  const PosteriorEstimands viaLatents = posteriorEstimands(withLatents, data, std::nullopt);
  const PosteriorEstimands viaWeights =
      posteriorEstimands(frozenDraws(truth), data, std::nullopt);
  CHECK(viaLatents.att.mean == Catch::Approx(viaWeights.att.mean).margin(0.02));

  // the same consistency seen directly through the weights
  std::vector<const UnitRecord*> z0;
  for (const auto& u : data.units)
    if (u.r == 1 && u.z && *u.z == 0) z0.push_back(&u);
  const std::vector<double> w = oddsWeights(data, truth);
  double weighted = 0.0;
  for (std::size_t i = 0; i < z0.size(); ++i) weighted += w[i] * *z0[i]->y0;
  double latentMean = 0.0;
  for (double v : trueLatents) latentMean += v;
  latentMean /= static_cast<double>(trueLatents.size());
  CHECK(weighted == Catch::Approx(latentMean).margin(0.02));
}

TEST_CASE("policy welfare") {
  const GaussianModelParams truth = GaussianModelParams::simulationTruth();
  const Dataset data = fixture(200'000, 31);
  const PosteriorDraws draws = frozenDraws(truth);

  const EstimandSummary empty =
      policyWelfare([](std::span<const double>) { return false; }, draws, data);
  double mu0Mean = 0.0;
  for (const auto& u : data.units) mu0Mean += truth.mu0(u.x[0]);
  mu0Mean /= static_cast<double>(data.units.size());
  CHECK(empty.mean == Catch::Approx(mu0Mean).margin(1e-12));

  const EstimandSummary full =
      policyWelfare([](std::span<const double>) { return true; }, draws, data);
  const PosteriorEstimands est = posteriorEstimands(draws, data, std::nullopt);
  CHECK(full.mean - empty.mean == Catch::Approx(est.ate.mean).margin(1e-10));

  // treat exactly those with positive covariate; brute-force oracle
  const EstimandSummary half =
      policyWelfare([](std::span<const double> x) { return x[0] > 0.0; }, draws, data);
  double mc = 0.0;
  const int draws6 = 1'000'000;
  for (int i = 0; i < draws6; ++i) {
    CounterRng rng(123, static_cast<std::uint64_t>(i), 6);
    const double x = rng.normal(0.0, 1.5);
    const double y0 = rng.normal(truth.mu0(x), truth.sigma0);
    mc += x > 0.0 ? rng.normal(truth.mu1(y0, x), truth.sigma1) : y0;
  }
  mc /= static_cast<double>(draws6);
  CHECK(half.mean == Catch::Approx(mc).margin(0.01));
}
