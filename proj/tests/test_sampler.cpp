#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hte/rng.hpp"
#include "hte/sampler.hpp"

using namespace hte;

TEST_CASE("quasi acceptance probability") {
  CHECK(quasiAcceptProbability(-1.0, -1.0) == 1.0);
  CHECK(quasiAcceptProbability(-1.7, -1.0) == Catch::Approx(0.496585).margin(1e-6));
  CHECK(quasiAcceptProbability(2.0, -3.0) == 1.0);
  CHECK_THROWS_AS(quasiAcceptProbability(std::nan(""), 0.0), DomainError);
}

TEST_CASE("metropolis on a standard normal target") {
  MhTarget target;
  target.paramDim = 1;
  target.logDensity = [](std::span<const double> v, std::span<const double>) {
    return -0.5 * v[0] * v[0];
  };
  MhOptions opt;
  opt.iterations = 51'000;
  opt.warmup = 1'000;
  opt.seed = 31;
  const PosteriorDraws draws = runMetropolis(target, {2.5}, {}, opt);
  REQUIRE(draws.retained() == 50'000);

  const double mean = draws.parameterDraws.col(0).mean();
  const double var =
      (draws.parameterDraws.col(0).array() - mean).square().sum() / (draws.retained() - 1.0);
  CHECK(mean == Catch::Approx(0.0).margin(0.02));
  CHECK(var == Catch::Approx(1.0).epsilon(0.02));
  // adapted step should be near the 0.44 univariate target
  CHECK(draws.acceptanceRates[0] > 0.3);
  CHECK(draws.acceptanceRates[0] < 0.6);

  const PosteriorDraws again = runMetropolis(target, {2.5}, {}, opt);
  CHECK((draws.parameterDraws - again.parameterDraws).norm() == 0.0);
  MhOptions other = opt;
  other.seed = 32;
  CHECK((runMetropolis(target, {2.5}, {}, other).parameterDraws - draws.parameterDraws).norm() >
        0.0);
}

TEST_CASE("metropolis on a correlated bivariate normal") {
  const double rho = 0.8;
  MhTarget target;
  target.paramDim = 2;
  target.logDensity = [rho](std::span<const double> v, std::span<const double>) {
    return -0.5 / (1.0 - rho * rho) * (v[0] * v[0] - 2.0 * rho * v[0] * v[1] + v[1] * v[1]);
  };
  MhOptions opt;
  opt.iterations = 60'000;
  opt.warmup = 5'000;
  opt.seed = 8;
  const PosteriorDraws draws = runMetropolis(target, {0.0, 0.0}, {}, opt);
  const auto c0 = draws.parameterDraws.col(0), c1 = draws.parameterDraws.col(1);
  const double m0 = c0.mean(), m1 = c1.mean();
  const double n = static_cast<double>(draws.retained());
  CHECK(m0 == Catch::Approx(0.0).margin(0.05));
  CHECK((c0.array() - m0).square().sum() / n == Catch::Approx(1.0).margin(0.06));
  CHECK(((c0.array() - m0) * (c1.array() - m1)).sum() / n == Catch::Approx(rho).margin(0.06));
}

TEST_CASE("latent sweep with cached joint density") {
  // param v ~ N(0,1); latent | v ~ N(v, 1); latent marginal is N(0, 2)
  MhTarget target;
  target.paramDim = 1;
  target.latentDim = 1;
  target.logDensity = [](std::span<const double> v, std::span<const double> lat) {
    return -0.5 * v[0] * v[0] - 0.5 * (lat[0] - v[0]) * (lat[0] - v[0]);
  };
  target.latentLogConditional = [](int, double val, std::span<const double> v,
                                   std::span<const double>) {
    return -0.5 * (val - v[0]) * (val - v[0]);
  };
  MhOptions opt;
  opt.iterations = 60'000;
  opt.warmup = 5'000;
  opt.seed = 90;
  const PosteriorDraws draws = runMetropolis(target, {0.0}, {0.0}, opt);
  REQUIRE(draws.latentDraws);
  const auto lat = draws.latentDraws->col(0);
  const double mean = lat.mean();
  const double var = (lat.array() - mean).square().sum() / (draws.retained() - 1.0);
  CHECK(mean == Catch::Approx(0.0).margin(0.05));
  CHECK(var == Catch::Approx(2.0).margin(0.12));
  CHECK(draws.acceptanceRates.size() == 2);
}

TEST_CASE("metropolis input validation") {
  MhTarget target;
  target.paramDim = 1;
  target.logDensity = [](std::span<const double>, std::span<const double>) { return 0.0; };
  MhOptions opt;
  opt.iterations = 10;
  opt.warmup = 10;
  CHECK_THROWS_AS(runMetropolis(target, {0.0}, {}, opt), ConfigError);
  opt.warmup = 5;
  CHECK_THROWS_AS(runMetropolis(target, {0.0, 1.0}, {}, opt), ShapeError);

  // a target that is nowhere finite exhausts initialization retries
  MhTarget bad = target;
  bad.logDensity = [](std::span<const double>, std::span<const double>) {
    return -std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(runMetropolis(bad, {0.0}, {}, opt), InitializationError);
}

namespace {
PosteriorDraws iidChain(int n, std::uint64_t seed, double shift = 0.0, double scale = 1.0) {
  PosteriorDraws d;
  d.parameterDraws.resize(n, 1);
  CounterRng rng(seed, 0, 7);
  for (int i = 0; i < n; ++i) d.parameterDraws(i, 0) = shift + scale * rng.normal();
  d.parameterNames = {"p"};
  return d;
}
}  // namespace

TEST_CASE("convergence diagnostics") {
  const PosteriorDraws a = iidChain(10'000, 1);
  const ConvergenceReport same = convergenceDiagnostics({a, a});
  CHECK(same.rhatPerParam[0] == Catch::Approx(1.0).margin(0.005));
  CHECK(same.essPerParam[0] > 0.85 * 20'000.0);

  const ConvergenceReport solo = convergenceDiagnostics({iidChain(10'000, 2)});
  CHECK(solo.essPerParam[0] > 8'500.0);
  CHECK(solo.essPerParam[0] < 11'500.0);

  PosteriorDraws frozen = iidChain(10'000, 3, 0.0, 0.0);  // constant chain
  frozen.parameterDraws.array() += 3.0;
  const ConvergenceReport diverged = convergenceDiagnostics({frozen, iidChain(10'000, 4)});
  CHECK(diverged.rhatPerParam[0] > 1.2);

  CHECK_THROWS_AS(convergenceDiagnostics({}), DiagnosticError);
  CHECK_THROWS_AS(convergenceDiagnostics({iidChain(50, 5)}), DiagnosticError);
}
