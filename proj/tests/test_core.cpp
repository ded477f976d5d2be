#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "hte/core.hpp"
#include "hte/rng.hpp"

using namespace hte;

TEST_CASE("logistic basics") {
  CHECK(logistic(0.0) == Catch::Approx(0.5).margin(1e-15));
  CHECK(logistic(-1.2) == Catch::Approx(0.231475).margin(1e-6));
  for (double t : {-5.0, -1.0, 0.3, 8.0})
    CHECK(logistic(t) + logistic(-t) == Catch::Approx(1.0).margin(1e-15));
  CHECK(std::isfinite(logLogistic(-800.0)));
  CHECK(logLogistic(-800.0) == Catch::Approx(-800.0).margin(1e-9));
  for (double t : {-3.0, 0.0, 2.5})
    CHECK(logOneMinusLogistic(t) == Catch::Approx(std::log(1.0 - logistic(t))).margin(1e-12));
}

TEST_CASE("normal density, cdf, quantile") {
  CHECK(normalCdf(0.0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(normalPdf(0.0, 0.0, 1.0) == Catch::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).margin(1e-14));
  for (double p : {1e-6, 0.025, 0.31, 0.5, 0.975, 1.0 - 1e-6})
    CHECK(normalCdf(normalQuantile(p)) == Catch::Approx(p).margin(1e-10));
  CHECK_THROWS_AS(normalLogPdf(0.0, 0.0, -1.0), DomainError);
}

TEST_CASE("censored normal mean closed form") {
  CHECK(censoredNormalMean(0.0, 1.0) ==
        Catch::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).margin(1e-12));
  // large positive mean: censoring inactive
  CHECK(censoredNormalMean(8.0, 0.5) == Catch::Approx(8.0).margin(1e-10));
}

TEST_CASE("gumbel distribution") {
  CHECK(gumbelCdf(0.0, 0.0, 1.0) == Catch::Approx(std::exp(-1.0)).margin(1e-12));
  for (double y : {-2.0, 0.0, 3.0})
    CHECK(gumbelQuantile(gumbelCdf(y, 0.3, 1.7), 0.3, 1.7) == Catch::Approx(y).margin(1e-10));
  const GumbelValue v = gumbelDistribution(1.0, 0.0, 2.0);
  CHECK(v.logDensity == Catch::Approx(gumbelLogPdf(1.0, 0.0, 2.0)).margin(1e-14));
  CHECK(v.cdf == Catch::Approx(gumbelCdf(1.0, 0.0, 2.0)).margin(1e-14));
  CHECK_THROWS_AS(gumbelLogPdf(0.0, 0.0, 0.0), DomainError);

  CounterRng rng(77, 0, 9);
  double sum = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) sum += rng.gumbel(0.0, 1.0);
  CHECK(sum / n == Catch::Approx(kEulerMascheroni).margin(0.005));
}

TEST_CASE("gauss-hermite expectation") {
  CHECK(gaussHermiteExpectation([](double) { return 1.0; }, 0.7, 2.0) ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(gaussHermiteExpectation([](double y) { return y; }, 1.0, 0.5) ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(gaussHermiteExpectation([](double y) { return y * y; }, 1.0, 0.5) ==
        Catch::Approx(1.25).margin(1e-10));
  // standard-normal moments up to order 6
  const double moments[] = {1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0};
  for (int k = 0; k <= 6; ++k)
    CHECK(gaussHermiteExpectation([k](double y) { return std::pow(y, k); }, 0.0, 1.0) ==
          Catch::Approx(moments[k]).margin(1e-8));
  CHECK_THROWS_AS(gaussHermiteRule(0), ConfigError);
}

TEST_CASE("gauss-legendre rule on (0,1)") {
  const QuadratureRule rule = gaussLegendreRule01(16);
  double wsum = 0.0, x5 = 0.0;
  for (int i = 0; i < rule.order; ++i) {
    wsum += rule.weights[static_cast<std::size_t>(i)];
    x5 += rule.weights[static_cast<std::size_t>(i)] *
          std::pow(rule.nodes[static_cast<std::size_t>(i)], 5);
  }
  CHECK(wsum == Catch::Approx(1.0).margin(1e-12));
  CHECK(x5 == Catch::Approx(1.0 / 6.0).margin(1e-12));
  // gumbel density integrates to one under the transform
  const QuadratureRule r01 = gaussLegendreRule01(32);
  double total = 0.0;
  for (int i = 0; i < r01.order; ++i) total += r01.weights[static_cast<std::size_t>(i)];
  CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("log-sum-exp and pairwise sum") {
  const std::vector<double> v = {-1000.0, -1000.5, -999.2};
  double direct = 0.0;
  for (double t : v) direct += std::exp(t + 1000.0);
  CHECK(logSumExp(v) == Catch::Approx(std::log(direct) - 1000.0).margin(1e-12));

  std::vector<double> w(1001);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1e-3 * static_cast<double>(i % 7) - 0.2;
  long double ref = 0.0;
  for (double t : w) ref += t;
  CHECK(pairwiseSum(w) == Catch::Approx(static_cast<double>(ref)).margin(1e-12));
}

TEST_CASE("counter rng streams are deterministic and disjoint") {
  CounterRng a(11, 3, 2), b(11, 3, 2), c(11, 4, 2);
  CHECK(a.uniform() == b.uniform());
  CHECK(a.normal() == b.normal());
  CHECK(a.uniform() != c.uniform());
  CounterRng d(11, 3, 2);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = d.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
}
