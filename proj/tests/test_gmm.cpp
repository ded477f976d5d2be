#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hte/gmm.hpp"
#include "hte/rng.hpp"
#include "hte/simulate.hpp"

using namespace hte;

TEST_CASE("moment vector reference values") {
  const GaussianModelParams psi = GaussianModelParams::simulationTruth();
  AuxiliaryMoments aux;
  aux.meanX = {0.0};
  aux.meanY0 = 1.0;
  aux.probZ0 = 1.0 - psi.propensity(1.0, 0.0);

  const std::vector<double> x = {0.0};
  const Eigen::VectorXd zero = momentVector(1.0, x, psi, aux);
  REQUIRE(zero.size() == 3);
  for (int j = 0; j < 3; ++j) CHECK(zero(j) == Catch::Approx(0.0).margin(1e-12));

  // propensity at (1, 0) is logistic(-0.6); with probZ0 = 0.5 the first
  // component is 1/(1 - logistic(-0.6)) - 2
  aux.probZ0 = 0.5;
  const Eigen::VectorXd m = momentVector(1.0, x, psi, aux);
  CHECK(m(0) == Catch::Approx(-0.45118).margin(1e-5));
  CHECK(m(1) == Catch::Approx(0.0).margin(1e-12));
  CHECK(m(2) == Catch::Approx(0.0).margin(1e-12));

  aux.momentY0Sq = 2.06;
  CHECK(momentVector(1.0, x, psi, aux).size() == 4);
  CHECK(momentDimension(1, aux) == 4);
}

TEST_CASE("gmm objective quadratic form") {
  // hand value: N0 = 2, identity weight, mbar = (0.1, 0, -0.2) -> -0.05
  const Eigen::Vector3d mbar(0.1, 0.0, -0.2);
  const double q0 = -0.5 * 2.0 * mbar.dot(Eigen::Matrix3d::Identity() * mbar);
  CHECK(q0 == Catch::Approx(-0.05).margin(1e-12));

  // the library computation agrees with the definitional form on real data
  SimulationConfig cfg;
  cfg.n = 400;
  cfg.dgp = GaussianModelParams::simulationTruth();
  cfg.seed = 12;
  const Dataset data = simulateGaussianStudy(cfg);
  const AuxiliaryMoments aux = auxFromControlArm(data);
  const GaussianModelParams psi = GaussianModelParams::simulationTruth();
  GmmConfig gmm;
  long n0 = 0;
  const Eigen::VectorXd avg = averageMoment(data, psi, gmm, aux, &n0);
  CHECK(gmmObjective(psi, data, gmm, aux) ==
        Catch::Approx(-0.5 * static_cast<double>(n0) * avg.squaredNorm()).margin(1e-12));
  CHECK(gmmObjective(psi, data, gmm, aux) <= 0.0);

  // exact moment match gives zero
  Dataset tiny;
  UnitRecord u;
  u.id = 0;
  u.r = 1;
  u.z = 0;
  u.x = {0.0};
  u.y0 = 1.0;
  tiny.units.push_back(u);
  AuxiliaryMoments exact;
  exact.meanX = {0.0};
  exact.meanY0 = 1.0;
  exact.probZ0 = 1.0 - psi.propensity(1.0, 0.0);
  CHECK(gmmObjective(psi, tiny, gmm, exact) == Catch::Approx(0.0).margin(1e-16));
}

TEST_CASE("moment condition holds at the truth") {
  // E[m0 | z=0] = 0 when aux moments match the population and psi is true
  const GaussianModelParams psi = GaussianModelParams::simulationTruth();
  const std::int64_t n = 2'000'000;
  double sumX = 0.0, sumY0 = 0.0;
  long nZ0 = 0;
  std::vector<double> yz0, xz0;
  for (std::int64_t i = 0; i < n; ++i) {
    CounterRng rng(99, static_cast<std::uint64_t>(i), 1);
    const double x = rng.normal(0.0, 1.5);
    const double y0 = rng.normal(psi.mu0(x), psi.sigma0);
    sumX += x;
    sumY0 += y0;
    if (!rng.bernoulli(psi.propensity(y0, x))) {
      yz0.push_back(y0);
      xz0.push_back(x);
      ++nZ0;
    }
  }
  AuxiliaryMoments aux;
  aux.meanX = {sumX / static_cast<double>(n)};
  aux.meanY0 = sumY0 / static_cast<double>(n);
  aux.probZ0 = static_cast<double>(nZ0) / static_cast<double>(n);

  Eigen::Vector3d mbar = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < yz0.size(); ++i) {
    const std::vector<double> x = {xz0[i]};
    mbar += momentVector(yz0[i], x, psi, aux);
  }
  mbar /= static_cast<double>(yz0.size());
  for (int j = 0; j < 3; ++j) CHECK(mbar(j) == Catch::Approx(0.0).margin(0.02));
}

TEST_CASE("weight matrix handling") {
  GmmConfig cfg;
  cfg.weight = GmmConfig::Weight::EXPLICIT;
  cfg.explicitW = Eigen::MatrixXd::Identity(3, 3) * 2.0;
  CHECK(resolveWeightMatrix(cfg, 3)(0, 0) == 2.0);
  CHECK_THROWS_AS(resolveWeightMatrix(cfg, 4), ShapeError);

  cfg.explicitW(0, 1) = 5.0;  // asymmetric
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.explicitW(1, 0) = 5.0;  // symmetric but indefinite
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  // two-step weight is symmetric PSD on simulated data
  SimulationConfig sim;
  sim.n = 500;
  sim.dgp = GaussianModelParams::simulationTruth();
  sim.seed = 3;
  const Dataset data = simulateGaussianStudy(sim);
  const AuxiliaryMoments aux = auxFromControlArm(data);
  GmmConfig id;
  const Eigen::MatrixXd w =
      twoStepWeightMatrix(GaussianModelParams::simulationTruth(), data, id, aux);
  CHECK(w.isApprox(w.transpose(), 1e-8));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("aux moments from the control arm") {
  Dataset data;
  data.d = 1;
  auto addControl = [&](double y0) {
    UnitRecord u;
    u.id = static_cast<std::int64_t>(data.units.size());
    u.r = 0;
    u.x = {0.0};
    u.y0 = y0;
    data.units.push_back(u);
  };
  auto addArm1 = [&](int z) {
    UnitRecord u;
    u.id = static_cast<std::int64_t>(data.units.size());
    u.r = 1;
    u.z = z;
    u.x = {0.0};
    if (z == 1)
      u.y1 = 1.0;
    else
      u.y0 = 1.0;
    data.units.push_back(u);
  };
  addControl(1.0);
  addControl(3.0);
  for (int z : {1, 0, 0, 1}) addArm1(z);
  const AuxiliaryMoments aux = auxFromControlArm(data);
  CHECK(aux.meanY0 == Catch::Approx(2.0).margin(1e-15));
  CHECK(aux.probZ0 == Catch::Approx(0.5).margin(1e-15));
  CHECK(aux.source == AuxiliaryMoments::Source::ESTIMATED_FROM_CONTROL_ARM);

  // large simulated dataset: meanY0 near 1 within 3 standard errors
  SimulationConfig sim;
  sim.n = 100'000;
  sim.dgp = GaussianModelParams::simulationTruth();
  sim.seed = 21;
  const AuxiliaryMoments big = auxFromControlArm(simulateGaussianStudy(sim));
  const double se = std::sqrt(0.6 * 0.6 * 1.5 * 1.5 + 0.25) / std::sqrt(50'000.0);
  CHECK(std::abs(big.meanY0 - 1.0) < 3.0 * se);

  Dataset noControls;
  for (int z : {1, 0}) {
    UnitRecord u;
    u.r = 1;
    u.z = z;
    u.x = {0.0};
    if (z == 1)
      u.y1 = 0.0;
    else
      u.y0 = 0.0;
    noControls.units.push_back(u);
  }
  CHECK_THROWS_AS(auxFromControlArm(noControls), ConfigError);
}
