#pragma once

// Moment functions and the GMM objective Q0 that injects auxiliary
// information on the untreated outcome into the quasi-posterior.

#include <atomic>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hte/core.hpp"
#include "hte/model.hpp"

namespace hte {

struct GmmConfig {
  enum class Weight { IDENTITY, TWO_STEP, EXPLICIT };
  enum class Subsample { R1_Z0, Z0_AND_R0 };

  Weight weight = Weight::IDENTITY;
  Eigen::MatrixXd explicitW;  // used when weight == EXPLICIT (must be symmetric PSD)
  Subsample subsample = Subsample::R1_Z0;

  void validate() const {
    if (weight == Weight::EXPLICIT) {
      if (explicitW.rows() != explicitW.cols() || !explicitW.isApprox(explicitW.transpose(), 1e-10))
        throw ConfigError("GmmConfig: explicit weight matrix must be symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(explicitW);
      if (es.eigenvalues().minCoeff() < -1e-10)
        throw ConfigError("GmmConfig: explicit weight matrix must be PSD");
    }
  }
};

struct GmmDiagnostics {
  std::atomic<long> clampedPropensities{0};
};

namespace detail {
inline double clampedPz0(double propensity, GmmDiagnostics* diag) {
  constexpr double lo = 1e-12;
  double pz0 = 1.0 - propensity;
  if (pz0 < lo || pz0 > 1.0 - lo) {
    if (diag) diag->clampedPropensities.fetch_add(1, std::memory_order_relaxed);
    pz0 = std::clamp(pz0, lo, 1.0 - lo);
  }
  return pz0;
}
}  // namespace detail

inline int momentDimension(int d, const AuxiliaryMoments& aux) {
  return d + 2 + (aux.momentY0Sq ? 1 : 0);
}

/// m0(y0, x, psi): inverse-probability-tilted deviations from the auxiliary
/// moments, zero in expectation over z=0 units at the true parameters.
inline Eigen::VectorXd momentVector(double y0, std::span<const double> x,
                                    const GaussianModelParams& psi, const AuxiliaryMoments& aux,
                                    GmmDiagnostics* diag = nullptr) {
  if (x.size() != aux.meanX.size())
    throw ShapeError("momentVector: covariate dimension mismatch with aux moments");
  const double p = psi.propensity(y0, x.empty() ? 0.0 : x[0]);
  if (p >= 1.0) throw DomainError("momentVector: propensity numerically 1 at y0=" + std::to_string(y0));
  const double pz0 = detail::clampedPz0(p, diag);

  Eigen::VectorXd m(momentDimension(static_cast<int>(x.size()), aux));
  int j = 0;
  m(j++) = 1.0 / pz0 - 1.0 / aux.probZ0;
  for (std::size_t k = 0; k < x.size(); ++k) m(j++) = (x[k] - aux.meanX[k]) / pz0;
  m(j++) = (y0 - aux.meanY0) / pz0;
  if (aux.momentY0Sq) m(j++) = (y0 * y0 - *aux.momentY0Sq) / pz0;
  return m;
}

namespace detail {
template <typename Fn>
inline void forEachMomentUnit(const Dataset& data, GmmConfig::Subsample rule, Fn&& fn) {
  for (const auto& u : data.units) {
    const bool r1z0 = u.r == 1 && u.z && *u.z == 0;
    const bool include = rule == GmmConfig::Subsample::R1_Z0 ? r1z0 : (r1z0 || u.r == 0);
    if (include) fn(u);
  }
}
}  // namespace detail

/// Average of momentVector over the configured subsample; pairwise-summed
/// componentwise for bit-stable results.
inline Eigen::VectorXd averageMoment(const Dataset& data, const GaussianModelParams& psi,
                                     const GmmConfig& cfg, const AuxiliaryMoments& aux,
                                     long* subsampleSize = nullptr,
                                     GmmDiagnostics* diag = nullptr) {
  const int dim = momentDimension(data.d, aux);
  std::vector<std::vector<double>> comps(static_cast<std::size_t>(dim));
  detail::forEachMomentUnit(data, cfg.subsample, [&](const UnitRecord& u) {
    const Eigen::VectorXd m = momentVector(*u.y0, u.x, psi, aux, diag);
    for (int j = 0; j < dim; ++j) comps[static_cast<std::size_t>(j)].push_back(m(j));
  });
  const long n0 = static_cast<long>(comps[0].size());
  if (n0 == 0) throw ConfigError("averageMoment: empty moment subsample");
  if (subsampleSize) *subsampleSize = n0;
  Eigen::VectorXd mbar(dim);
  for (int j = 0; j < dim; ++j)
    mbar(j) = pairwiseSum(comps[static_cast<std::size_t>(j)]) / static_cast<double>(n0);
  return mbar;
}

inline Eigen::MatrixXd resolveWeightMatrix(const GmmConfig& cfg, int dim) {
  cfg.validate();
  switch (cfg.weight) {
    case GmmConfig::Weight::EXPLICIT: {
      if (cfg.explicitW.rows() != dim)
        throw ShapeError("resolveWeightMatrix: weight matrix dimension mismatch");
      return cfg.explicitW;
    }
    case GmmConfig::Weight::TWO_STEP:
      // Callers run twoStepWeightMatrix after a pilot fit and switch to EXPLICIT.
      [[fallthrough]];
    case GmmConfig::Weight::IDENTITY:
      return Eigen::MatrixXd::Identity(dim, dim);
  }
  throw ConfigError("resolveWeightMatrix: unknown weight kind");
}

/// Q0(psi) = -(N0/2) mbar' W0 mbar; nonpositive for PSD W0. N0 is the size of
/// the summation set (r=1, z=0 by default).
inline double gmmObjective(const GaussianModelParams& psi, const Dataset& data,
                           const GmmConfig& cfg, const AuxiliaryMoments& aux,
                           GmmDiagnostics* diag = nullptr) {
  long n0 = 0;
  const Eigen::VectorXd mbar = averageMoment(data, psi, cfg, aux, &n0, diag);
  const Eigen::MatrixXd w = resolveWeightMatrix(cfg, static_cast<int>(mbar.size()));
  return -0.5 * static_cast<double>(n0) * mbar.dot(w * mbar);
}

/// Inverse of the ridge-regularized empirical moment covariance at a pilot
/// psi; plug the result into GmmConfig::EXPLICIT for the second step.
inline Eigen::MatrixXd twoStepWeightMatrix(const GaussianModelParams& psi, const Dataset& data,
                                           const GmmConfig& cfg, const AuxiliaryMoments& aux) {
  const int dim = momentDimension(data.d, aux);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
  long n0 = 0;
  detail::forEachMomentUnit(data, cfg.subsample, [&](const UnitRecord& u) {
    const Eigen::VectorXd m = momentVector(*u.y0, u.x, psi, aux);
    scatter += m * m.transpose();
    ++n0;
  });
  if (n0 == 0) throw ConfigError("twoStepWeightMatrix: empty moment subsample");
  scatter /= static_cast<double>(n0);
  scatter.diagonal().array() += 1e-8;
  return scatter.inverse();
}

/// Empirical auxiliary moments for setup (a): means over the r=0 arm, z=0
/// share among the r=1 arm.
inline AuxiliaryMoments auxFromControlArm(const Dataset& data) {
  AuxiliaryMoments aux;
  aux.meanX.assign(static_cast<std::size_t>(data.d), 0.0);
  aux.source = AuxiliaryMoments::Source::ESTIMATED_FROM_CONTROL_ARM;
  long nControl = 0, nArm1 = 0, nArm1Z0 = 0;
  double sumY0 = 0.0;
  for (const auto& u : data.units) {
    if (u.r == 0) {
      ++nControl;
      sumY0 += *u.y0;
      for (int k = 0; k < data.d; ++k) aux.meanX[static_cast<std::size_t>(k)] += u.x[static_cast<std::size_t>(k)];
    } else {
      ++nArm1;
      if (*u.z == 0) ++nArm1Z0;
    }
  }
  if (nControl == 0)
    throw ConfigError("auxFromControlArm: no r=0 units; supply MACRO_GIVEN auxiliary moments");
  aux.meanY0 = sumY0 / static_cast<double>(nControl);
  for (auto& v : aux.meanX) v /= static_cast<double>(nControl);
  aux.probZ0 = nArm1 > 0 ? static_cast<double>(nArm1Z0) / static_cast<double>(nArm1) : 0.5;
  if (aux.probZ0 <= 0.0 || aux.probZ0 >= 1.0)
    throw ConfigError("auxFromControlArm: degenerate z=0 share in the r=1 arm");
  return aux;
}

}  // namespace hte
