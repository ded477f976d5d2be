#pragma once

// Observed-data (quadrature-marginalized) and data-augmented log-posteriors
// for the Gaussian model, plus the full conditional of a missing y0.

#include <atomic>
#include <cmath>
#include <span>
#include <vector>

#include "hte/core.hpp"
#include "hte/model.hpp"

namespace hte {

/// Weakly informative defaults: Normal(0, 10^2) on unconstrained coefficients,
/// half-Normal(0, 5^2) on the sigmas.
struct PriorSpec {
  double coefMean = 0.0;
  double coefSd = 10.0;
  double sigmaSd = 5.0;

  double logCoef(double v) const { return normalLogPdf(v, coefMean, coefSd); }
  double logSigma(double s) const {
    if (!(s > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(2.0) + normalLogPdf(s, 0.0, sigmaSd);
  }
  double logDensity(const GaussianModelParams& psi) const {
    double lp = 0.0;
    for (double v : {psi.theta00, psi.theta01, psi.theta10, psi.theta11, psi.theta12,
                     psi.theta13, psi.beta0, psi.beta1, psi.beta2})
      lp += logCoef(v);
    return lp + logSigma(psi.sigma0) + logSigma(psi.sigma1);
  }
};

/// Counts of units whose log-likelihood hit the numerical floor; distinguishes
/// model misfit from underflow.
struct LikelihoodDiagnostics {
  std::atomic<long> flooredUnits{0};
};

namespace detail {
inline double floorLog(double v, LikelihoodDiagnostics* diag) {
  if (v < kLogFloor) {
    if (diag) diag->flooredUnits.fetch_add(1, std::memory_order_relaxed);
    return kLogFloor;
  }
  return v;
}
}  // namespace detail

/// log p(y1, z=1 | x, psi): the y0 integral of
/// N(y1; mu1(y0,x), sigma1^2) * logistic(index) against N(mu0(x), sigma0^2),
/// evaluated by Gauss-Hermite in log space.
inline double treatedUnitLogLik(double y1, double x, const GaussianModelParams& psi,
                                const QuadratureRule& quad) {
  const double mean = psi.mu0(x);
  const double scale = std::numbers::sqrt2 * psi.sigma0;
  const double logNorm = -0.5 * std::log(std::numbers::pi);
  std::vector<double> terms(static_cast<std::size_t>(quad.order));
  for (int i = 0; i < quad.order; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double y0 = mean + scale * quad.nodes[k];
    terms[k] = std::log(quad.weights[k]) + logNorm +
               normalLogPdf(y1, psi.mu1(y0, x), psi.sigma1) +
               logLogistic(psi.propensityIndex(y0, x));
  }
  const double out = logSumExp(terms);
  if (std::isnan(out))
    throw DomainError("treatedUnitLogLik: non-finite result at y1=" + std::to_string(y1) +
                      ", x=" + std::to_string(x));
  return out;
}

/// log p(y0, z=0 | x, psi) = log N(y0; mu0(x), sigma0^2) + log(1 - g).
inline double controlUnitLogLik(double y0, double x, const GaussianModelParams& psi) {
  return normalLogPdf(y0, psi.mu0(x), psi.sigma0) +
         logOneMinusLogistic(psi.propensityIndex(y0, x));
}

/// Unnormalized log posterior with treated units marginalized by quadrature.
inline double marginalLogPosterior(const GaussianModelParams& psi, const Dataset& data,
                                   const PriorSpec& prior, const QuadratureRule& quad,
                                   LikelihoodDiagnostics* diag = nullptr) {
  psi.validate();
  std::vector<double> unitTerms;
  unitTerms.reserve(data.units.size());
  for (const auto& u : data.units) {
    const double x = u.x.empty() ? 0.0 : u.x[0];
    double term;
    if (u.r == 1 && *u.z == 1)
      term = treatedUnitLogLik(*u.y1, x, psi, quad);
    else if (u.r == 1)
      term = controlUnitLogLik(*u.y0, x, psi);
    else
      term = normalLogPdf(*u.y0, psi.mu0(x), psi.sigma0);
    unitTerms.push_back(detail::floorLog(term, diag));
  }
  return pairwiseSum(unitTerms) + prior.logDensity(psi);
}

/// Unnormalized log joint of (psi, y0mis); y0mis aligns with the r=1,z=1
/// units in dataset order.
inline double augmentedLogPosterior(const GaussianModelParams& psi,
                                    std::span<const double> y0mis, const Dataset& data,
                                    const PriorSpec& prior,
                                    LikelihoodDiagnostics* diag = nullptr) {
  psi.validate();
  std::vector<double> unitTerms;
  unitTerms.reserve(data.units.size());
  std::size_t mi = 0;
  for (const auto& u : data.units) {
    const double x = u.x.empty() ? 0.0 : u.x[0];
    double term;
    if (u.r == 1 && *u.z == 1) {
      if (mi >= y0mis.size()) throw ShapeError("augmentedLogPosterior: y0mis too short");
      const double y0 = y0mis[mi++];
      term = logLogistic(psi.propensityIndex(y0, x)) +
             normalLogPdf(*u.y1, psi.mu1(y0, x), psi.sigma1) +
             normalLogPdf(y0, psi.mu0(x), psi.sigma0);
    } else if (u.r == 1) {
      term = controlUnitLogLik(*u.y0, x, psi);
    } else {
      term = normalLogPdf(*u.y0, psi.mu0(x), psi.sigma0);
    }
    unitTerms.push_back(detail::floorLog(term, diag));
  }
  if (mi != y0mis.size()) throw ShapeError("augmentedLogPosterior: y0mis too long");
  return pairwiseSum(unitTerms) + prior.logDensity(psi);
}

/// Unnormalized log full conditional of the missing y0 of an r=1,z=1 unit:
/// log g(y0,x) + log p(y1|y0,x) + log p(y0|x).
inline double y0misFullConditionalLogDensity(double y0, const UnitRecord& unit,
                                             const GaussianModelParams& psi) {
  if (!(unit.r == 1 && unit.z && *unit.z == 1 && unit.y1))
    throw ShapeError("y0misFullConditionalLogDensity: unit must have r=1, z=1, y1 observed");
  const double x = unit.x.empty() ? 0.0 : unit.x[0];
  return logLogistic(psi.propensityIndex(y0, x)) +
         normalLogPdf(*unit.y1, psi.mu1(y0, x), psi.sigma1) +
         normalLogPdf(y0, psi.mu0(x), psi.sigma0);
}

}  // namespace hte
