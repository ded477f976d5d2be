#pragma once

// Data model (units, datasets), the Gaussian parameter bundle of the
// simulation-study model, the extended propensity score p(z=1|y0,x), and
// brute-force oracles for the true estimands of that data-generating process.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hte/core.hpp"
#include "hte/rng.hpp"

namespace hte {

enum class StudySetup { RCT_ONE_SIDED, OBS_MICRO, OBS_MACRO };

/// Moments of the untreated outcome and covariates used by the GMM constraint.
struct AuxiliaryMoments {
  enum class Source { MACRO_GIVEN, ESTIMATED_FROM_CONTROL_ARM };
  double meanY0 = 0.0;
  std::vector<double> meanX;
  double probZ0 = 0.5;
  std::optional<double> momentY0Sq;
  Source source = Source::MACRO_GIVEN;
};

/// One study unit. Missingness is explicit: y1/y0/z hold no sentinel values.
struct UnitRecord {
  std::int64_t id = 0;
  std::vector<double> x;
  int r = 0;                    // 1 = experiment / treatment-offer arm
  std::optional<int> z;         // compliance/treatment indicator; missing when r=0
  std::optional<double> y1;
  std::optional<double> y0;

  /// Realized treatment status: r=0 units count as untreated (one-sided
  /// noncompliance).
  bool treated() const { return r == 1 && z && *z == 1; }

  void validate() const {
    if (r != 0 && r != 1) throw ShapeError("UnitRecord: r must be 0/1");
    if (r == 1) {
      if (!z || (*z != 0 && *z != 1)) throw ShapeError("UnitRecord: r=1 requires z in {0,1}");
      if (*z == 1 && (!y1 || y0)) throw ShapeError("UnitRecord: r=1,z=1 requires y1 observed, y0 missing");
      if (*z == 0 && (!y0 || y1)) throw ShapeError("UnitRecord: r=1,z=0 requires y0 observed, y1 missing");
    } else {
      if (z) throw ShapeError("UnitRecord: r=0 requires z missing");
      if (!y0 || y1) throw ShapeError("UnitRecord: r=0 requires y0 observed, y1 missing");
    }
  }
};

struct Dataset {
  std::vector<UnitRecord> units;
  int d = 1;
  StudySetup setup = StudySetup::RCT_ONE_SIDED;
  std::optional<AuxiliaryMoments> aux;  // required for OBS_MACRO fits

  void validate() const {
    for (const auto& u : units) {
      u.validate();
      if (static_cast<int>(u.x.size()) != d)
        throw ShapeError("Dataset: unit " + std::to_string(u.id) + " has wrong covariate dimension");
    }
    if (setup == StudySetup::OBS_MACRO && !aux)
      throw ConfigError("Dataset: OBS_MACRO requires attached AuxiliaryMoments");
  }
};

/// Parameter bundle psi for the Gaussian model:
///   y0 | x  ~ N(theta00 + theta01 x, sigma0^2)
///   y1 | y0,x ~ N(theta10 + theta11 x + theta12 y0 + theta13 y0^2, sigma1^2)
///   z  | y0,x ~ Bernoulli(logistic(beta0 + beta1 x + beta2 y0))
struct GaussianModelParams {
  double theta00 = 0, theta01 = 0;
  double theta10 = 0, theta11 = 0, theta12 = 0, theta13 = 0;
  double sigma0 = 1, sigma1 = 1;
  double beta0 = 0, beta1 = 0, beta2 = 0;

  double mu0(double x) const { return theta00 + theta01 * x; }
  double mu1(double y0, double x) const {
    return theta10 + theta11 * x + theta12 * y0 + theta13 * y0 * y0;
  }
  double propensityIndex(double y0, double x) const { return beta0 + beta1 * x + beta2 * y0; }
  double propensity(double y0, double x) const { return logistic(propensityIndex(y0, x)); }

  void validate(bool requireIdentified = false) const {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0))
      throw DomainError("GaussianModelParams: sigma0 and sigma1 must be positive");
    if (requireIdentified && beta2 == 0.0)
      throw ConfigError("GaussianModelParams: beta2 = 0 violates the linear-y0 identification condition");
  }

  static constexpr int kDim = 11;
  static const std::vector<std::string>& parameterNames() {
    static const std::vector<std::string> names = {
        "theta00", "theta01", "theta10", "theta11", "theta12", "theta13",
        "sigma0",  "sigma1",  "beta0",   "beta1",   "beta2"};
    return names;
  }
  std::vector<double> toVector() const {
    return {theta00, theta01, theta10, theta11, theta12, theta13,
            sigma0,  sigma1,  beta0,   beta1,   beta2};
  }
  static GaussianModelParams fromVector(std::span<const double> v) {
    if (v.size() != kDim) throw ShapeError("GaussianModelParams::fromVector: wrong length");
    GaussianModelParams p;
    p.theta00 = v[0]; p.theta01 = v[1];
    p.theta10 = v[2]; p.theta11 = v[3]; p.theta12 = v[4]; p.theta13 = v[5];
    p.sigma0 = v[6]; p.sigma1 = v[7];
    p.beta0 = v[8]; p.beta1 = v[9]; p.beta2 = v[10];
    return p;
  }

  /// Generating values of the built-in simulation study.
  static GaussianModelParams simulationTruth() {
    GaussianModelParams p;
    p.theta00 = 1.0; p.theta01 = 0.6;
    p.theta10 = 1.5; p.theta11 = 0.5; p.theta12 = 0.6; p.theta13 = -0.2;
    p.sigma0 = 0.5; p.sigma1 = 0.6;
    p.beta0 = -1.2; p.beta1 = 0.8; p.beta2 = 0.6;
    return p;
  }
};

/// Additive-index logistic model p(z=1|y0,x) = logistic(k0 + k_y0(y0) + k_x(x)).
/// Extra y0 basis terms must vanish at 0; the built-in basis is quadratic.
struct ExtendedPropensityScore {
  enum class Y0Basis { QUADRATIC };

  double k0 = 0.0;
  double linearY0Coefficient = 0.0;
  std::vector<std::pair<Y0Basis, double>> extraY0Basis;
  std::vector<double> xCoefficients;

  double index(double y0, std::span<const double> x) const {
    if (x.size() != xCoefficients.size())
      throw ShapeError("ExtendedPropensityScore: covariate dimension mismatch");
    double idx = k0 + linearY0Coefficient * y0;
    for (const auto& [basis, coef] : extraY0Basis) {
      switch (basis) {
        case Y0Basis::QUADRATIC: idx += coef * y0 * y0; break;
      }
    }
    for (std::size_t k = 0; k < x.size(); ++k) idx += xCoefficients[k] * x[k];
    return idx;
  }
};

inline double extendedPropensity(double y0, std::span<const double> x,
                                 const ExtendedPropensityScore& eps) {
  return logistic(eps.index(y0, x));
}

/// Ground truth for the built-in Gaussian DGP: closed-form ATE and HTE curve,
/// Monte Carlo ATT/ATU/P(z=1) over >= 10^6 simulated units.
struct TrueEstimands {
  double ate = 0.0;
  std::function<double(double)> hteFn;
  double attMC = 0.0;
  double atuMC = 0.0;
  double probZ1MC = 0.0;
  double ateMC = 0.0;
};

inline TrueEstimands trueEstimandOracle(const GaussianModelParams& dgp, double xSd,
                                        std::int64_t mcDraws = 1'000'000,
                                        std::uint64_t seed = 0xace5u) {
  dgp.validate();
  if (!(xSd > 0.0)) throw DomainError("trueEstimandOracle: xSd must be positive");

  const double meanY0 = dgp.theta00;  // E[x] = 0
  const double varY0 = dgp.theta01 * dgp.theta01 * xSd * xSd + dgp.sigma0 * dgp.sigma0;
  const double meanY0Sq = varY0 + meanY0 * meanY0;

  TrueEstimands out;
  out.ate = dgp.theta10 + dgp.theta12 * meanY0 + dgp.theta13 * meanY0Sq - meanY0;

  const double covXY0 = dgp.theta01 * xSd * xSd;
  out.hteFn = [dgp, meanY0, varY0, covXY0](double y0) {
    const double condMeanX = covXY0 / varY0 * (y0 - meanY0);
    return dgp.mu1(y0, condMeanX) - y0;
  };

  double sumAte = 0.0, sumTreated = 0.0, sumUntreated = 0.0;
  std::int64_t nTreated = 0;
  for (std::int64_t i = 0; i < mcDraws; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i), /*tag=*/0xdeed);
    const double x = rng.normal(0.0, xSd);
    const double y0 = rng.normal(dgp.mu0(x), dgp.sigma0);
    const double y1 = rng.normal(dgp.mu1(y0, x), dgp.sigma1);
    const double effect = y1 - y0;
    sumAte += effect;
    if (rng.bernoulli(dgp.propensity(y0, x))) {
      sumTreated += effect;
      ++nTreated;
    } else {
      sumUntreated += effect;
    }
  }
  out.ateMC = sumAte / static_cast<double>(mcDraws);
  out.attMC = sumTreated / static_cast<double>(nTreated);
  out.atuMC = sumUntreated / static_cast<double>(mcDraws - nTreated);
  out.probZ1MC = static_cast<double>(nTreated) / static_cast<double>(mcDraws);
  return out;
}

}  // namespace hte
