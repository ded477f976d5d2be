#pragma once

// Tobit-Gumbel plug-in: latent potential outcomes censored at zero, the
// four-branch censored likelihood, truncated-latent augmentation for
// zero-outcome noncompliers, the d+3-component moment function, and the HTE
// curve with a separate atom at y0 = 0.
//
// Earnings-scale inputs are expected pre-scaled by the caller (a common
// convention divides earnings by 10^4); no automatic scaling is applied.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "hte/censored_params.hpp"
#include "hte/core.hpp"
#include "hte/estimands.hpp"
#include "hte/gmm.hpp"
#include "hte/logistic_fit.hpp"
#include "hte/model.hpp"
#include "hte/rng.hpp"
#include "hte/sampler.hpp"

namespace hte {

struct CensoredLatentState {
  std::vector<double> y0StarForZeroControls;  // one per zero-outcome r=1,z=0 unit, <= 0
  std::vector<double> y0StarForTreated;       // optional; empty when treated units are marginalized
};

inline int kGumbelQuadratureOrder = 64;

namespace detail {

/// Integral of f against Gumbel(location, scale) via the inverse-cdf
/// transform and a Gauss-Legendre rule on (0,1).
template <typename Fn>
double gumbelExpectation(Fn&& f, double location, double scale, const QuadratureRule& rule01) {
  double total = 0.0;
  for (int i = 0; i < rule01.order; ++i) {
    const auto k = static_cast<std::size_t>(i);
    total += rule01.weights[k] * f(gumbelQuantile(rule01.nodes[k], location, scale));
  }
  return total;
}

/// Integral of f against the Gumbel law restricted to (-inf, upper]:
/// substitute u = F(upper) * v.
template <typename Fn>
double truncatedGumbelIntegral(Fn&& f, double location, double scale, double upper,
                               const QuadratureRule& rule01) {
  const double fUpper = gumbelCdf(upper, location, scale);
  if (!(fUpper > 0.0)) return 0.0;
  double total = 0.0;
  for (int i = 0; i < rule01.order; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double u = fUpper * rule01.nodes[k];
    total += rule01.weights[k] * f(gumbelQuantile(u, location, scale));
  }
  return fUpper * total;
}

}  // namespace detail

/// Inverse-cdf draw from Gumbel(location, scale) conditioned on <= upperBound.
inline double truncatedGumbelDraw(double location, double scale, double upperBound,
                                  CounterRng& rng) {
  if (!(scale > 0.0)) throw DomainError("truncatedGumbelDraw: scale must be positive");
  double fUpper = std::isinf(upperBound) ? 1.0 : gumbelCdf(upperBound, location, scale);
  if (!(fUpper > 0.0))
    throw DomainError("truncatedGumbelDraw: cdf(upperBound) underflows at location=" +
                      std::to_string(location));
  const double u = rng.uniform() * fUpper;
  const double draw = gumbelQuantile(std::min(u, 1.0 - 1e-16), location, scale);
  return std::min(draw, upperBound);
}

/// Marginal log-likelihood of one unit under the censored model. Branches:
/// (i) treated with y1 > 0, (ii) treated with y1 = 0 (inner normal mass in
/// closed form), (iii) noncomplier with y0 > 0, (iv) noncomplier with y0 = 0;
/// r=0 units contribute the censored Gumbel marginal.
inline double censoredUnitLogLik(const UnitRecord& unit, const TobitGumbelParams& psi,
                                 const QuadratureRule& rule01) {
  psi.validate();
  const auto& x = unit.x;
  const double loc = psi.mu0(x);

  if (unit.r == 1 && *unit.z == 1) {
    const double y1 = *unit.y1;
    if (y1 < 0.0) throw DomainError("censoredUnitLogLik: negative observed outcome");
    double mass;
    if (y1 > 0.0) {
      mass = detail::gumbelExpectation(
          [&](double y0s) {
            return normalPdf(y1, psi.mu1(y0s, x), psi.sigma1) * psi.propensity(y0s, x);
          },
          loc, psi.sigma0, rule01);
    } else {
      mass = detail::gumbelExpectation(
          [&](double y0s) {
            return normalCdf(0.0, psi.mu1(y0s, x), psi.sigma1) * psi.propensity(y0s, x);
          },
          loc, psi.sigma0, rule01);
    }
    return std::max(std::log(mass), kLogFloor);
  }

  const double y0 = *unit.y0;
  if (y0 < 0.0) throw DomainError("censoredUnitLogLik: negative observed outcome");

  if (unit.r == 1) {
    if (y0 > 0.0)
      return gumbelLogPdf(y0, loc, psi.sigma0) +
             logOneMinusLogistic(psi.propensityIndex(y0, x));
    const double mass = detail::truncatedGumbelIntegral(
        [&](double y0s) { return 1.0 - psi.propensity(y0s, x); }, loc, psi.sigma0, 0.0, rule01);
    return std::max(std::log(mass), kLogFloor);
  }

  if (y0 > 0.0) return gumbelLogPdf(y0, loc, psi.sigma0);
  const double u0 = -loc / psi.sigma0;
  return std::max(-std::exp(-u0), kLogFloor);  // log GumbelCdf(0)
}

/// Model-implied E[y0*] and E[y0*^2] averaged over the r=0 arm's covariates
/// (the censored model cannot read them off the data directly).
inline std::pair<double, double> modelImpliedLatentMoments(const TobitGumbelParams& psi,
                                                           const Dataset& data) {
  constexpr double pi2over6 = std::numbers::pi * std::numbers::pi / 6.0;
  double m1 = 0.0, m2 = 0.0;
  long n = 0;
  for (const auto& u : data.units) {
    if (u.r != 0) continue;
    const double mean = psi.mu0(u.x) + kEulerMascheroni * psi.sigma0;
    m1 += mean;
    m2 += pi2over6 * psi.sigma0 * psi.sigma0 + mean * mean;
    ++n;
  }
  if (n == 0) throw ConfigError("modelImpliedLatentMoments: no r=0 units");
  return {m1 / static_cast<double>(n), m2 / static_cast<double>(n)};
}

/// d+3 moment components; the quadratic latent moment is mandatory here.
inline Eigen::VectorXd censoredMomentVector(double y0Star, std::span<const double> x,
                                            const TobitGumbelParams& psi,
                                            const AuxiliaryMoments& aux,
                                            GmmDiagnostics* diag = nullptr) {
  if (!aux.momentY0Sq)
    throw ConfigError("censoredMomentVector: auxiliary E[y0*^2] is mandatory for the censored model");
  if (x.size() != aux.meanX.size())
    throw ShapeError("censoredMomentVector: covariate dimension mismatch");
  const double p = psi.propensity(y0Star, x);
  if (p >= 1.0) throw DomainError("censoredMomentVector: propensity numerically 1");
  const double pz0 = detail::clampedPz0(p, diag);

  Eigen::VectorXd m(static_cast<Eigen::Index>(x.size()) + 3);
  Eigen::Index j = 0;
  m(j++) = 1.0 / pz0 - 1.0 / aux.probZ0;
  for (std::size_t k = 0; k < x.size(); ++k) m(j++) = (x[k] - aux.meanX[k]) / pz0;
  m(j++) = (y0Star - aux.meanY0) / pz0;
  m(j++) = (y0Star * y0Star - *aux.momentY0Sq) / pz0;
  return m;
}

struct CensoredFitConfig {
  PriorSpec prior;
  int quadratureOrder = 64;
  Eigen::MatrixXd weightMatrix;  // empty -> identity
};

namespace detail {

struct CensoredTargetContext {
  const Dataset* data;
  TobitGumbelParams truthShape;  // carries d
  CensoredFitConfig cfg;
  QuadratureRule rule01;
  std::vector<std::size_t> augmentedIdx;   // zero-outcome r=1,z=0 units
  std::vector<std::size_t> momentIdx;      // all r=1,z=0 units
  std::vector<int> momentLatentSlot;       // per momentIdx: slot in latents, or -1
  AuxiliaryMoments auxBase;                // meanX/probZ0 fixed; y0* moments per-psi
};

inline double censoredPriorLog(const TobitGumbelParams& psi, const PriorSpec& prior) {
  double lp = prior.logCoef(psi.xi0) + prior.logCoef(psi.lambda0) + prior.logCoef(psi.lambda1) +
              prior.logCoef(psi.beta0) + prior.logCoef(psi.beta1) + prior.logCoef(psi.beta2);
  for (double v : psi.xiX) lp += prior.logCoef(v);
  for (double v : psi.lambdaX) lp += prior.logCoef(v);
  for (double v : psi.betaX) lp += prior.logCoef(v);
  return lp + prior.logSigma(psi.sigma0) + prior.logSigma(psi.sigma1);
}

inline double censoredQ0(const CensoredTargetContext& ctx, const TobitGumbelParams& psi,
                         std::span<const double> latents) {
  AuxiliaryMoments aux = ctx.auxBase;
  const auto [m1, m2] = modelImpliedLatentMoments(psi, *ctx.data);
  aux.meanY0 = m1;
  aux.momentY0Sq = m2;

  const Eigen::Index dim = static_cast<Eigen::Index>(ctx.data->d) + 3;
  Eigen::VectorXd mbar = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 0; k < ctx.momentIdx.size(); ++k) {
    const UnitRecord& u = ctx.data->units[ctx.momentIdx[k]];
    const int slot = ctx.momentLatentSlot[k];
    const double y0Star = slot >= 0 ? latents[static_cast<std::size_t>(slot)] : *u.y0;
    mbar += censoredMomentVector(y0Star, u.x, psi, aux);
  }
  const auto n0 = static_cast<double>(ctx.momentIdx.size());
  mbar /= n0;
  if (ctx.cfg.weightMatrix.size() > 0) return -0.5 * n0 * mbar.dot(ctx.cfg.weightMatrix * mbar);
  return -0.5 * n0 * mbar.squaredNorm();
}

inline double censoredJointLog(const CensoredTargetContext& ctx, const TobitGumbelParams& psi,
                               std::span<const double> latents) {
  std::vector<double> terms;
  terms.reserve(ctx.data->units.size());
  std::size_t slot = 0;
  for (std::size_t i = 0; i < ctx.data->units.size(); ++i) {
    const UnitRecord& u = ctx.data->units[i];
    const bool augmented = slot < ctx.augmentedIdx.size() && ctx.augmentedIdx[slot] == i;
    if (augmented) {
      const double y0Star = latents[slot++];
      if (y0Star > 0.0) return -std::numeric_limits<double>::infinity();
      terms.push_back(std::max(gumbelLogPdf(y0Star, psi.mu0(u.x), psi.sigma0) +
                                   logOneMinusLogistic(psi.propensityIndex(y0Star, u.x)),
                               kLogFloor));
    } else {
      terms.push_back(censoredUnitLogLik(u, psi, ctx.rule01));
    }
  }
  return pairwiseSum(terms) + censoredPriorLog(psi, ctx.cfg.prior) +
         censoredQ0(ctx, psi, latents);
}

}  // namespace detail

/// Deterministic starting point from cheap moment/least-squares fits.
inline TobitGumbelParams initCensoredParams(const Dataset& data) {
  const int d = data.d;
  TobitGumbelParams psi;
  psi.xiX.assign(static_cast<std::size_t>(d), 0.0);
  psi.lambdaX.assign(static_cast<std::size_t>(d), 0.0);
  psi.betaX.assign(static_cast<std::size_t>(d), 0.0);

  std::vector<const UnitRecord*> y0Units, treatedUnits, arm1;
  for (const auto& u : data.units) {
    if (u.y0 && *u.y0 > 0.0) y0Units.push_back(&u);
    if (u.treated() && *u.y1 > 0.0) treatedUnits.push_back(&u);
    if (u.r == 1) arm1.push_back(&u);
  }

  if (y0Units.size() > static_cast<std::size_t>(d) + 2) {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(y0Units.size()), d + 1);
    Eigen::VectorXd y(static_cast<Eigen::Index>(y0Units.size()));
    for (std::size_t i = 0; i < y0Units.size(); ++i) {
      design(static_cast<Eigen::Index>(i), 0) = 1.0;
      for (int k = 0; k < d; ++k)
        design(static_cast<Eigen::Index>(i), k + 1) = y0Units[i]->x[static_cast<std::size_t>(k)];
      y(static_cast<Eigen::Index>(i)) = *y0Units[i]->y0;
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
    const double residSd =
        std::sqrt((y - design * coef).squaredNorm() / static_cast<double>(y0Units.size()));
    psi.sigma0 = std::max(residSd * std::numbers::inv_pi * std::sqrt(6.0), 0.05);
    psi.xi0 = coef(0) - kEulerMascheroni * psi.sigma0;
    for (int k = 0; k < d; ++k) psi.xiX[static_cast<std::size_t>(k)] = coef(k + 1);
  }

  if (treatedUnits.size() > static_cast<std::size_t>(d) + 3) {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(treatedUnits.size()), d + 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(treatedUnits.size()));
    for (std::size_t i = 0; i < treatedUnits.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      design(row, 0) = 1.0;
      design(row, 1) = psi.mu0(treatedUnits[i]->x) + kEulerMascheroni * psi.sigma0;
      for (int k = 0; k < d; ++k)
        design(row, k + 2) = treatedUnits[i]->x[static_cast<std::size_t>(k)];
      y(row) = *treatedUnits[i]->y1;
    }
    const Eigen::VectorXd coef =
        (design.transpose() * design +
         1e-8 * Eigen::MatrixXd::Identity(d + 2, d + 2)).ldlt().solve(design.transpose() * y);
    psi.lambda0 = coef(0);
    psi.lambda1 = coef(1);
    for (int k = 0; k < d; ++k) psi.lambdaX[static_cast<std::size_t>(k)] = coef(k + 2);
    psi.sigma1 = std::max(
        std::sqrt((y - design * coef).squaredNorm() / static_cast<double>(treatedUnits.size())),
        0.05);
  }

  if (arm1.size() > static_cast<std::size_t>(d) + 2) {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(arm1.size()), d + 1);
    Eigen::VectorXd z(static_cast<Eigen::Index>(arm1.size()));
    for (std::size_t i = 0; i < arm1.size(); ++i) {
      design(static_cast<Eigen::Index>(i), 0) = 1.0;
      for (int k = 0; k < d; ++k)
        design(static_cast<Eigen::Index>(i), k + 1) = arm1[i]->x[static_cast<std::size_t>(k)];
      z(static_cast<Eigen::Index>(i)) = arm1[i]->treated() ? 1.0 : 0.0;
    }
    try {
      const Eigen::VectorXd gamma = fitLogistic(design, z);
      psi.beta0 = gamma(0);
      for (int k = 0; k < d; ++k) psi.betaX[static_cast<std::size_t>(k)] = gamma(k + 1);
    } catch (const SeparationError&) {
    }
  }
  psi.beta1 = 0.1;  // linear-y0 term started off zero
  psi.beta2 = 0.0;
  return psi;
}

/// Quasi-Bayes fit of the censored model: marginal likelihood by quadrature,
/// truncated-latent augmentation for zero-outcome noncompliers (their latent
/// y0* feeds the moment function), GMM objective in the target.
inline PosteriorDraws runCensoredChain(const Dataset& data, const CensoredFitConfig& cfg,
                                       int iterations, int warmup, std::uint64_t seed,
                                       int chainId = 0) {
  data.validate();
  auto ctx = std::make_shared<detail::CensoredTargetContext>();
  ctx->data = &data;
  ctx->cfg = cfg;
  ctx->rule01 = gaussLegendreRule01(cfg.quadratureOrder);
  for (std::size_t i = 0; i < data.units.size(); ++i) {
    const UnitRecord& u = data.units[i];
    if (u.r == 1 && *u.z == 0) {
      ctx->momentIdx.push_back(i);
      if (*u.y0 == 0.0) {
        ctx->momentLatentSlot.push_back(static_cast<int>(ctx->augmentedIdx.size()));
        ctx->augmentedIdx.push_back(i);
      } else {
        ctx->momentLatentSlot.push_back(-1);
      }
    }
  }
  if (ctx->momentIdx.empty())
    throw ConfigError("runCensoredChain: no r=1,z=0 units for the moment constraint");

  ctx->auxBase.meanX.assign(static_cast<std::size_t>(data.d), 0.0);
  long nControl = 0, nArm1 = 0, nArm1Z0 = 0;
  for (const auto& u : data.units) {
    if (u.r == 0) {
      ++nControl;
      for (int k = 0; k < data.d; ++k)
        ctx->auxBase.meanX[static_cast<std::size_t>(k)] += u.x[static_cast<std::size_t>(k)];
    } else {
      ++nArm1;
      if (*u.z == 0) ++nArm1Z0;
    }
  }
  if (nControl == 0) throw ConfigError("runCensoredChain: need r=0 units to anchor latent moments");
  for (auto& v : ctx->auxBase.meanX) v /= static_cast<double>(nControl);
  ctx->auxBase.probZ0 = static_cast<double>(nArm1Z0) / static_cast<double>(nArm1);
  ctx->auxBase.momentY0Sq = 0.0;  // replaced per-psi
  ctx->auxBase.source = AuxiliaryMoments::Source::ESTIMATED_FROM_CONTROL_ARM;

  const int d = data.d;
  const std::size_t sigma0Pos = 1 + static_cast<std::size_t>(d);
  const std::size_t sigma1Pos = 4 + 2 * static_cast<std::size_t>(d);
  auto psiFromSampling = [d, sigma0Pos, sigma1Pos](std::span<const double> v) {
    std::vector<double> natural(v.begin(), v.end());
    natural[sigma0Pos] = std::exp(v[sigma0Pos]);
    natural[sigma1Pos] = std::exp(v[sigma1Pos]);
    return TobitGumbelParams::fromVector(natural, d);
  };

  TobitGumbelParams init = initCensoredParams(data);
  MhTarget target;
  target.paramDim = init.dim();
  target.latentDim = static_cast<int>(ctx->augmentedIdx.size());
  target.parameterNames = init.parameterNames();
  target.recordTransform = [psiFromSampling, d](std::span<const double> v) {
    return psiFromSampling(v).toVector();
  };
  target.logDensity = [ctx, psiFromSampling, sigma0Pos, sigma1Pos](std::span<const double> v,
                                                                   std::span<const double> lat) {
    return detail::censoredJointLog(*ctx, psiFromSampling(v), lat) + v[sigma0Pos] + v[sigma1Pos];
  };
  target.latentLogConditional = [ctx, psiFromSampling](int j, double val,
                                                       std::span<const double> v,
                                                       std::span<const double> lat) {
    if (val > 0.0) return -std::numeric_limits<double>::infinity();
    const TobitGumbelParams psi = psiFromSampling(v);
    const UnitRecord& u = ctx->data->units[ctx->augmentedIdx[static_cast<std::size_t>(j)]];
    std::vector<double> latCopy(lat.begin(), lat.end());
    latCopy[static_cast<std::size_t>(j)] = val;
    return gumbelLogPdf(val, psi.mu0(u.x), psi.sigma0) +
           logOneMinusLogistic(psi.propensityIndex(val, u.x)) + censoredQ0(*ctx, psi, latCopy);
  };

  std::vector<double> initVec = init.toVector();
  initVec[sigma0Pos] = std::log(init.sigma0);
  initVec[sigma1Pos] = std::log(init.sigma1);
  std::vector<double> initLat(ctx->augmentedIdx.size());
  for (std::size_t j = 0; j < initLat.size(); ++j) {
    const UnitRecord& u = data.units[ctx->augmentedIdx[j]];
    const double f0 = gumbelCdf(0.0, init.mu0(u.x), init.sigma0);
    initLat[j] = f0 > 1e-12 ? gumbelQuantile(0.5 * f0, init.mu0(u.x), init.sigma0) : -init.sigma0;
    initLat[j] = std::min(initLat[j], -1e-3);
  }

  MhOptions opt;
  opt.iterations = iterations;
  opt.warmup = warmup;
  opt.seed = seed;
  opt.chainId = chainId;
  return runMetropolis(target, std::move(initVec), std::move(initLat), opt);
}

struct CensoredHteCurve {
  HteCurve curve;           // y0 > 0 part
  EstimandSummary atom;     // E[y1 - y0 | y0* <= 0] shown at y0 = 0
};

/// HTE over positive y0 plus the separate atom at zero. For y0 > 0 the latent
/// y0* equals y0; the treated outcome passes through the censoring transform
/// E[max(y1*, 0)].
inline CensoredHteCurve censoredHteCurve(const PosteriorDraws& draws, const Dataset& data,
                                         const std::vector<double>& grid,
                                         int quadratureOrder = 64) {
  if (draws.retained() == 0) throw ConfigError("censoredHteCurve: no retained draws");
  for (double g : grid)
    if (!(g > 0.0)) throw ConfigError("censoredHteCurve: grid must be strictly positive");
  const QuadratureRule rule01 = gaussLegendreRule01(quadratureOrder);
  const int d = data.d;

  CensoredHteCurve out;
  out.curve.grid = grid;
  out.curve.mean.resize(grid.size());
  out.curve.lo95.resize(grid.size());
  out.curve.hi95.resize(grid.size());
  out.curve.flagged.assign(grid.size(), 0);

  std::vector<std::vector<double>> gridDraws(grid.size());
  std::vector<double> atomDraws;
  for (int row = 0; row < draws.retained(); ++row) {
    std::vector<double> v(static_cast<std::size_t>(draws.parameterDraws.cols()));
    for (int j = 0; j < draws.parameterDraws.cols(); ++j)
      v[static_cast<std::size_t>(j)] = draws.parameterDraws(row, j);
    const TobitGumbelParams psi = TobitGumbelParams::fromVector(v, d);

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      const double y0 = grid[gi];
      double num = 0.0, den = 0.0;
      for (const auto& u : data.units) {
        const double w = std::exp(gumbelLogPdf(y0, psi.mu0(u.x), psi.sigma0));
        num += w * censoredNormalMean(psi.mu1(y0, u.x), psi.sigma1);
        den += w;
      }
      if (den > 0.0) gridDraws[gi].push_back(num / den - y0);
    }

    double atomNum = 0.0, atomDen = 0.0;
    for (const auto& u : data.units) {
      const double loc = psi.mu0(u.x);
      atomNum += detail::truncatedGumbelIntegral(
          [&](double y0s) { return censoredNormalMean(psi.mu1(y0s, u.x), psi.sigma1); }, loc,
          psi.sigma0, 0.0, rule01);
      atomDen += gumbelCdf(0.0, loc, psi.sigma0);
    }
    if (atomDen > 0.0) atomDraws.push_back(atomNum / atomDen);
  }

  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    if (gridDraws[gi].empty()) {
      out.curve.flagged[gi] = 1;
      out.curve.mean[gi] = out.curve.lo95[gi] = out.curve.hi95[gi] =
          std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const EstimandSummary s = detail::summarize(gridDraws[gi]);
    out.curve.mean[gi] = s.mean;
    out.curve.lo95[gi] = s.lo95;
    out.curve.hi95[gi] = s.hi95;
  }
  if (atomDraws.empty()) throw DomainError("censoredHteCurve: censored mass vanished in every draw");
  out.atom = detail::summarize(atomDraws);
  return out;
}

}  // namespace hte
