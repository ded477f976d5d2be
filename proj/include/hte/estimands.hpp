#pragma once

// Posterior functionals of the Gaussian model: the HTE curve with credible
// bands, ATE/ATT/ATU summaries, odds-weight reconstruction of the treated
// (y0, x) distribution, and the welfare of a covariate decision set.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "hte/core.hpp"
#include "hte/model.hpp"
#include "hte/sampler.hpp"

namespace hte {

struct EstimandSummary {
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

struct HteCurve {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> lo95;
  std::vector<double> hi95;
  std::vector<char> flagged;  // 1 where all importance weights underflowed
};

namespace detail {

inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = p * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline EstimandSummary summarize(const std::vector<double>& draws) {
  EstimandSummary s;
  const auto n = static_cast<double>(draws.size());
  for (double v : draws) s.mean += v;
  s.mean /= n;
  for (double v : draws) s.sd += (v - s.mean) * (v - s.mean);
  s.sd = draws.size() > 1 ? std::sqrt(s.sd / (n - 1.0)) : 0.0;
  s.lo95 = percentile(draws, 0.025);
  s.hi95 = percentile(draws, 0.975);
  return s;
}

inline GaussianModelParams drawToParams(const PosteriorDraws& draws, int row) {
  std::vector<double> v(static_cast<std::size_t>(draws.parameterDraws.cols()));
  for (int j = 0; j < draws.parameterDraws.cols(); ++j)
    v[static_cast<std::size_t>(j)] = draws.parameterDraws(row, j);
  return GaussianModelParams::fromVector(v);
}

}  // namespace detail

/// E[y1 - y0 | y0] per draw: E[x|y0] is realized by importance-reweighting
/// the sample covariates with w_i = p(y0 | x_i, psi).
inline double hteAtPoint(double y0, const GaussianModelParams& psi, const Dataset& data,
                         bool* underflowed = nullptr) {
  std::vector<double> logw;
  logw.reserve(data.units.size());
  double maxLogW = -std::numeric_limits<double>::infinity();
  for (const auto& u : data.units) {
    const double lw = normalLogPdf(y0, psi.mu0(u.x[0]), psi.sigma0);
    logw.push_back(lw);
    maxLogW = std::max(maxLogW, lw);
  }
  if (maxLogW < kLogFloor) {
    if (underflowed) *underflowed = true;
    return std::numeric_limits<double>::quiet_NaN();
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    const double w = std::exp(logw[i] - maxLogW);
    num += w * psi.mu1(y0, data.units[i].x[0]);
    den += w;
  }
  if (underflowed) *underflowed = false;
  return num / den - y0;
}

/// 101 points spanning the 1st-99th percentile of observed y0 values.
inline std::vector<double> defaultHteGrid(const Dataset& data, int points = 101) {
  std::vector<double> y0s;
  for (const auto& u : data.units)
    if (u.y0) y0s.push_back(*u.y0);
  if (y0s.size() < 2) throw ConfigError("defaultHteGrid: not enough observed y0 values");
  const double lo = detail::percentile(y0s, 0.01);
  const double hi = detail::percentile(y0s, 0.99);
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1.0);
  return grid;
}

inline HteCurve hteCurve(const PosteriorDraws& draws, const Dataset& data,
                         const std::vector<double>& grid) {
  if (draws.retained() == 0) throw ConfigError("hteCurve: no retained draws");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("hteCurve: grid must be strictly increasing");

  HteCurve curve;
  curve.grid = grid;
  curve.mean.resize(grid.size());
  curve.lo95.resize(grid.size());
  curve.hi95.resize(grid.size());
  curve.flagged.assign(grid.size(), 0);

  std::vector<double> values;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    values.clear();
    bool anyUnderflow = false;
    for (int row = 0; row < draws.retained(); ++row) {
      const GaussianModelParams psi = detail::drawToParams(draws, row);
      bool uf = false;
      const double v = hteAtPoint(grid[gi], psi, data, &uf);
      if (uf)
        anyUnderflow = true;
      else
        values.push_back(v);
    }
    if (values.empty()) {
      curve.flagged[gi] = 1;
      curve.mean[gi] = curve.lo95[gi] = curve.hi95[gi] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (anyUnderflow) curve.flagged[gi] = 1;
    const EstimandSummary s = detail::summarize(values);
    curve.mean[gi] = s.mean;
    curve.lo95[gi] = s.lo95;
    curve.hi95[gi] = s.hi95;
  }
  return curve;
}

/// Normalized odds weights g/(1-g) over the r=1, z=0 units; reweighting them
/// reproduces the (y0, x) law of the z=1 units.
inline std::vector<double> oddsWeights(const Dataset& data, const GaussianModelParams& psi) {
  std::vector<double> w;
  for (const auto& u : data.units) {
    if (!(u.r == 1 && u.z && *u.z == 0)) continue;
    const double p = psi.propensity(*u.y0, u.x[0]);
    if (p >= 1.0)
      throw DomainError("oddsWeights: propensity numerically 1 at unit " + std::to_string(u.id));
    w.push_back(p / (1.0 - p));
  }
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw DomainError("oddsWeights: all weights vanished");
  for (double& v : w) v /= total;
  return w;
}

struct PosteriorEstimands {
  EstimandSummary ate, att, atu;
  std::vector<double> ateDraws;  // per retained draw, for coverage bookkeeping
};

/// Per-draw model functionals. E[y1] follows the population-averaged formula
/// (quadrature over p(y0|x_i)); the y0 level comes from the auxiliary moments
/// when given, otherwise from the model-implied mean.
inline PosteriorEstimands posteriorEstimands(const PosteriorDraws& draws, const Dataset& data,
                                             const std::optional<AuxiliaryMoments>& aux,
                                             int quadratureOrder = kDefaultQuadratureOrder) {
  if (draws.retained() == 0) throw ConfigError("posteriorEstimands: no retained draws");
  const QuadratureRule quad = gaussHermiteRule(quadratureOrder);

  std::vector<const UnitRecord*> treatedUnits, armZ0Units;
  for (const auto& u : data.units) {
    if (u.treated()) treatedUnits.push_back(&u);
    if (u.r == 1 && u.z && *u.z == 0) armZ0Units.push_back(&u);
  }
  if (treatedUnits.empty()) throw ConfigError("posteriorEstimands: no treated units, ATT undefined");
  if (armZ0Units.empty()) throw ConfigError("posteriorEstimands: no r=1,z=0 units, ATU undefined");

  double meanObsY1 = 0.0;
  for (const auto* u : treatedUnits) meanObsY1 += *u->y1;
  meanObsY1 /= static_cast<double>(treatedUnits.size());

  std::vector<double> ateDraws, attDraws, atuDraws;
  ateDraws.reserve(static_cast<std::size_t>(draws.retained()));
  for (int row = 0; row < draws.retained(); ++row) {
    const GaussianModelParams psi = detail::drawToParams(draws, row);

    double ey1 = 0.0;
    for (const auto& u : data.units) {
      const double x = u.x[0];
      ey1 += gaussHermiteExpectation([&](double y0) { return psi.mu1(y0, x); }, psi.mu0(x),
                                     psi.sigma0, quad);
    }
    ey1 /= static_cast<double>(data.units.size());

    double meanY0;
    if (aux)
      meanY0 = aux->meanY0;
    else {
      meanY0 = 0.0;
      for (const auto& u : data.units) meanY0 += psi.mu0(u.x[0]);
      meanY0 /= static_cast<double>(data.units.size());
    }
    ateDraws.push_back(ey1 - meanY0);

    double ey0Treated;
    if (draws.latentDraws && draws.latentDraws->cols() == static_cast<int>(treatedUnits.size())) {
      ey0Treated = draws.latentDraws->row(row).mean();
    } else {
      const std::vector<double> w = oddsWeights(data, psi);
      ey0Treated = 0.0;
      for (std::size_t i = 0; i < armZ0Units.size(); ++i) ey0Treated += w[i] * *armZ0Units[i]->y0;
    }
    attDraws.push_back(meanObsY1 - ey0Treated);

    double ey1Z0 = 0.0, ey0Z0 = 0.0;
    for (const auto* u : armZ0Units) {
      ey1Z0 += psi.mu1(*u->y0, u->x[0]);
      ey0Z0 += *u->y0;
    }
    atuDraws.push_back((ey1Z0 - ey0Z0) / static_cast<double>(armZ0Units.size()));
  }

  PosteriorEstimands out;
  out.ate = detail::summarize(ateDraws);
  out.att = detail::summarize(attDraws);
  out.atu = detail::summarize(atuDraws);
  out.ateDraws = std::move(ateDraws);
  return out;
}

/// W(G) of a covariate decision rule: treat units whose x satisfies the
/// predicate, leave the rest at their model-implied untreated mean.
inline EstimandSummary policyWelfare(const std::function<bool(std::span<const double>)>& decisionSet,
                                     const PosteriorDraws& draws, const Dataset& data,
                                     int quadratureOrder = kDefaultQuadratureOrder) {
  if (draws.retained() == 0) throw ConfigError("policyWelfare: no retained draws");
  const QuadratureRule quad = gaussHermiteRule(quadratureOrder);
  std::vector<double> welfareDraws;
  welfareDraws.reserve(static_cast<std::size_t>(draws.retained()));
  for (int row = 0; row < draws.retained(); ++row) {
    const GaussianModelParams psi = detail::drawToParams(draws, row);
    double total = 0.0;
    for (const auto& u : data.units) {
      const double x = u.x[0];
      if (decisionSet(u.x))
        total += gaussHermiteExpectation([&](double y0) { return psi.mu1(y0, x); }, psi.mu0(x),
                                         psi.sigma0, quad);
      else
        total += psi.mu0(x);
    }
    welfareDraws.push_back(total / static_cast<double>(data.units.size()));
  }
  return detail::summarize(welfareDraws);
}

}  // namespace hte
