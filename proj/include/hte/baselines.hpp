#pragma once

// Comparison estimators: mean difference, IPWE under strong ignorability,
// the Wald/LATE ratio, and the propensity-model c-statistic.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "hte/core.hpp"
#include "hte/logistic_fit.hpp"
#include "hte/model.hpp"

namespace hte {

struct BaselineResult {
  double estimate = 0.0;
  double se = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

namespace detail {

inline BaselineResult withAsymptoticCi(double estimate, double se) {
  BaselineResult r;
  r.estimate = estimate;
  r.se = se;
  r.lo95 = estimate - 1.959963984540054 * se;
  r.hi95 = estimate + 1.959963984540054 * se;
  return r;
}

inline double realizedOutcome(const UnitRecord& u) { return u.treated() ? *u.y1 : *u.y0; }

struct GroupStats {
  double mean = 0.0, var = 0.0;
  long n = 0;
};

inline GroupStats groupStats(const std::vector<double>& v) {
  GroupStats g;
  g.n = static_cast<long>(v.size());
  if (g.n == 0) return g;
  g.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(g.n);
  for (double x : v) g.var += (x - g.mean) * (x - g.mean);
  g.var = g.n > 1 ? g.var / static_cast<double>(g.n - 1) : 0.0;
  return g;
}

}  // namespace detail

/// Simple mean difference. In an RCT with a control arm this is the
/// by-assignment (intent-to-treat) arm difference of realized outcomes, the
/// comparison the replication tables report; otherwise treated-vs-untreated.
inline BaselineResult meanDifference(const Dataset& data) {
  std::vector<double> treated, control;
  const bool byArm =
      data.setup == StudySetup::RCT_ONE_SIDED &&
      std::any_of(data.units.begin(), data.units.end(), [](const UnitRecord& u) { return u.r == 0; });
  for (const auto& u : data.units) {
    const bool inTreatedGroup = byArm ? u.r == 1 : u.treated();
    (inTreatedGroup ? treated : control).push_back(detail::realizedOutcome(u));
  }
  if (treated.empty() || control.empty())
    throw ConfigError("meanDifference: both groups must be nonempty");
  const auto t = detail::groupStats(treated);
  const auto c = detail::groupStats(control);
  const double se =
      std::sqrt(t.var / static_cast<double>(t.n) + c.var / static_cast<double>(c.n));
  return detail::withAsymptoticCi(t.mean - c.mean, se);
}

using PsBasis = std::function<std::vector<double>(std::span<const double>)>;

/// Default quadratic-logistic propensity basis (1, x1, x1^2).
inline PsBasis quadraticPsBasis() {
  return [](std::span<const double> x) {
    return std::vector<double>{1.0, x[0], x[0] * x[0]};
  };
}

struct IpweDetail {
  BaselineResult result;
  long clampedCount = 0;
  std::vector<double> fittedScores;  // aligned with the units used
  std::vector<int> fittedZ;
};

/// Horvitz-Thompson ATE with a logistic propensity fit. In RCT_ONE_SIDED the
/// fit and the estimator use the r=1 arm, where compliance is observed.
inline IpweDetail ipweAteDetail(const Dataset& data, const PsBasis& basis,
                                const std::vector<double>* propensityOverride = nullptr) {
  std::vector<const UnitRecord*> used;
  for (const auto& u : data.units)
    if (data.setup != StudySetup::RCT_ONE_SIDED || u.r == 1) used.push_back(&u);
  if (used.empty()) throw ConfigError("ipweAte: no usable units");

  const std::size_t n = used.size();
  const std::size_t k = basis(used[0]->x).size();
  std::vector<double> scores(n);
  IpweDetail out;
  if (propensityOverride) {
    if (propensityOverride->size() != n) throw ShapeError("ipweAte: propensity override length mismatch");
    scores = *propensityOverride;
  } else {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> row = basis(used[i]->x);
      for (std::size_t j = 0; j < k; ++j)
        design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
      z(static_cast<Eigen::Index>(i)) = used[i]->treated() ? 1.0 : 0.0;
    }
    const Eigen::VectorXd gamma = fitLogistic(design, z);
    for (std::size_t i = 0; i < n; ++i)
      scores[i] = logistic(design.row(static_cast<Eigen::Index>(i)).dot(gamma));
  }

  std::vector<double> contributions(n);
  for (std::size_t i = 0; i < n; ++i) {
    double e = scores[i];
    if (e < 0.01 || e > 0.99) {
      e = std::clamp(e, 0.01, 0.99);
      ++out.clampedCount;
    }
    const bool zi = used[i]->treated();
    contributions[i] = zi ? *used[i]->y1 / e : -*used[i]->y0 / (1.0 - e);
    out.fittedScores.push_back(scores[i]);
    out.fittedZ.push_back(zi ? 1 : 0);
  }
  const auto s = detail::groupStats(contributions);
  out.result = detail::withAsymptoticCi(s.mean, std::sqrt(s.var / static_cast<double>(s.n)));
  return out;
}

inline BaselineResult ipweAte(const Dataset& data, const PsBasis& basis = quadraticPsBasis()) {
  return ipweAteDetail(data, basis).result;
}

/// Wald/LATE: arm-level outcome difference over arm-level compliance
/// difference, with a delta-method standard error.
inline BaselineResult waldLate(const Dataset& data) {
  std::vector<double> y1Arm, y0Arm, z1Arm;
  for (const auto& u : data.units) {
    const double y = detail::realizedOutcome(u);
    if (u.r == 1) {
      y1Arm.push_back(y);
      z1Arm.push_back(u.treated() ? 1.0 : 0.0);
    } else {
      y0Arm.push_back(y);
    }
  }
  if (y1Arm.empty() || y0Arm.empty()) throw ConfigError("waldLate: both arms must be nonempty");
  const auto sy1 = detail::groupStats(y1Arm);
  const auto sy0 = detail::groupStats(y0Arm);
  const auto sz = detail::groupStats(z1Arm);
  const double num = sy1.mean - sy0.mean;
  const double den = sz.mean;  // z = 0 structurally in the r=0 arm
  if (std::abs(den) < 1e-12) throw DomainError("waldLate: zero compliance-rate difference (weak instrument)");
  const double est = num / den;
  // delta method for a ratio with independent arms; Cov(ybar1, zbar) from the r=1 arm
  double covY1Z = 0.0;
  for (std::size_t i = 0; i < y1Arm.size(); ++i)
    covY1Z += (y1Arm[i] - sy1.mean) * (z1Arm[i] - sz.mean);
  covY1Z /= static_cast<double>(y1Arm.size() > 1 ? y1Arm.size() - 1 : 1) *
            static_cast<double>(y1Arm.size());
  const double varNum = sy1.var / static_cast<double>(sy1.n) + sy0.var / static_cast<double>(sy0.n);
  const double varDen = sz.var / static_cast<double>(sz.n);
  const double varEst =
      (varNum + est * est * varDen - 2.0 * est * covY1Z) / (den * den);
  return detail::withAsymptoticCi(est, std::sqrt(std::max(varEst, 0.0)));
}

/// AUC via the rank-sum formulation; ties count one-half.
inline double cStatistic(std::span<const double> scores, std::span<const int> z) {
  if (scores.size() != z.size()) throw ShapeError("cStatistic: length mismatch");
  long n1 = 0, n0 = 0;
  for (int zi : z) (zi == 1 ? n1 : n0)++;
  if (n1 == 0 || n0 == 0) throw DomainError("cStatistic: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rankSum1 = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avgRank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (z[order[k]] == 1) rankSum1 += avgRank;
    i = j + 1;
  }
  return (rankSum1 - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0) /
         (static_cast<double>(n1) * static_cast<double>(n0));
}

}  // namespace hte
