#pragma once

// Numerical completeness probe: discretizes the conditional family
// p(y0 | x, z=1) on a grid and inspects the singular-value spectrum of the
// resulting kernel matrix. A finite grid cannot prove completeness; the
// report says so in its serialized form.

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hte/core.hpp"
#include "hte/model.hpp"

namespace hte {

enum class CompletenessVerdict { COMPLETE_AT_TOLERANCE, DEFICIENT };

struct CompletenessReport {
  int numericalRank = 0;
  double conditionNumber = 0.0;
  double smallestSingularValue = 0.0;
  int nX = 0, nY0 = 0;
  CompletenessVerdict verdict = CompletenessVerdict::DEFICIENT;
  static constexpr const char* kCaveat =
      "finite-grid heuristic; numerical rank on a grid cannot establish completeness";
};

/// Rows indexed by x, columns by y0: M[i,j] = p(y0_j | x_i, z=1) * dy0_j with
/// p(y0|x,z=1) proportional to N(y0; mu0(x), sigma0^2) * g(index), rows
/// normalized to sum 1. Rank counts singular values above tol * s_max.
inline CompletenessReport completenessDiagnostic(const GaussianModelParams& psi,
                                                 const std::vector<double>& xGrid,
                                                 const std::vector<double>& y0Grid, double tol) {
  psi.validate();
  const int nX = static_cast<int>(xGrid.size());
  const int nY0 = static_cast<int>(y0Grid.size());
  if (nY0 < 5 || nX < 5) throw ConfigError("completenessDiagnostic: grids must have length >= 5");
  if (nX < nY0) throw ConfigError("completenessDiagnostic: need nX >= nY0 for a column-rank question");
  auto strictlyIncreasing = [](const std::vector<double>& g) {
    for (std::size_t i = 1; i < g.size(); ++i)
      if (!(g[i] > g[i - 1])) return false;
    return true;
  };
  if (!strictlyIncreasing(xGrid) || !strictlyIncreasing(y0Grid))
    throw ConfigError("completenessDiagnostic: grids must be strictly increasing");

  // trapezoid cell widths
  std::vector<double> dy(static_cast<std::size_t>(nY0));
  for (int j = 0; j < nY0; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const double left = j == 0 ? y0Grid[0] : y0Grid[js - 1];
    const double right = j == nY0 - 1 ? y0Grid[js] : y0Grid[js + 1];
    dy[js] = 0.5 * (right - left);
  }

  Eigen::MatrixXd m(nX, nY0);
  for (int i = 0; i < nX; ++i) {
    const double x = xGrid[static_cast<std::size_t>(i)];
    double rowSum = 0.0;
    for (int j = 0; j < nY0; ++j) {
      const double y0 = y0Grid[static_cast<std::size_t>(j)];
      const double v = normalPdf(y0, psi.mu0(x), psi.sigma0) * psi.propensity(y0, x) *
                       dy[static_cast<std::size_t>(j)];
      m(i, j) = v;
      rowSum += v;
    }
    if (rowSum > 0.0) m.row(i) /= rowSum;
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd sv = svd.singularValues();
  const double svMax = sv.size() > 0 ? sv(0) : 0.0;
  const double svMin = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;

  CompletenessReport report;
  report.nX = nX;
  report.nY0 = nY0;
  report.smallestSingularValue = svMin;
  report.conditionNumber =
      svMin > 0.0 ? svMax / svMin : std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > tol * svMax) ++report.numericalRank;
  report.verdict = report.numericalRank < nY0 ? CompletenessVerdict::DEFICIENT
                                              : CompletenessVerdict::COMPLETE_AT_TOLERANCE;
  return report;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1.0);
  return g;
}

}  // namespace hte
