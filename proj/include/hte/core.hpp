#pragma once

// Scalar numerical primitives shared by all likelihood code: link functions,
// log-densities, Gauss-Hermite / Gauss-Legendre quadrature and stable
// log-sum-exp composition. Everything here is a pure function.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace hte {

inline constexpr double kLogFloor = -745.0;  // below exp() underflow
inline constexpr double kEulerMascheroni = 0.57721566490153286060;

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// 1/(1+exp(-t)), overflow-safe for |t| up to ~700.
inline double logistic(double t) {
  if (!std::isfinite(t)) throw DomainError("logistic: non-finite input");
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log logistic(t), stable in both tails.
inline double logLogistic(double t) {
  if (!std::isfinite(t)) throw DomainError("logLogistic: non-finite input");
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

/// log(1 - logistic(t)) = logLogistic(-t).
inline double logOneMinusLogistic(double t) { return logLogistic(-t); }

inline double normalLogPdf(double y, double mean, double sd) {
  if (!(sd > 0.0)) throw DomainError("normalLogPdf: sd must be positive");
  const double zr = (y - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi * sd * sd) - 0.5 * zr * zr;
}

inline double normalPdf(double y, double mean, double sd) {
  return std::exp(normalLogPdf(y, mean, sd));
}

inline double normalCdf(double y, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(y - mean) / (sd * std::numbers::sqrt2));
}

/// Inverse standard normal cdf (Acklam's rational approximation, refined by
/// one Halley step; accurate to ~1e-15).
inline double normalQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normalQuantile: p outside (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

/// E[max(Y,0)] for Y ~ Normal(mean, sd^2).
inline double censoredNormalMean(double mean, double sd) {
  const double zr = mean / sd;
  return mean * normalCdf(zr) + sd * normalPdf(zr, 0.0, 1.0);
}

struct GumbelValue {
  double logDensity;
  double cdf;
};

/// Gumbel(location, scale): logDensity and cdf at y.
inline GumbelValue gumbelDistribution(double y, double location, double scale) {
  if (!(scale > 0.0)) throw DomainError("gumbelDistribution: scale must be positive");
  const double u = (y - location) / scale;
  const double emu = std::exp(-u);
  return {-std::log(scale) - u - emu, std::exp(-emu)};
}

inline double gumbelLogPdf(double y, double location, double scale) {
  return gumbelDistribution(y, location, scale).logDensity;
}

inline double gumbelCdf(double y, double location, double scale) {
  return gumbelDistribution(y, location, scale).cdf;
}

/// Exact inverse of gumbelCdf.
inline double gumbelQuantile(double p, double location, double scale) {
  if (!(scale > 0.0)) throw DomainError("gumbelQuantile: scale must be positive");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("gumbelQuantile: p outside (0,1)");
  return location - scale * std::log(-std::log(p));
}

/// log(sum(exp(v))) without overflow; -inf for an empty span.
inline double logSumExp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Pairwise tree sum: bit-stable regardless of how callers parallelize
/// upstream work, and more accurate than left-to-right accumulation.
inline double pairwiseSum(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwiseSum(v.subspan(0, half)) + pairwiseSum(v.subspan(half));
}

/// Nodes/weights of an n-point rule. For Hermite rules the weights include
/// the e^{-t^2} factor; for the (0,1) Legendre rule they sum to 1.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;
};

namespace detail {

/// Golub-Welsch: eigen-decompose the symmetric tridiagonal Jacobi matrix.
inline QuadratureRule golubWelsch(const std::vector<double>& offdiag, double weightTotal) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = offdiag[static_cast<std::size_t>(i)];
    jacobi(i + 1, i) = offdiag[static_cast<std::size_t>(i)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.order = n;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = weightTotal * v0 * v0;
  }
  return rule;
}

}  // namespace detail

/// Gauss-Hermite rule for the weight e^{-t^2} on the real line.
inline QuadratureRule gaussHermiteRule(int order) {
  if (order < 2) throw ConfigError("gaussHermiteRule: order must be >= 2");
  std::vector<double> off(static_cast<std::size_t>(order - 1));
  for (int i = 1; i < order; ++i) off[static_cast<std::size_t>(i - 1)] = std::sqrt(i / 2.0);
  return detail::golubWelsch(off, std::sqrt(std::numbers::pi));
}

/// Gauss-Legendre rule mapped to (0,1), weights summing to 1.
inline QuadratureRule gaussLegendreRule01(int order) {
  if (order < 2) throw ConfigError("gaussLegendreRule01: order must be >= 2");
  std::vector<double> off(static_cast<std::size_t>(order - 1));
  for (int i = 1; i < order; ++i)
    off[static_cast<std::size_t>(i - 1)] = i / std::sqrt(4.0 * i * i - 1.0);
  QuadratureRule rule = detail::golubWelsch(off, 2.0);
  for (auto& t : rule.nodes) t = 0.5 * (t + 1.0);
  for (auto& w : rule.weights) w *= 0.5;
  return rule;
}

inline int kDefaultQuadratureOrder = 32;

/// Integral of f against Normal(mean, sd^2) by change of variables
/// y = mean + sqrt(2) * sd * t through a Gauss-Hermite rule.
inline double gaussHermiteExpectation(const std::function<double(double)>& f, double mean,
                                      double sd, const QuadratureRule& rule) {
  if (!(sd > 0.0)) throw DomainError("gaussHermiteExpectation: sd must be positive");
  const double scale = std::numbers::sqrt2 * sd;
  double total = 0.0;
  for (int i = 0; i < rule.order; ++i) {
    const auto k = static_cast<std::size_t>(i);
    total += rule.weights[k] * f(mean + scale * rule.nodes[k]);
  }
  return total / std::sqrt(std::numbers::pi);
}

inline double gaussHermiteExpectation(const std::function<double(double)>& f, double mean,
                                      double sd, int order = kDefaultQuadratureOrder) {
  return gaussHermiteExpectation(f, mean, sd, gaussHermiteRule(order));
}

}  // namespace hte
