#pragma once

// Parameter bundle for the Tobit-Gumbel model with censoring at zero:
//   y0* | x   ~ Gumbel(xi0 + x'xiX, sigma0)
//   y1* | y0*,x ~ N(lambda0 + lambda1 y0* + x'lambdaX, sigma1^2)
//   z   | y0*,x ~ Bernoulli(logistic(beta0 + beta1 y0* + beta2 y0*^2 + x'betaX))
// with y = max(y*, 0) observed.

#include <span>
#include <string>
#include <vector>

#include "hte/core.hpp"

namespace hte {

struct TobitGumbelParams {
  double xi0 = 0.0;
  std::vector<double> xiX;
  double sigma0 = 1.0;
  double lambda0 = 0.0, lambda1 = 0.0;
  std::vector<double> lambdaX;
  double sigma1 = 1.0;
  double beta0 = 0.0, beta1 = 0.0, beta2 = 0.0;
  std::vector<double> betaX;

  int d() const { return static_cast<int>(xiX.size()); }

  double mu0(std::span<const double> x) const {
    double m = xi0;
    for (std::size_t k = 0; k < xiX.size(); ++k) m += xiX[k] * x[k];
    return m;
  }
  double mu1(double y0Star, std::span<const double> x) const {
    double m = lambda0 + lambda1 * y0Star;
    for (std::size_t k = 0; k < lambdaX.size(); ++k) m += lambdaX[k] * x[k];
    return m;
  }
  double propensityIndex(double y0Star, std::span<const double> x) const {
    double idx = beta0 + beta1 * y0Star + beta2 * y0Star * y0Star;
    for (std::size_t k = 0; k < betaX.size(); ++k) idx += betaX[k] * x[k];
    return idx;
  }
  double propensity(double y0Star, std::span<const double> x) const {
    return logistic(propensityIndex(y0Star, x));
  }

  void validate(bool requireIdentified = false) const {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0))
      throw DomainError("TobitGumbelParams: sigma0 and sigma1 must be positive");
    if (xiX.size() != lambdaX.size() || xiX.size() != betaX.size())
      throw ShapeError("TobitGumbelParams: covariate coefficient lengths disagree");
    if (requireIdentified && beta1 == 0.0)
      throw ConfigError("TobitGumbelParams: beta1 = 0 violates the linear-y0 identification condition");
  }

  int dim() const { return 8 + 3 * d(); }
  std::vector<std::string> parameterNames() const {
    std::vector<std::string> names = {"xi0"};
    for (int k = 0; k < d(); ++k) names.push_back("xiX" + std::to_string(k + 1));
    names.emplace_back("sigma0");
    names.emplace_back("lambda0");
    names.emplace_back("lambda1");
    for (int k = 0; k < d(); ++k) names.push_back("lambdaX" + std::to_string(k + 1));
    names.emplace_back("sigma1");
    names.emplace_back("beta0");
    names.emplace_back("beta1");
    names.emplace_back("beta2");
    for (int k = 0; k < d(); ++k) names.push_back("betaX" + std::to_string(k + 1));
    return names;
  }
  std::vector<double> toVector() const {
    std::vector<double> v = {xi0};
    v.insert(v.end(), xiX.begin(), xiX.end());
    v.push_back(sigma0);
    v.push_back(lambda0);
    v.push_back(lambda1);
    v.insert(v.end(), lambdaX.begin(), lambdaX.end());
    v.push_back(sigma1);
    v.push_back(beta0);
    v.push_back(beta1);
    v.push_back(beta2);
    v.insert(v.end(), betaX.begin(), betaX.end());
    return v;
  }
  static TobitGumbelParams fromVector(std::span<const double> v, int d) {
    if (static_cast<int>(v.size()) != 8 + 3 * d)
      throw ShapeError("TobitGumbelParams::fromVector: wrong length");
    TobitGumbelParams p;
    std::size_t i = 0;
    p.xi0 = v[i++];
    p.xiX.assign(v.begin() + static_cast<std::ptrdiff_t>(i), v.begin() + static_cast<std::ptrdiff_t>(i + d));
    i += static_cast<std::size_t>(d);
    p.sigma0 = v[i++];
    p.lambda0 = v[i++];
    p.lambda1 = v[i++];
    p.lambdaX.assign(v.begin() + static_cast<std::ptrdiff_t>(i), v.begin() + static_cast<std::ptrdiff_t>(i + d));
    i += static_cast<std::size_t>(d);
    p.sigma1 = v[i++];
    p.beta0 = v[i++];
    p.beta1 = v[i++];
    p.beta2 = v[i++];
    p.betaX.assign(v.begin() + static_cast<std::ptrdiff_t>(i), v.end());
    return p;
  }
};

}  // namespace hte
