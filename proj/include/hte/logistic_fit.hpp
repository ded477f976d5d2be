#pragma once

// Newton-Raphson logistic MLE on a design matrix; shared by the IPWE
// baseline and the sampler's initialization.

#include <Eigen/Dense>

#include "hte/core.hpp"

namespace hte {

struct SeparationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fits z ~ Bernoulli(logistic(X gamma)). Converges when the gradient
/// sup-norm drops below tol or after maxIter sweeps; |gamma| > 30 in any
/// coordinate is treated as separation.
inline Eigen::VectorXd fitLogistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& z,
                                   double tol = 1e-8, int maxIter = 100) {
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(design.cols());
  for (int iter = 0; iter < maxIter; ++iter) {
    const Eigen::VectorXd eta = design * gamma;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p(i) = logistic(eta(i));
      w(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
    }
    const Eigen::VectorXd grad = design.transpose() * (z - p);
    if (grad.lpNorm<Eigen::Infinity>() < tol) break;
    const Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
    gamma += hess.ldlt().solve(grad);
    if (gamma.lpNorm<Eigen::Infinity>() > 30.0)
      throw SeparationError("fitLogistic: separation detected (|gamma| > 30)");
  }
  return gamma;
}

}  // namespace hte
