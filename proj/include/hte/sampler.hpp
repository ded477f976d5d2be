#pragma once

// Gradient-free adaptive Metropolis-within-Gibbs: one random-walk block per
// scalar parameter plus one sweep over latent values. Proposal scales adapt
// by Robbins-Monro toward 0.44 acceptance during warmup only and are frozen
// afterwards.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hte/core.hpp"
#include "hte/gmm.hpp"
#include "hte/likelihood.hpp"
#include "hte/logistic_fit.hpp"
#include "hte/model.hpp"
#include "hte/rng.hpp"

namespace hte {

struct InitializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DiagnosticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The GMM factor of the MH acceptance probability. The engine
/// realizes it by carrying Q0 additively inside the log target.
inline double quasiAcceptProbability(double q0Candidate, double q0Old) {
  if (!std::isfinite(q0Candidate) || !std::isfinite(q0Old))
    throw DomainError("quasiAcceptProbability: non-finite objective value");
  return std::min(1.0, std::exp(q0Candidate - q0Old));
}

struct PosteriorDraws {
  Eigen::MatrixXd parameterDraws;                 // retained iterations x dim
  std::optional<Eigen::MatrixXd> latentDraws;     // retained iterations x latentDim
  int warmup = 0;
  int chainId = 0;
  std::vector<double> acceptanceRates;            // per parameter block, then latents
  std::uint64_t seed = 0;
  std::vector<std::string> parameterNames;

  int retained() const { return static_cast<int>(parameterDraws.rows()); }
};

/// Generic target for the engine. logDensity sees the internal (sampling)
/// parameterization; recordTransform maps it to the reported scale.
struct MhTarget {
  int paramDim = 0;
  int latentDim = 0;
  std::function<double(std::span<const double>, std::span<const double>)> logDensity;
  // Unnormalized log full conditional of latent j at value v. Must contain
  // every joint term that depends on latent j, so accepted-move deltas apply
  // to the cached joint density.
  std::function<double(int, double, std::span<const double>, std::span<const double>)>
      latentLogConditional;
  std::function<std::vector<double>(std::span<const double>)> recordTransform;
  std::vector<std::string> parameterNames;
};

struct MhOptions {
  int iterations = 3000;
  int warmup = 1000;
  std::uint64_t seed = 0;
  int chainId = 0;
  double targetAccept = 0.44;
  double initialStep = 0.25;
  double initialLatentStep = 0.5;
};

inline PosteriorDraws runMetropolis(const MhTarget& target, std::vector<double> params,
                                    std::vector<double> latents, const MhOptions& opt) {
  if (opt.warmup >= opt.iterations)
    throw ConfigError("runMetropolis: warmup must be smaller than iterations");
  if (static_cast<int>(params.size()) != target.paramDim)
    throw ShapeError("runMetropolis: initial parameter size mismatch");
  if (static_cast<int>(latents.size()) != target.latentDim)
    throw ShapeError("runMetropolis: initial latent size mismatch");

  CounterRng rng(opt.seed, static_cast<std::uint64_t>(opt.chainId), /*tag=*/0x5a3917u);

  double current = target.logDensity(params, latents);
  for (int attempt = 0; !std::isfinite(current); ++attempt) {
    if (attempt >= 100)
      throw InitializationError("runMetropolis: no finite target after 100 jittered retries");
    for (auto& v : params) v += 0.1 * rng.normal();
    current = target.logDensity(params, latents);
  }

  const int dim = target.paramDim, nLat = target.latentDim;
  std::vector<double> logStep(static_cast<std::size_t>(dim), std::log(opt.initialStep));
  std::vector<double> latLogStep(static_cast<std::size_t>(nLat), std::log(opt.initialLatentStep));
  std::vector<long> accepts(static_cast<std::size_t>(dim), 0);
  long latAccepts = 0, latProposals = 0;

  // Running moments feeding the adaptive joint proposal. Coordinate-wise
  // moves alone mix very slowly along correlated ridges of the target, so a
  // full-covariance random-walk move is added once enough history exists.
  Eigen::VectorXd runMean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd runScatter = Eigen::MatrixXd::Zero(dim, dim);
  long momentCount = 0;
  Eigen::MatrixXd jointChol;  // lower factor of the proposal covariance; empty until ready
  double jointLogScale = 0.0;
  const int covStart = std::max(10, opt.warmup / 4);
  const double jointBase = 2.38 / std::sqrt(static_cast<double>(std::max(dim, 1)));

  const int retained = opt.iterations - opt.warmup;
  PosteriorDraws out;
  out.warmup = opt.warmup;
  out.chainId = opt.chainId;
  out.seed = opt.seed;
  out.parameterNames = target.parameterNames;
  out.parameterDraws.resize(retained, dim);
  if (nLat > 0) out.latentDraws.emplace(retained, nLat);

  for (int iter = 0; iter < opt.iterations; ++iter) {
    const bool adapting = iter < opt.warmup;
    const double gamma = adapting ? 1.0 / std::pow(iter + 1.0, 0.6) : 0.0;

    for (int j = 0; j < dim; ++j) {
      const auto js = static_cast<std::size_t>(j);
      const double old = params[js];
      params[js] = old + std::exp(logStep[js]) * rng.normal();
      const double cand = target.logDensity(params, latents);
      const double alpha = std::isfinite(cand) ? std::min(1.0, std::exp(cand - current)) : 0.0;
      if (rng.uniform() < alpha) {
        current = cand;
        if (iter >= opt.warmup) ++accepts[js];
      } else {
        params[js] = old;
      }
      if (adapting) logStep[js] += gamma * (alpha - opt.targetAccept);
    }

    if (dim >= 2) {
      if (adapting && iter >= covStart) {
        ++momentCount;
        Eigen::VectorXd v(dim);
        for (int j = 0; j < dim; ++j) v(j) = params[static_cast<std::size_t>(j)];
        const Eigen::VectorXd delta = v - runMean;
        runMean += delta / static_cast<double>(momentCount);
        runScatter += delta * (v - runMean).transpose();
        if (momentCount >= 10 * dim && momentCount % 50 == 0) {
          Eigen::MatrixXd cov = runScatter / static_cast<double>(momentCount - 1);
          cov.diagonal().array() += 1e-9;
          const Eigen::LLT<Eigen::MatrixXd> llt(cov);
          if (llt.info() == Eigen::Success) jointChol = llt.matrixL();
        }
      }
      // Several joint moves per sweep: the weakly identified block mixes an
      // order of magnitude slower than the rest, and the extra full-density
      // evaluations are cheap next to the per-coordinate sweep.
      if (jointChol.size() > 0) for (int move = 0; move < 3; ++move) {
        Eigen::VectorXd z(dim);
        for (int j = 0; j < dim; ++j) z(j) = rng.normal();
        const Eigen::VectorXd step =
            jointBase * std::exp(jointLogScale) * (jointChol * z);
        std::vector<double> cand(params);
        for (int j = 0; j < dim; ++j) cand[static_cast<std::size_t>(j)] += step(j);
        const double candLp = target.logDensity(cand, latents);
        const double alpha =
            std::isfinite(candLp) ? std::min(1.0, std::exp(candLp - current)) : 0.0;
        if (rng.uniform() < alpha) {
          params = std::move(cand);
          current = candLp;
        }
        if (adapting) jointLogScale += gamma * (alpha - 0.234);
      }
    }

    for (int j = 0; j < nLat; ++j) {
      const auto js = static_cast<std::size_t>(j);
      const double old = latents[js];
      const double condOld = target.latentLogConditional(j, old, params, latents);
      const double cand = old + std::exp(latLogStep[js]) * rng.normal();
      const double condCand = target.latentLogConditional(j, cand, params, latents);
      const double alpha =
          std::isfinite(condCand) ? std::min(1.0, std::exp(condCand - condOld)) : 0.0;
      if (rng.uniform() < alpha) {
        latents[js] = cand;
        current += condCand - condOld;
        if (iter >= opt.warmup) {
          ++latAccepts;
        }
      }
      if (iter >= opt.warmup) ++latProposals;
      if (adapting) latLogStep[js] += gamma * (alpha - opt.targetAccept);
    }
    // Guard against delta-accumulation drift in the cached joint density.
    if (nLat > 0 && iter % 128 == 127) current = target.logDensity(params, latents);

    if (iter >= opt.warmup) {
      const int row = iter - opt.warmup;
      const std::vector<double> recorded =
          target.recordTransform ? target.recordTransform(params) : params;
      for (int j = 0; j < dim; ++j) out.parameterDraws(row, j) = recorded[static_cast<std::size_t>(j)];
      if (nLat > 0)
        for (int j = 0; j < nLat; ++j) (*out.latentDraws)(row, j) = latents[static_cast<std::size_t>(j)];
    }
  }

  out.acceptanceRates.reserve(static_cast<std::size_t>(dim) + (nLat > 0 ? 1 : 0));
  for (int j = 0; j < dim; ++j)
    out.acceptanceRates.push_back(static_cast<double>(accepts[static_cast<std::size_t>(j)]) /
                                  static_cast<double>(retained));
  if (nLat > 0)
    out.acceptanceRates.push_back(latProposals > 0
                                      ? static_cast<double>(latAccepts) / static_cast<double>(latProposals)
                                      : 0.0);
  return out;
}

enum class PosteriorTarget { MARGINAL_BAYES, AUGMENTED_BAYES, QUASI_BAYES };

struct PosteriorSpec {
  PosteriorTarget target = PosteriorTarget::MARGINAL_BAYES;
  const Dataset* data = nullptr;
  PriorSpec prior;
  std::optional<GmmConfig> gmm;
  std::optional<AuxiliaryMoments> aux;
  int quadratureOrder = kDefaultQuadratureOrder;

  void validate() const {
    if (!data) throw ConfigError("PosteriorSpec: data is required");
    if (target == PosteriorTarget::QUASI_BAYES && (!gmm || !aux))
      throw ConfigError("PosteriorSpec: QUASI_BAYES requires gmm config and auxiliary moments");
  }
};

/// Deterministic initialization: least squares for the outcome equations,
/// a logistic fit of z on x for beta, beta2 started off zero.
inline GaussianModelParams initGaussianParams(const Dataset& data) {
  std::vector<double> xs0, ys0;
  for (const auto& u : data.units)
    if (u.y0) {
      xs0.push_back(u.x[0]);
      ys0.push_back(*u.y0);
    }
  GaussianModelParams psi;
  if (xs0.size() >= 3) {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(xs0.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(xs0.size()));
    for (std::size_t i = 0; i < xs0.size(); ++i) {
      design(static_cast<Eigen::Index>(i), 0) = 1.0;
      design(static_cast<Eigen::Index>(i), 1) = xs0[i];
      y(static_cast<Eigen::Index>(i)) = ys0[i];
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
    psi.theta00 = coef(0);
    psi.theta01 = coef(1);
    const double rss = (y - design * coef).squaredNorm();
    psi.sigma0 = std::max(std::sqrt(rss / static_cast<double>(xs0.size())), 1e-3);
  }

  std::vector<const UnitRecord*> treatedUnits;
  for (const auto& u : data.units)
    if (u.treated()) treatedUnits.push_back(&u);
  if (treatedUnits.size() >= 5) {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(treatedUnits.size()), 4);
    Eigen::VectorXd y(static_cast<Eigen::Index>(treatedUnits.size()));
    for (std::size_t i = 0; i < treatedUnits.size(); ++i) {
      const double x = treatedUnits[i]->x[0];
      const double y0hat = psi.mu0(x);  // placeholder for the unobserved y0
      const auto row = static_cast<Eigen::Index>(i);
      design(row, 0) = 1.0;
      design(row, 1) = x;
      design(row, 2) = y0hat;
      design(row, 3) = y0hat * y0hat;
      y(row) = *treatedUnits[i]->y1;
    }
    const Eigen::VectorXd coef =
        (design.transpose() * design + 1e-8 * Eigen::MatrixXd::Identity(4, 4))
            .ldlt()
            .solve(design.transpose() * y);
    psi.theta10 = coef(0);
    psi.theta11 = coef(1);
    psi.theta12 = coef(2);
    psi.theta13 = coef(3);
    const double rss = (y - design * coef).squaredNorm();
    psi.sigma1 = std::max(std::sqrt(rss / static_cast<double>(treatedUnits.size())), 1e-3);
  }

  std::vector<const UnitRecord*> arm1;
  for (const auto& u : data.units)
    if (u.r == 1) arm1.push_back(&u);
  if (arm1.size() >= 5) {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(arm1.size()), 2);
    Eigen::VectorXd z(static_cast<Eigen::Index>(arm1.size()));
    for (std::size_t i = 0; i < arm1.size(); ++i) {
      design(static_cast<Eigen::Index>(i), 0) = 1.0;
      design(static_cast<Eigen::Index>(i), 1) = arm1[i]->x[0];
      z(static_cast<Eigen::Index>(i)) = static_cast<double>(*arm1[i]->z);
    }
    try {
      const Eigen::VectorXd gamma = fitLogistic(design, z);
      psi.beta0 = gamma(0);
      psi.beta1 = gamma(1);
    } catch (const SeparationError&) {
      // keep zeros; the sampler will move from there
    }
  }
  psi.beta2 = 0.1;  // never 0 at initialization
  return psi;
}

namespace detail {
// Internal sampling scale: sigmas are carried as logs (positions 6, 7).
inline GaussianModelParams psiFromSampling(std::span<const double> v) {
  std::vector<double> natural(v.begin(), v.end());
  natural[6] = std::exp(v[6]);
  natural[7] = std::exp(v[7]);
  return GaussianModelParams::fromVector(natural);
}
}  // namespace detail

/// Builds the Gaussian-model target (Bayes or quasi-Bayes) and runs one chain.
inline PosteriorDraws runChain(const PosteriorSpec& spec, int iterations, int warmup,
                               std::uint64_t seed, int chainId = 0) {
  spec.validate();
  const Dataset& data = *spec.data;
  data.validate();
  const QuadratureRule quad = gaussHermiteRule(spec.quadratureOrder);

  std::vector<const UnitRecord*> augmentedUnits;
  if (spec.target == PosteriorTarget::AUGMENTED_BAYES)
    for (const auto& u : data.units)
      if (u.treated()) augmentedUnits.push_back(&u);

  MhTarget target;
  target.paramDim = GaussianModelParams::kDim;
  target.latentDim = static_cast<int>(augmentedUnits.size());
  target.parameterNames = GaussianModelParams::parameterNames();
  target.recordTransform = [](std::span<const double> v) {
    return detail::psiFromSampling(v).toVector();
  };

  const PriorSpec prior = spec.prior;
  const auto gmmTerm = [&spec, &data](const GaussianModelParams& psi) -> double {
    if (spec.target != PosteriorTarget::QUASI_BAYES) return 0.0;
    return gmmObjective(psi, data, *spec.gmm, *spec.aux);
  };

  if (spec.target == PosteriorTarget::AUGMENTED_BAYES) {
    target.logDensity = [&data, &prior, quad, gmmTerm](std::span<const double> v,
                                                       std::span<const double> lat) {
      const GaussianModelParams psi = detail::psiFromSampling(v);
      return augmentedLogPosterior(psi, lat, data, prior) + gmmTerm(psi) + v[6] + v[7];
    };
    target.latentLogConditional = [augmentedUnits](int j, double val, std::span<const double> v,
                                                   std::span<const double>) {
      const GaussianModelParams psi = detail::psiFromSampling(v);
      return y0misFullConditionalLogDensity(val, *augmentedUnits[static_cast<std::size_t>(j)], psi);
    };
  } else {
    target.logDensity = [&data, &prior, quad, gmmTerm](std::span<const double> v,
                                                       std::span<const double>) {
      const GaussianModelParams psi = detail::psiFromSampling(v);
      return marginalLogPosterior(psi, data, prior, quad) + gmmTerm(psi) + v[6] + v[7];
    };
  }

  GaussianModelParams init = initGaussianParams(data);
  std::vector<double> initVec = init.toVector();
  initVec[6] = std::log(init.sigma0);
  initVec[7] = std::log(init.sigma1);

  std::vector<double> initLat(augmentedUnits.size());
  for (std::size_t j = 0; j < augmentedUnits.size(); ++j)
    initLat[j] = init.mu0(augmentedUnits[j]->x[0]);

  MhOptions opt;
  opt.iterations = iterations;
  opt.warmup = warmup;
  opt.seed = seed;
  opt.chainId = chainId;
  return runMetropolis(target, std::move(initVec), std::move(initLat), opt);
}

struct ConvergenceReport {
  std::vector<double> rhatPerParam;
  std::vector<double> essPerParam;
};

namespace detail {

inline std::vector<double> rankNormalize(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> z(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double avgRank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    const double p = (avgRank - 0.375) / (static_cast<double>(n) + 0.25);
    for (std::size_t k = i; k <= j; ++k) z[order[k]] = normalQuantile(p);
    i = j + 1;
  }
  return z;
}

// Multi-chain ESS with Geyer's initial monotone positive sequence.
inline double essFromChains(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains[0].size();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    double s = 0.0;
    for (double v : chains[c]) s += v;
    means[c] = s / static_cast<double>(n);
    double ss = 0.0;
    for (double v : chains[c]) ss += (v - means[c]) * (v - means[c]);
    vars[c] = ss / static_cast<double>(n - 1);
  }
  double w = 0.0;
  for (double v : vars) w += v;
  w /= static_cast<double>(m);
  double b = 0.0;
  if (m > 1) {
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= static_cast<double>(m);
    for (double v : means) b += (v - grand) * (v - grand);
    b *= static_cast<double>(n) / (static_cast<double>(m) - 1.0);
  }
  const double varPlus = w * (static_cast<double>(n) - 1.0) / static_cast<double>(n) +
                         (m > 1 ? b / static_cast<double>(n) : 0.0);
  if (!(varPlus > 0.0)) return static_cast<double>(m * n);

  auto avgAutocov = [&](std::size_t t) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i)
        s += (chains[c][i] - means[c]) * (chains[c][i + t] - means[c]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };

  double tau = 1.0;
  double prevPair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t + 1 < n; t += 2) {
    const double rho1 = 1.0 - (w - avgAutocov(t)) / varPlus;
    const double rho2 = 1.0 - (w - avgAutocov(t + 1)) / varPlus;
    double pair = rho1 + rho2;
    if (pair < 0.0) break;
    pair = std::min(pair, prevPair);  // enforce monotone decrease
    prevPair = pair;
    tau += 2.0 * pair;
  }
  return static_cast<double>(m * n) / tau;
}

}  // namespace detail

/// Split-R-hat and rank-normalized ESS per parameter across chains.
inline ConvergenceReport convergenceDiagnostics(const std::vector<PosteriorDraws>& chains) {
  if (chains.empty()) throw DiagnosticError("convergenceDiagnostics: no chains");
  for (const auto& c : chains)
    if (c.retained() < 100)
      throw DiagnosticError("convergenceDiagnostics: need >= 100 retained draws per chain");
  const int dim = static_cast<int>(chains[0].parameterDraws.cols());
  const int half = chains[0].retained() / 2;

  ConvergenceReport report;
  for (int p = 0; p < dim; ++p) {
    std::vector<std::vector<double>> split;
    for (const auto& c : chains) {
      std::vector<double> a, b;
      for (int i = 0; i < half; ++i) a.push_back(c.parameterDraws(i, p));
      for (int i = half; i < 2 * half; ++i) b.push_back(c.parameterDraws(i, p));
      split.push_back(std::move(a));
      split.push_back(std::move(b));
    }

    const std::size_t m = split.size(), n = split[0].size();
    std::vector<double> means(m), vars(m);
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (double v : split[c]) s += v;
      means[c] = s / static_cast<double>(n);
      double ss = 0.0;
      for (double v : split[c]) ss += (v - means[c]) * (v - means[c]);
      vars[c] = ss / static_cast<double>(n - 1);
    }
    double w = 0.0;
    for (double v : vars) w += v;
    w /= static_cast<double>(m);
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= static_cast<double>(m);
    double b = 0.0;
    for (double v : means) b += (v - grand) * (v - grand);
    b *= static_cast<double>(n) / (static_cast<double>(m) - 1.0);

    double rhat;
    if (w <= 0.0)
      rhat = b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    else
      rhat = std::sqrt((w * (static_cast<double>(n) - 1.0) / static_cast<double>(n) +
                        b / static_cast<double>(n)) /
                       w);
    report.rhatPerParam.push_back(rhat);

    std::vector<double> pooled;
    for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
    const std::vector<double> zAll = detail::rankNormalize(pooled);
    std::vector<std::vector<double>> zChains(m, std::vector<double>(n));
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t i = 0; i < n; ++i) zChains[c][i] = zAll[c * n + i];
    report.essPerParam.push_back(detail::essFromChains(zChains));
  }
  return report;
}

}  // namespace hte
