#pragma once

// Synthetic datasets from the Gaussian DGP of the simulation study and from a
// censored Tobit-Gumbel DGP. All draws go through the counter-based RNG keyed
// by (seed, unit id, variable tag), so output is seed-deterministic and
// independent of evaluation order.

#include <cstdint>
#include <variant>

#include "hte/censored_params.hpp"
#include "hte/model.hpp"
#include "hte/rng.hpp"

namespace hte {

struct SimulationConfig {
  std::int64_t n = 1000;
  std::variant<GaussianModelParams, TobitGumbelParams> dgp;
  double xSd = 1.5;
  std::uint64_t seed = 0;
  StudySetup setup = StudySetup::RCT_ONE_SIDED;
};

namespace detail {
// Variable tags for the keyed RNG streams.
inline constexpr std::uint64_t kTagX = 1, kTagY0 = 2, kTagY1 = 3, kTagZ = 4, kTagR = 5;

inline int drawArm(StudySetup setup, std::uint64_t seed, std::uint64_t unit) {
  if (setup == StudySetup::OBS_MACRO) return 1;
  CounterRng rng(seed, unit, kTagR);
  return rng.bernoulli(0.5) ? 1 : 0;
}
}  // namespace detail

inline Dataset simulateGaussianStudy(const SimulationConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("simulateGaussianStudy: n must be >= 1");
  const auto* dgp = std::get_if<GaussianModelParams>(&cfg.dgp);
  if (!dgp) throw ConfigError("simulateGaussianStudy: dgp must be GaussianModelParams");
  dgp->validate();

  Dataset data;
  data.d = 1;
  data.setup = cfg.setup;
  data.units.reserve(static_cast<std::size_t>(cfg.n));
  for (std::int64_t i = 0; i < cfg.n; ++i) {
    const auto uid = static_cast<std::uint64_t>(i);
    const double x = CounterRng(cfg.seed, uid, detail::kTagX).normal(0.0, cfg.xSd);
    const double y0 = CounterRng(cfg.seed, uid, detail::kTagY0).normal(dgp->mu0(x), dgp->sigma0);
    const double y1 =
        CounterRng(cfg.seed, uid, detail::kTagY1).normal(dgp->mu1(y0, x), dgp->sigma1);

    UnitRecord u;
    u.id = i;
    u.x = {x};
    u.r = detail::drawArm(cfg.setup, cfg.seed, uid);
    if (u.r == 1) {
      const bool z = CounterRng(cfg.seed, uid, detail::kTagZ).bernoulli(dgp->propensity(y0, x));
      u.z = z ? 1 : 0;
      if (z)
        u.y1 = y1;
      else
        u.y0 = y0;
    } else {
      u.y0 = y0;
    }
    data.units.push_back(std::move(u));
  }
  return data;
}

inline Dataset simulateTobitGumbelStudy(const SimulationConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("simulateTobitGumbelStudy: n must be >= 1");
  const auto* dgp = std::get_if<TobitGumbelParams>(&cfg.dgp);
  if (!dgp) throw ConfigError("simulateTobitGumbelStudy: dgp must be TobitGumbelParams");
  dgp->validate();

  Dataset data;
  data.d = dgp->d();
  data.setup = cfg.setup;
  data.units.reserve(static_cast<std::size_t>(cfg.n));
  for (std::int64_t i = 0; i < cfg.n; ++i) {
    const auto uid = static_cast<std::uint64_t>(i);
    std::vector<double> x(static_cast<std::size_t>(data.d));
    {
      CounterRng rng(cfg.seed, uid, detail::kTagX);
      for (auto& xk : x) xk = rng.normal(0.0, cfg.xSd);
    }
    const double y0Star =
        CounterRng(cfg.seed, uid, detail::kTagY0).gumbel(dgp->mu0(x), dgp->sigma0);
    const double y1Star =
        CounterRng(cfg.seed, uid, detail::kTagY1).normal(dgp->mu1(y0Star, x), dgp->sigma1);
    const double y0 = std::max(y0Star, 0.0);
    const double y1 = std::max(y1Star, 0.0);

    UnitRecord u;
    u.id = i;
    u.x = std::move(x);
    u.r = detail::drawArm(cfg.setup, cfg.seed, uid);
    if (u.r == 1) {
      const bool z = CounterRng(cfg.seed, uid, detail::kTagZ)
                         .bernoulli(logistic(dgp->propensityIndex(y0Star, u.x)));
      u.z = z ? 1 : 0;
      if (z)
        u.y1 = y1;
      else
        u.y0 = y0;
    } else {
      u.y0 = y0;
    }
    data.units.push_back(std::move(u));
  }
  return data;
}

}  // namespace hte
