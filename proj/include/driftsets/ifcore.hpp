#pragma once

// Influence function of the target-population score quantile and the
// estimating equation built from it.
//
//   IF(theta; pi, m) = 1{t=0} pi(x) [1{r <= theta} - m(theta, x)]
//                    + 1{t=1} [m(theta, x) - (1 - alpha)]
//
// The estimate is the smallest candidate theta whose empirical mean is >= 0.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "driftsets/data.hpp"
#include "driftsets/nuisance.hpp"

namespace driftsets {

struct IfConfig {
  double alpha = 0.1;
};

void validate_alpha(double alpha);

/// One unit of an estimating-equation evaluation set. `score` (and `y` for
/// the sensitivity variant) must be set for labeled units.
struct ScoredUnit {
  Covariates x;
  bool target = false;
  std::optional<double> score;
  std::optional<double> y;
};

/// theta = +inf means no finite candidate qualified.
struct QuantileSolution {
  double theta = 0.0;
  double if_mean = 0.0;

  bool infinite() const;
};

/// Shared arithmetic of every IF evaluation path.
inline double if_term(double weight, bool covered, double m_value, bool target, double alpha) {
  if (target) return m_value - (1.0 - alpha);
  return weight * ((covered ? 1.0 : 0.0) - m_value);
}

double if_value(double theta, Covariates x, std::optional<double> r, bool target,
                const RatioFunction& pi, const ConditionalCdf& m, double alpha);

double empirical_if_mean(double theta, std::span<const ScoredUnit> units, const RatioFunction& pi,
                         const ConditionalCdf& m, double alpha);

/// Sorted distinct labeled scores and breakpoints of m, then +inf.
std::vector<double> candidate_thetas(std::span<const ScoredUnit> units, const ConditionalCdf& m);

QuantileSolution solve_quantile(std::span<const ScoredUnit> units, const RatioFunction& pi,
                                const ConditionalCdf& m, double alpha);

/// Known departure from explainable shift: gamma(x, y) is the log odds
/// ratio relative to y = 0 and eta(x) the baseline log odds of staying
/// labeled. gamma(x, 0) must be 0.
struct SensitivitySpec {
  std::function<double(Covariates, double)> gamma;
  std::function<double(Covariates)> eta;
};

double sens_if_value(double theta, Covariates x, std::optional<double> y, std::optional<double> r,
                     bool target, const SensitivitySpec& spec, const ConditionalCdf& m,
                     double alpha);

double empirical_sens_if_mean(double theta, std::span<const ScoredUnit> units,
                              const SensitivitySpec& spec, const ConditionalCdf& m, double alpha);

QuantileSolution solve_quantile_sens(std::span<const ScoredUnit> units,
                                     const SensitivitySpec& spec, const ConditionalCdf& m,
                                     double alpha);

/// Solver core: `weights[i]` multiplies the labeled-unit term of unit i.
QuantileSolution solve_weighted(std::span<const ScoredUnit> units, std::span<const double> weights,
                                const ConditionalCdf& m, double alpha);

}  // namespace driftsets
