#pragma once

// Nuisance functions of the doubly robust estimator:
//   pi(x)      = P(T=1 | X=x) / P(T=0 | X=x)   (covariate density ratio)
//   m(theta,x) = P(R <= theta | X=x)           (conditional score CDF)

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "driftsets/data.hpp"

namespace driftsets {

using RatioFunction = std::function<double(Covariates)>;
using CdfFunction = std::function<double(double, Covariates)>;

double expit(double v);

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separated = false;

  double linear(Covariates x) const;
  double probability(Covariates x) const { return expit(linear(x)); }
};

/// Logistic regression of a 0/1 response on x with intercept, by iteratively
/// reweighted least squares. Stops early (flagging `separated`) when the
/// coefficients diverge.
LogisticFit fit_logistic(const Matrix& x, std::span<const double> response,
                         const LogisticOptions& options = {},
                         const LogisticFit* warm_start = nullptr);

/// Conditional CDF m(theta, x). Implementations must be nondecreasing and
/// right-continuous in theta with values in [0, 1].
class ConditionalCdf {
 public:
  virtual ~ConditionalCdf() = default;

  virtual double operator()(double theta, Covariates x) const = 0;
  /// Thetas where the function may jump. Empty for continuous functions.
  virtual std::vector<double> breakpoints() const { return {}; }
  /// out[j] = (*this)(thetas[j], x); `thetas` ascending. Results must be
  /// bit-identical to operator().
  virtual void evaluate_sorted(Covariates x, std::span<const double> thetas,
                               std::span<double> out) const;
};

/// Wraps an arbitrary function, typically an oracle or a deliberately wrong
/// plug-in.
class FunctionCdf final : public ConditionalCdf {
 public:
  explicit FunctionCdf(CdfFunction f, std::vector<double> breakpoints = {})
      : f_(std::move(f)), breakpoints_(std::move(breakpoints)) {}
  double operator()(double theta, Covariates x) const override { return f_(theta, x); }
  std::vector<double> breakpoints() const override { return breakpoints_; }

 private:
  CdfFunction f_;
  std::vector<double> breakpoints_;
};

/// Exact nuisances, used to check double robustness.
struct OraclePair {
  RatioFunction ratio;
  CdfFunction cdf;
};

class PropensityModel {
 public:
  PropensityModel(LogisticFit fit, double clip);

  /// P(T=1 | x), clipped to [1 - clip, clip].
  double probability(Covariates x) const;
  /// p / (1 - p) of the clipped probability.
  double ratio(Covariates x) const;
  double clip() const { return clip_; }
  const LogisticFit& fit() const { return fit_; }

 private:
  LogisticFit fit_;
  double clip_;
};

/// Logistic propensity of T on X over the units in `indices` (all units when
/// empty). Both classes must be present.
PropensityModel fit_propensity(const Dataset& ds, std::span<const std::size_t> indices = {},
                               double clip = 0.99);

inline double pi_hat(const PropensityModel& model, Covariates x) { return model.ratio(x); }

/// One-dimensional rearrangement: the input values sorted nondecreasingly.
std::vector<double> monotone_rearrange(std::span<const double> values);

/// Grid-of-thresholds estimator: one logistic fit of 1{r <= theta_k} on x per
/// grid point, rearranged pointwise in x, read as a right-continuous step
/// function of theta (0 below the grid, flat above it).
class CondCdfModel final : public ConditionalCdf {
 public:
  CondCdfModel(std::vector<double> grid, std::vector<LogisticFit> fits);

  double operator()(double theta, Covariates x) const override;
  std::vector<double> breakpoints() const override { return grid_; }
  void evaluate_sorted(Covariates x, std::span<const double> thetas,
                       std::span<double> out) const override;

  const std::vector<double>& grid() const { return grid_; }
  /// Rearranged fitted values at x, one per grid point.
  std::vector<double> profile(Covariates x) const;

 private:
  std::vector<double> grid_;
  std::vector<LogisticFit> fits_;
};

/// Grid at the empirical quantiles of `scores` at levels k/(K+1), duplicate
/// thresholds removed. Needs at least `grid_size` scores.
CondCdfModel fit_cond_cdf(const Matrix& x, std::span<const double> scores,
                          std::size_t grid_size = 50);

inline double m_hat(const CondCdfModel& model, double theta, Covariates x) {
  return model(theta, x);
}

}  // namespace driftsets
