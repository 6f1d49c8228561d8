#pragma once

// Conformal scores R(x, y) and their inverse set maps
// theta -> C(theta; x) = { y : R(x, y) <= theta }.

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <variant>

#include <Eigen/Dense>

#include "driftsets/data.hpp"

namespace driftsets {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Closed interval [lower, upper]. Empty when lower > upper; the whole line
/// is (-inf, inf).
struct Interval {
  double lower = kInf;
  double upper = -kInf;

  static Interval empty() { return {}; }
  static Interval whole_line() { return {-kInf, kInf}; }
  /// [lower, upper], or the empty interval when lower > upper.
  static Interval closed(double lower, double upper) {
    if (lower > upper) return empty();
    return {lower, upper};
  }

  bool is_empty() const { return lower > upper; }
  bool contains(double y) const { return lower <= y && y <= upper; }
  /// 0 for the empty set, +inf for unbounded sets.
  double width() const { return is_empty() ? 0.0 : upper - lower; }
};

struct RidgeModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double penalty = 0.0;

  double predict(Covariates x) const;
};

/// Minimizes sum of squared residuals + penalty * |coefficients|^2 with an
/// unpenalized intercept by solving the normal equations directly.
RidgeModel fit_ridge(const Matrix& x, std::span<const double> y, double penalty);

double ridge_score(const RidgeModel& model, Covariates x, double y);
Interval ridge_interval(const RidgeModel& model, Covariates x, double theta);

struct QuantileModel {
  double level = 0.5;
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  int iterations = 0;

  double predict(Covariates x) const;
};

struct QuantileFitOptions {
  int max_iterations = 200;
  /// Stop once the relative duality gap falls below this.
  double tolerance = 1e-10;
};

double pinball_loss(double residual, double level);
/// Mean pinball loss of (coefficients, intercept) on the sample.
double pinball_objective(const Matrix& x, std::span<const double> y, double level,
                         const Eigen::VectorXd& coefficients, double intercept);

/// Linear quantile regression. Solves the bounded dual linear program with a
/// primal-dual interior point method.
QuantileModel fit_quantile(const Matrix& x, std::span<const double> y, double level,
                           const QuantileFitOptions& options = {});

double cqr_score(const QuantileModel& lo, const QuantileModel& hi, Covariates x, double y);
Interval cqr_interval(const QuantileModel& lo, const QuantileModel& hi, Covariates x,
                      double theta);

enum class ScoreKind { kAbsoluteResidual, kCqr };

/// How to build a score from training data.
struct ScoreSpec {
  ScoreKind kind = ScoreKind::kAbsoluteResidual;
  double ridge_lambda = 1.0;
  /// Miscoverage used for the CQR quantile levels (alpha/2, 1 - alpha/2).
  /// Defaults to the procedure's alpha.
  std::optional<double> cqr_alpha;
  /// When set, the absolute-residual score uses this center instead of a
  /// ridge fit and needs no training data.
  std::function<double(Covariates)> fixed_center;
};

/// A fitted score together with its nested interval family.
class ScoreModel {
 public:
  static ScoreModel residual(RidgeModel model);
  static ScoreModel residual(std::function<double(Covariates)> center);
  static ScoreModel cqr(QuantileModel lo, QuantileModel hi);

  ScoreKind kind() const;
  double score(Covariates x, double y) const;
  Interval interval(Covariates x, double theta) const;

  /// Point prediction for the residual score.
  double center(Covariates x) const;
  const RidgeModel* ridge() const;
  std::pair<const QuantileModel*, const QuantileModel*> quantiles() const;

 private:
  struct Residual {
    std::optional<RidgeModel> ridge;
    std::function<double(Covariates)> center;
  };
  struct Cqr {
    QuantileModel lo, hi;
  };
  std::variant<Residual, Cqr> impl_;

  explicit ScoreModel(std::variant<Residual, Cqr> impl) : impl_(std::move(impl)) {}
};

/// Fits the score described by `spec` on the labeled units among `indices`.
ScoreModel fit_score(const ScoreSpec& spec, const Dataset& ds,
                     std::span<const std::size_t> indices, double alpha);

}  // namespace driftsets
