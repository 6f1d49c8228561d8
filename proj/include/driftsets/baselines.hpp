#pragma once

// Weighted split conformal prediction with estimated likelihood-ratio
// weights and a point mass at +inf for the test point.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "driftsets/data.hpp"
#include "driftsets/nuisance.hpp"
#include "driftsets/rng.hpp"
#include "driftsets/scores.hpp"

namespace driftsets {

/// Smallest value v such that the weight of {values <= v} reaches
/// q * total weight. +inf values sort last. Weights need not be normalized.
double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double q);

struct WcpConfig {
  double alpha = 0.1;
  double ridge_lambda = 1.0;
  double clip = 0.99;
  /// Reporting truncation for widths. Never applied to the set itself.
  double w_max = 10.0;
};

class WcpModel {
 public:
  /// `calibration` holds covariates of the calibration residuals, row-aligned.
  WcpModel(std::function<double(Covariates)> center, RatioFunction ratio, Matrix calibration,
           std::vector<double> residuals, double alpha, double w_max);

  /// Weighted quantile of the calibration residuals plus +inf, at level
  /// 1 - alpha, with weights ratio(x_i) and ratio(x) for the test point.
  double quantile(Covariates x) const;
  Interval predict(Covariates x) const;

  double alpha() const { return alpha_; }
  double w_max() const { return w_max_; }
  std::size_t calibration_size() const { return sorted_residuals_.size(); }
  double center(Covariates x) const { return center_(x); }

  std::shared_ptr<const PropensityModel> propensity;
  std::shared_ptr<const RidgeModel> ridge;

 private:
  std::function<double(Covariates)> center_;
  RatioFunction ratio_;
  std::vector<double> sorted_residuals_;
  std::vector<double> prefix_weights_;  // cumulative, in residual order
  double alpha_;
  double w_max_;
};

/// Splits in half: ridge mean and propensity on the first half, residuals of
/// the labeled units of the second half for calibration.
WcpModel fit_wcp(const Dataset& ds, Rng& rng, const WcpConfig& cfg = {});

inline Interval wcp_predict(const WcpModel& model, Covariates x) { return model.predict(x); }

}  // namespace driftsets
