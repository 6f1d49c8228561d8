#include "driftsets/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "driftsets/errors.hpp"

namespace driftsets {

namespace {

// Absorbs rounding in q * total so that e.g. 0.9 * 10 still selects the
// ninth of ten equal weights.
constexpr double kLevelSlack = 1e-12;

}  // namespace

double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double q) {
  if (values.empty()) throw ContractViolation("weighted quantile of an empty sample");
  if (values.size() != weights.size()) throw ContractViolation("one weight per value");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("quantile level must be in [0,1]");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (auto i : order) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw ContractViolation("weights must be finite and nonnegative");
    }
    total += weights[i];
  }
  if (!(total > 0.0)) throw ContractViolation("weights sum to zero");
  const double threshold = q * total * (1.0 - kLevelSlack);
  double cum = 0.0;
  for (auto i : order) {
    cum += weights[i];
    if (cum >= threshold) return values[i];
  }
  return values[order.back()];
}

WcpModel::WcpModel(std::function<double(Covariates)> center, RatioFunction ratio,
                   Matrix calibration, std::vector<double> residuals, double alpha, double w_max)
    : center_(std::move(center)), ratio_(std::move(ratio)), alpha_(alpha), w_max_(w_max) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("alpha must be in (0,1)");
  if (static_cast<std::size_t>(calibration.rows()) != residuals.size()) {
    throw ContractViolation("one calibration row per residual");
  }
  if (residuals.empty()) throw ConfigError("weighted conformal needs calibration residuals");
  std::vector<std::size_t> order(residuals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return residuals[a] < residuals[b]; });
  const auto d = static_cast<std::size_t>(calibration.cols());
  double cum = 0.0;
  for (auto i : order) {
    const double w = ratio_(Covariates(calibration.data() + i * d, d));
    if (!(w > 0.0) || !std::isfinite(w)) throw ContractViolation("weights must be positive");
    cum += w;
    sorted_residuals_.push_back(residuals[i]);
    prefix_weights_.push_back(cum);
  }
}

double WcpModel::quantile(Covariates x) const {
  const double total = prefix_weights_.back() + ratio_(x);
  const double threshold = (1.0 - alpha_) * total * (1.0 - kLevelSlack);
  const auto it = std::lower_bound(prefix_weights_.begin(), prefix_weights_.end(), threshold);
  if (it == prefix_weights_.end()) return kInf;
  return sorted_residuals_[static_cast<std::size_t>(it - prefix_weights_.begin())];
}

Interval WcpModel::predict(Covariates x) const {
  const double q = quantile(x);
  if (q == kInf) return Interval::whole_line();
  const double mu = center_(x);
  return Interval::closed(mu - q, mu + q);
}

WcpModel fit_wcp(const Dataset& ds, Rng& rng, const WcpConfig& cfg) {
  const double half[] = {0.5, 0.5};
  const auto plan = split(ds, half, rng, {PartRole::kScoreTrain, PartRole::kCalibrate});
  std::vector<std::size_t> train, calib;
  for (auto i : plan.parts[0]) {
    if (ds.is_labeled(i)) train.push_back(i);
  }
  for (auto i : plan.parts[1]) {
    if (ds.is_labeled(i)) calib.push_back(i);
  }
  if (train.empty() || calib.empty()) throw ConfigError("both halves need labeled units");

  std::vector<double> y;
  for (auto i : train) y.push_back(ds.y(i));
  auto ridge = std::make_shared<const RidgeModel>(fit_ridge(ds.rows(train), y, cfg.ridge_lambda));
  auto propensity = std::make_shared<const PropensityModel>(
      fit_propensity(ds, plan.parts[0], cfg.clip));

  std::vector<double> residuals;
  for (auto i : calib) residuals.push_back(ridge_score(*ridge, ds.x(i), ds.y(i)));
  WcpModel model([ridge](Covariates x) { return ridge->predict(x); },
                 [propensity](Covariates x) { return propensity->ratio(x); }, ds.rows(calib),
                 std::move(residuals), cfg.alpha, cfg.w_max);
  model.ridge = ridge;
  model.propensity = propensity;
  return model;
}

}  // namespace driftsets
