#include "driftsets/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "driftsets/errors.hpp"

namespace driftsets {

double expit(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double LogisticFit::linear(Covariates x) const {
  double v = intercept;
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) v += coefficients[j] * x[j];
  return v;
}

namespace {

constexpr double kSeparationNorm = 1e4;
constexpr double kInfinity = std::numeric_limits<double>::infinity();

double deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) - y * eta, computed stably
    const double e = eta[i];
    const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += softplus - y[i] * e;
  }
  return 2.0 * dev;
}

}  // namespace

LogisticFit fit_logistic(const Matrix& x, std::span<const double> response,
                         const LogisticOptions& options, const LogisticFit* warm_start) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != response.size()) {
    throw ContractViolation("logistic regression needs one response per row");
  }
  Eigen::MatrixXd z(n, d + 1);
  z.leftCols(d) = x;
  z.col(d).setOnes();
  const Eigen::Map<const Eigen::VectorXd> y(response.data(), n);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  if (warm_start && warm_start->coefficients.size() == d &&
      std::isfinite(warm_start->intercept)) {
    beta.head(d) = warm_start->coefficients;
    beta[d] = warm_start->intercept;
  } else {
    const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
    beta[d] = std::log(ybar / (1.0 - ybar));
  }

  LogisticFit fit;
  Eigen::VectorXd eta = z * beta;
  double dev = deviance(eta, y);
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
      weight[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
    }
    Eigen::MatrixXd h = z.transpose() * weight.asDiagonal() * z;
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = h.ldlt().solve(z.transpose() * (y - prob));
    beta += step;
    eta = z * beta;
    const double next = deviance(eta, y);
    fit.iterations = it;
    if (!beta.allFinite()) throw NumericError("logistic regression diverged");
    if (beta.cwiseAbs().maxCoeff() > kSeparationNorm || next < 1e-6) {
      fit.separated = true;
      break;
    }
    const bool small_change = std::abs(dev - next) <= options.tolerance * (std::abs(next) + 0.1);
    dev = next;
    if (small_change) {
      fit.converged = true;
      break;
    }
  }
  fit.coefficients = beta.head(d);
  fit.intercept = beta[d];
  return fit;
}

void ConditionalCdf::evaluate_sorted(Covariates x, std::span<const double> thetas,
                                     std::span<double> out) const {
  for (std::size_t j = 0; j < thetas.size(); ++j) out[j] = (*this)(thetas[j], x);
}

PropensityModel::PropensityModel(LogisticFit fit, double clip) : fit_(std::move(fit)), clip_(clip) {
  if (!(clip > 0.5 && clip < 1.0)) throw std::domain_error("propensity clip must be in (0.5, 1)");
}

double PropensityModel::probability(Covariates x) const {
  return std::clamp(fit_.probability(x), 1.0 - clip_, clip_);
}

double PropensityModel::ratio(Covariates x) const {
  const double p = probability(x);
  return p / (1.0 - p);
}

PropensityModel fit_propensity(const Dataset& ds, std::span<const std::size_t> indices,
                               double clip) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  std::vector<double> t;
  t.reserve(indices.size());
  std::size_t targets = 0;
  for (auto i : indices) {
    t.push_back(ds.is_target(i) ? 1.0 : 0.0);
    targets += ds.is_target(i) ? 1 : 0;
  }
  if (targets == 0 || targets == indices.size()) {
    throw ConfigError("propensity fit needs both labeled and target units");
  }
  LogisticFit fit = fit_logistic(ds.rows(indices), t);
  if (fit.separated) {
    spdlog::warn("propensity fit: classes look separable; using the clipped model");
  } else if (!fit.converged) {
    spdlog::warn("propensity fit stopped after {} iterations without converging", fit.iterations);
  }
  return PropensityModel(std::move(fit), clip);
}

std::vector<double> monotone_rearrange(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  std::sort(out.begin(), out.end());
  return out;
}

CondCdfModel::CondCdfModel(std::vector<double> grid, std::vector<LogisticFit> fits)
    : grid_(std::move(grid)), fits_(std::move(fits)) {
  if (grid_.empty() || grid_.size() != fits_.size()) {
    throw ContractViolation("conditional CDF needs one fit per grid point");
  }
  if (!std::is_sorted(grid_.begin(), grid_.end()) ||
      std::adjacent_find(grid_.begin(), grid_.end()) != grid_.end()) {
    throw ContractViolation("conditional CDF grid must be strictly increasing");
  }
}

std::vector<double> CondCdfModel::profile(Covariates x) const {
  std::vector<double> v(fits_.size());
  for (std::size_t k = 0; k < fits_.size(); ++k) v[k] = fits_[k].probability(x);
  std::sort(v.begin(), v.end());
  return v;
}

double CondCdfModel::operator()(double theta, Covariates x) const {
  const auto k = static_cast<std::size_t>(
      std::upper_bound(grid_.begin(), grid_.end(), theta) - grid_.begin());
  if (k == 0) return 0.0;
  return profile(x)[k - 1];
}

void CondCdfModel::evaluate_sorted(Covariates x, std::span<const double> thetas,
                                   std::span<double> out) const {
  const auto prof = profile(x);
  std::size_t k = 0;
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    while (k < grid_.size() && grid_[k] <= thetas[j]) ++k;
    out[j] = k == 0 ? 0.0 : prof[k - 1];
  }
}

CondCdfModel fit_cond_cdf(const Matrix& x, std::span<const double> scores,
                          std::size_t grid_size) {
  const std::size_t n = scores.size();
  if (grid_size == 0) throw ContractViolation("grid size must be positive");
  if (static_cast<std::size_t>(x.rows()) != n) {
    throw ContractViolation("conditional CDF needs one score per row");
  }
  if (n < grid_size) {
    throw ContractViolation(fmt::format("conditional CDF with {} thresholds needs at least {} "
                                        "labeled scores, got {}",
                                        grid_size, grid_size, n));
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid;
  for (std::size_t k = 1; k <= grid_size; ++k) {
    const double level = static_cast<double>(k) / static_cast<double>(grid_size + 1);
    auto idx = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, n);
    const double v = sorted[idx - 1];
    if (grid.empty() || v > grid.back()) grid.push_back(v);
  }

  std::vector<LogisticFit> fits;
  fits.reserve(grid.size());
  std::vector<double> response(n);
  const LogisticFit* previous = nullptr;
  for (double threshold : grid) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n; ++i) {
      response[i] = scores[i] <= threshold ? 1.0 : 0.0;
      ones += scores[i] <= threshold ? 1 : 0;
    }
    LogisticFit fit;
    if (ones == 0 || ones == n) {
      fit.coefficients = Eigen::VectorXd::Zero(x.cols());
      fit.intercept = ones == n ? kInfinity : -kInfinity;
      fit.converged = true;
    } else {
      fit = fit_logistic(x, response, {}, previous);
    }
    fits.push_back(std::move(fit));
    previous = std::isfinite(fits.back().intercept) ? &fits.back() : nullptr;
  }
  return CondCdfModel(std::move(grid), std::move(fits));
}

}  // namespace driftsets
