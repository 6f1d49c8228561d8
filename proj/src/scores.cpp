#include "driftsets/scores.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "driftsets/errors.hpp"

namespace driftsets {

namespace {

double linear_predict(const Eigen::VectorXd& coefficients, double intercept, Covariates x) {
  double v = intercept;
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) v += coefficients[j] * x[j];
  return v;
}

}  // namespace

double RidgeModel::predict(Covariates x) const {
  return linear_predict(coefficients, intercept, x);
}

RidgeModel fit_ridge(const Matrix& x, std::span<const double> y, double penalty) {
  if (!(penalty >= 0.0)) throw std::domain_error("ridge penalty must be nonnegative");
  const auto n = x.rows();
  if (n == 0 || static_cast<std::size_t>(n) != y.size()) {
    throw ContractViolation("ridge needs a nonempty sample with one outcome per row");
  }
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const double ybar = yv.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xbar;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += penalty;
  const Eigen::VectorXd rhs = xc.transpose() * (yv.array() - ybar).matrix();

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13 ||
      ldlt.vectorD().minCoeff() <= 1e-13 * scale) {
    throw NumericError("ridge normal equations are singular; use a positive penalty");
  }
  RidgeModel model;
  model.coefficients = ldlt.solve(rhs);
  model.intercept = ybar - xbar.dot(model.coefficients);
  model.penalty = penalty;
  if (!model.coefficients.allFinite() || !std::isfinite(model.intercept)) {
    throw NumericError("ridge solution is not finite");
  }
  return model;
}

double ridge_score(const RidgeModel& model, Covariates x, double y) {
  return std::abs(y - model.predict(x));
}

Interval ridge_interval(const RidgeModel& model, Covariates x, double theta) {
  if (theta < 0.0) return Interval::empty();
  if (theta == kInf) return Interval::whole_line();
  const double mu = model.predict(x);
  return Interval::closed(mu - theta, mu + theta);
}

double QuantileModel::predict(Covariates x) const {
  return linear_predict(coefficients, intercept, x);
}

double pinball_loss(double residual, double level) {
  return residual * (level - (residual < 0.0 ? 1.0 : 0.0));
}

double pinball_objective(const Matrix& x, std::span<const double> y, double level,
                         const Eigen::VectorXd& coefficients, double intercept) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double fit = intercept + x.row(i).dot(coefficients.transpose());
    total += pinball_loss(y[static_cast<std::size_t>(i)] - fit, level);
  }
  return total / static_cast<double>(x.rows());
}

// Dual of the pinball problem:  max y'a  s.t.  Z'a = (1 - level) Z'1,  0 <= a <= 1,
// with Z = [x, 1]. The multiplier of the equality constraint is minus the
// regression coefficient vector. Mehrotra predictor-corrector on the
// box-constrained form  min c'a, c = -y.
QuantileModel fit_quantile(const Matrix& x, std::span<const double> y, double level,
                           const QuantileFitOptions& options) {
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("quantile level must be in (0,1)");
  const auto n = x.rows();
  const auto d = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) {
    throw ContractViolation("quantile regression needs one outcome per row");
  }
  if (n < d + 2) {
    throw ContractViolation(fmt::format("quantile regression needs at least {} units", d + 2));
  }
  const auto p = d + 1;
  Eigen::MatrixXd z(n, p);
  z.leftCols(d) = x;
  z.col(d).setOnes();
  const Eigen::VectorXd c = -Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const Eigen::VectorXd b = (1.0 - level) * z.transpose() * Eigen::VectorXd::Ones(n);

  auto solve_spd = [&](Eigen::MatrixXd m, const Eigen::VectorXd& rhs) {
    m.diagonal().array() += 1e-12 * std::max(1.0, m.diagonal().maxCoeff());
    return Eigen::VectorXd(m.ldlt().solve(rhs));
  };

  Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 - level);
  Eigen::VectorXd beta = solve_spd(z.transpose() * z, z.transpose() * c);
  Eigen::VectorXd r = c - z * beta;
  const double shift = std::max(1.0, r.cwiseAbs().mean());
  Eigen::VectorXd zl = r.cwiseMax(0.0).array() + shift;  // multiplier of a >= 0
  Eigen::VectorXd wu = zl - r;                            // multiplier of a <= 1

  struct Step {
    Eigen::VectorXd da, dbeta, dz, dw;
  };
  auto newton = [&](const Eigen::VectorXd& s, const Eigen::VectorXd& rp, const Eigen::VectorXd& rd,
                    const Eigen::VectorXd& rxz, const Eigen::VectorXd& rsw) {
    const Eigen::VectorXd theta =
        (zl.array() / a.array() + wu.array() / s.array()).inverse().matrix();
    const Eigen::VectorXd q =
        (rd.array() - rxz.array() / a.array() + rsw.array() / s.array()).matrix();
    const Eigen::MatrixXd m = z.transpose() * theta.asDiagonal() * z;
    Step st;
    st.dbeta = solve_spd(m, rp + z.transpose() * theta.cwiseProduct(q));
    st.da = theta.cwiseProduct(z * st.dbeta - q);
    st.dz = ((rxz.array() - zl.array() * st.da.array()) / a.array()).matrix();
    st.dw = ((rsw.array() + wu.array() * st.da.array()) / s.array()).matrix();
    return st;
  };
  auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double step = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
    }
    return step;
  };

  // Near the optimum the scaled normal equations lose a few digits, so
  // primal feasibility stalls around 1e-8 on badly scaled outcomes.
  constexpr double kFeasibility = 1e-7;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd s = (1.0 - a.array()).matrix();
    const Eigen::VectorXd rp = b - z.transpose() * a;
    const Eigen::VectorXd rd = c - z * beta - zl + wu;
    const double gap = a.dot(zl) + s.dot(wu);
    const double primal = c.dot(a);
    if (gap <= options.tolerance * (1.0 + std::abs(primal)) &&
        rp.norm() <= kFeasibility * (1.0 + b.norm()) && rd.norm() <= kFeasibility * (1.0 + c.norm())) {
      QuantileModel model;
      model.level = level;
      model.coefficients = -beta.head(d);
      model.intercept = -beta[d];
      model.iterations = it;
      return model;
    }
    const double mu = gap / (2.0 * static_cast<double>(n));

    const Eigen::VectorXd rxz0 = -a.cwiseProduct(zl);
    const Eigen::VectorXd rsw0 = -s.cwiseProduct(wu);
    const Step aff = newton(s, rp, rd, rxz0, rsw0);
    const double ap = std::min(max_step(a, aff.da), max_step(s, -aff.da));
    const double ad = std::min(max_step(zl, aff.dz), max_step(wu, aff.dw));
    const double mu_aff = ((a + ap * aff.da).dot(zl + ad * aff.dz) +
                           (s - ap * aff.da).dot(wu + ad * aff.dw)) /
                          (2.0 * static_cast<double>(n));
    const double sigma = std::pow(mu_aff / mu, 3);

    const Eigen::VectorXd rxz =
        (sigma * mu - a.array() * zl.array() - aff.da.array() * aff.dz.array()).matrix();
    const Eigen::VectorXd rsw =
        (sigma * mu - s.array() * wu.array() + aff.da.array() * aff.dw.array()).matrix();
    const Step st = newton(s, rp, rd, rxz, rsw);
    const double sp = std::min(1.0, 0.99995 * std::min(max_step(a, st.da), max_step(s, -st.da)));
    const double sd = std::min(1.0, 0.99995 * std::min(max_step(zl, st.dz), max_step(wu, st.dw)));
    a += sp * st.da;
    beta += sd * st.dbeta;
    zl += sd * st.dz;
    wu += sd * st.dw;
    if (!a.allFinite() || !beta.allFinite()) break;
  }
  throw NumericError(fmt::format("quantile regression did not converge after {} iterations",
                                 options.max_iterations));
}

double cqr_score(const QuantileModel& lo, const QuantileModel& hi, Covariates x, double y) {
  return std::max(lo.predict(x) - y, y - hi.predict(x));
}

Interval cqr_interval(const QuantileModel& lo, const QuantileModel& hi, Covariates x,
                      double theta) {
  if (theta == kInf) return Interval::whole_line();
  return Interval::closed(lo.predict(x) - theta, hi.predict(x) + theta);
}

ScoreModel ScoreModel::residual(RidgeModel model) {
  return ScoreModel(Residual{std::move(model), {}});
}

ScoreModel ScoreModel::residual(std::function<double(Covariates)> center) {
  if (!center) throw ContractViolation("residual score needs a center function");
  return ScoreModel(Residual{std::nullopt, std::move(center)});
}

ScoreModel ScoreModel::cqr(QuantileModel lo, QuantileModel hi) {
  return ScoreModel(Cqr{std::move(lo), std::move(hi)});
}

ScoreKind ScoreModel::kind() const {
  return std::holds_alternative<Residual>(impl_) ? ScoreKind::kAbsoluteResidual : ScoreKind::kCqr;
}

double ScoreModel::center(Covariates x) const {
  if (const auto* r = std::get_if<Residual>(&impl_)) {
    return r->ridge ? r->ridge->predict(x) : r->center(x);
  }
  const auto& q = std::get<Cqr>(impl_);
  return 0.5 * (q.lo.predict(x) + q.hi.predict(x));
}

double ScoreModel::score(Covariates x, double y) const {
  if (const auto* q = std::get_if<Cqr>(&impl_)) return cqr_score(q->lo, q->hi, x, y);
  return std::abs(y - center(x));
}

Interval ScoreModel::interval(Covariates x, double theta) const {
  if (const auto* q = std::get_if<Cqr>(&impl_)) return cqr_interval(q->lo, q->hi, x, theta);
  if (theta < 0.0) return Interval::empty();
  if (theta == kInf) return Interval::whole_line();
  const double mu = center(x);
  return Interval::closed(mu - theta, mu + theta);
}

const RidgeModel* ScoreModel::ridge() const {
  const auto* r = std::get_if<Residual>(&impl_);
  return r && r->ridge ? &*r->ridge : nullptr;
}

std::pair<const QuantileModel*, const QuantileModel*> ScoreModel::quantiles() const {
  const auto* q = std::get_if<Cqr>(&impl_);
  if (!q) return {nullptr, nullptr};
  return {&q->lo, &q->hi};
}

ScoreModel fit_score(const ScoreSpec& spec, const Dataset& ds,
                     std::span<const std::size_t> indices, double alpha) {
  if (spec.kind == ScoreKind::kAbsoluteResidual && spec.fixed_center) {
    return ScoreModel::residual(spec.fixed_center);
  }
  std::vector<std::size_t> labeled;
  for (auto i : indices) {
    if (ds.is_labeled(i)) labeled.push_back(i);
  }
  if (labeled.empty()) throw ConfigError("score training part has no labeled units");
  const Matrix x = ds.rows(labeled);
  std::vector<double> y;
  y.reserve(labeled.size());
  for (auto i : labeled) y.push_back(ds.y(i));

  if (spec.kind == ScoreKind::kAbsoluteResidual) {
    return ScoreModel::residual(fit_ridge(x, y, spec.ridge_lambda));
  }
  const double a = spec.cqr_alpha.value_or(alpha);
  if (!(a > 0.0 && a < 1.0)) throw std::domain_error("CQR miscoverage must be in (0,1)");
  return ScoreModel::cqr(fit_quantile(x, y, a / 2.0), fit_quantile(x, y, 1.0 - a / 2.0));
}

}  // namespace driftsets
