#include "driftsets/ifcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "driftsets/errors.hpp"
#include "driftsets/scores.hpp"

namespace driftsets {

void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("alpha must be in (0,1)");
}

bool QuantileSolution::infinite() const { return theta == kInf; }

namespace {

double labeled_score(const ScoredUnit& u) {
  if (!u.score) throw ContractViolation("labeled unit without a score");
  return *u.score;
}

double sens_weight(const ScoredUnit& u, const SensitivitySpec& spec) {
  if (!u.y) throw ContractViolation("labeled unit without an outcome");
  return std::exp(-spec.eta(u.x) - spec.gamma(u.x, *u.y));
}

}  // namespace

double if_value(double theta, Covariates x, std::optional<double> r, bool target,
                const RatioFunction& pi, const ConditionalCdf& m, double alpha) {
  if (target) return if_term(0.0, false, m(theta, x), true, alpha);
  if (!r) throw ContractViolation("labeled unit without a score");
  return if_term(pi(x), *r <= theta, m(theta, x), false, alpha);
}

double empirical_if_mean(double theta, std::span<const ScoredUnit> units, const RatioFunction& pi,
                         const ConditionalCdf& m, double alpha) {
  if (units.empty()) throw ContractViolation("empty evaluation set");
  double sum = 0.0;
  for (const auto& u : units) sum += if_value(theta, u.x, u.score, u.target, pi, m, alpha);
  return sum / static_cast<double>(units.size());
}

std::vector<double> candidate_thetas(std::span<const ScoredUnit> units, const ConditionalCdf& m) {
  std::vector<double> c;
  for (const auto& u : units) {
    if (!u.target) c.push_back(labeled_score(u));
  }
  for (double b : m.breakpoints()) {
    if (std::isfinite(b)) c.push_back(b);
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  c.push_back(kInf);
  return c;
}

QuantileSolution solve_weighted(std::span<const ScoredUnit> units, std::span<const double> weights,
                                const ConditionalCdf& m, double alpha) {
  validate_alpha(alpha);
  if (units.empty()) throw ContractViolation("empty evaluation set");
  if (weights.size() != units.size()) throw ContractViolation("one weight per unit");
  const auto candidates = candidate_thetas(units, m);
  const std::size_t nc = candidates.size();

  // Sums run over units in index order for every candidate, so each entry
  // matches a straight evaluation of the mean at that candidate.
  std::vector<double> sums(nc, 0.0);
  std::vector<double> mvals(nc);
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    m.evaluate_sorted(u.x, candidates, mvals);
    if (u.target) {
      for (std::size_t c = 0; c < nc; ++c) sums[c] += if_term(0.0, false, mvals[c], true, alpha);
    } else {
      const double r = labeled_score(u);
      const double w = weights[i];
      for (std::size_t c = 0; c < nc; ++c) {
        sums[c] += if_term(w, r <= candidates[c], mvals[c], false, alpha);
      }
    }
  }
  const double n = static_cast<double>(units.size());
  for (std::size_t c = 0; c + 1 < nc; ++c) {
    const double mean = sums[c] / n;
    if (mean >= 0.0) return {candidates[c], mean};
  }
  return {kInf, sums.back() / n};
}

QuantileSolution solve_quantile(std::span<const ScoredUnit> units, const RatioFunction& pi,
                                const ConditionalCdf& m, double alpha) {
  std::vector<double> weights(units.size(), 0.0);
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!units[i].target) weights[i] = pi(units[i].x);
  }
  return solve_weighted(units, weights, m, alpha);
}

double sens_if_value(double theta, Covariates x, std::optional<double> y, std::optional<double> r,
                     bool target, const SensitivitySpec& spec, const ConditionalCdf& m,
                     double alpha) {
  if (target) return if_term(0.0, false, m(theta, x), true, alpha);
  if (!r || !y) throw ContractViolation("labeled unit needs outcome and score");
  const double w = std::exp(-spec.eta(x) - spec.gamma(x, *y));
  return if_term(w, *r <= theta, m(theta, x), false, alpha);
}

double empirical_sens_if_mean(double theta, std::span<const ScoredUnit> units,
                              const SensitivitySpec& spec, const ConditionalCdf& m, double alpha) {
  if (units.empty()) throw ContractViolation("empty evaluation set");
  double sum = 0.0;
  for (const auto& u : units) {
    sum += sens_if_value(theta, u.x, u.y, u.score, u.target, spec, m, alpha);
  }
  return sum / static_cast<double>(units.size());
}

QuantileSolution solve_quantile_sens(std::span<const ScoredUnit> units,
                                     const SensitivitySpec& spec, const ConditionalCdf& m,
                                     double alpha) {
  std::vector<double> weights(units.size(), 0.0);
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!units[i].target) weights[i] = sens_weight(units[i], spec);
  }
  return solve_weighted(units, weights, m, alpha);
}

}  // namespace driftsets
