#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "driftsets/bench.hpp"
#include "driftsets/errors.hpp"
#include "driftsets/ifcore.hpp"

using namespace driftsets;

namespace {

const FunctionCdf kZeroCdf([](double, Covariates) { return 0.0; });
const RatioFunction kUnitRatio = [](Covariates) { return 1.0; };

// Straight-line evaluation of the estimating equation, no shared helpers.
double naive_mean(double theta, const std::vector<ScoredUnit>& units,
                  const std::function<double(Covariates)>& pi,
                  const std::function<double(double, Covariates)>& m, double alpha) {
  double total = 0.0;
  for (const auto& u : units) {
    double v;
    if (u.target) {
      v = m(theta, u.x) - (1.0 - alpha);
    } else {
      const double ind = *u.score <= theta ? 1.0 : 0.0;
      v = pi(u.x) * (ind - m(theta, u.x));
    }
    total += v;
  }
  return total / static_cast<double>(units.size());
}

// Smallest candidate with nonnegative naive mean, scanning every candidate.
double scan_solution(const std::vector<ScoredUnit>& units,
                     const std::function<double(Covariates)>& pi,
                     const std::function<double(double, Covariates)>& m,
                     const std::vector<double>& breakpoints, double alpha) {
  std::set<double> cands(breakpoints.begin(), breakpoints.end());
  for (const auto& u : units) {
    if (!u.target) cands.insert(*u.score);
  }
  for (double c : cands) {
    if (naive_mean(c, units, pi, m, alpha) >= 0.0) return c;
  }
  return kInf;
}

struct Instance {
  std::vector<std::vector<double>> xs;
  std::vector<ScoredUnit> units;
};

Instance random_instance(Rng& rng, std::size_t n) {
  Instance inst;
  inst.xs.resize(n);
  for (std::size_t i = 0; i < n; ++i) inst.xs[i] = {rng.normal()};
  for (std::size_t i = 0; i < n; ++i) {
    const bool target = rng.bernoulli(0.4);
    ScoredUnit u{inst.xs[i], target, std::nullopt, std::nullopt};
    if (!target) {
      u.y = rng.normal();
      // coarse scores so that ties occur
      u.score = std::round(4.0 * std::abs(*u.y)) / 4.0;
    }
    inst.units.push_back(u);
  }
  return inst;
}

// Enumeration of the discrete model, written independently of the library.
struct Law {
  double a0, a1, b;
  double px(int x) const { return x == 1 ? 0.4 : 0.3; }
  double pyx(int y, int x) const {
    const double p = 0.3 + 0.2 * x;
    return std::tgamma(6.0) / (std::tgamma(y + 1.0) * std::tgamma(6.0 - y)) * std::pow(p, y) *
           std::pow(1 - p, 5 - y);
  }
  double pt(int x, int y) const { return 1.0 / (1.0 + std::exp(-(a0 + a1 * x + b * y))); }
  double ptx(int x) const {
    double s = 0;
    for (int y = 0; y <= 5; ++y) s += pyx(y, x) * pt(x, y);
    return s;
  }
  double ptotal() const {
    double s = 0;
    for (int x = 0; x < 3; ++x) s += px(x) * ptx(x);
    return s;
  }
  double target_cdf_given_x(double theta, int x) const {
    double s = 0;
    for (int y = 0; y <= 5; ++y) {
      if (y <= theta) s += pyx(y, x) * pt(x, y);
    }
    return s / ptx(x);
  }
  double target_cdf(double theta) const {
    double s = 0;
    for (int x = 0; x < 3; ++x) s += px(x) * ptx(x) * target_cdf_given_x(theta, x);
    return s / ptotal();
  }
  // E[IF] with labeled weight w(x, y) and conditional CDF m(theta, x)
  double if_mean(double theta, double alpha, const std::function<double(int, int)>& w,
                 const std::function<double(double, int)>& m) const {
    double s = 0;
    for (int x = 0; x < 3; ++x) {
      for (int y = 0; y <= 5; ++y) {
        const double joint = px(x) * pyx(y, x);
        const double ind = y <= theta ? 1.0 : 0.0;
        s += joint * (1 - pt(x, y)) * w(x, y) * (ind - m(theta, x));
        s += joint * pt(x, y) * (m(theta, x) - (1 - alpha));
      }
    }
    return s;
  }
};

}  // namespace

TEST(IfValue, Examples) {
  const double x[] = {0.0};
  const FunctionCdf m90([](double, Covariates) { return 0.9; });
  EXPECT_EQ(if_value(1.0, x, std::nullopt, true, kUnitRatio, m90, 0.1), 0.0);
  const FunctionCdf m30([](double, Covariates) { return 0.3; });
  const RatioFunction two = [](Covariates) { return 2.0; };
  EXPECT_NEAR(if_value(1.0, x, 0.5, false, two, m30, 0.1), 1.4, 1e-15);
  const RatioFunction zero = [](Covariates) { return 0.0; };
  EXPECT_EQ(if_value(1.0, x, 0.5, false, zero, m30, 0.1), 0.0);
  EXPECT_EQ(if_value(1.0, x, 7.0, false, zero, m30, 0.1), 0.0);
  EXPECT_THROW(if_value(1.0, x, std::nullopt, false, two, m30, 0.1), ContractViolation);
}

TEST(IfValue, ClosedIndicatorAtTies) {
  const double x[] = {0.0};
  EXPECT_EQ(if_value(2.0, x, 2.0, false, kUnitRatio, kZeroCdf, 0.1), 1.0);
}

TEST(EmpiricalMean, AllTargetsAtCalibratedCdf) {
  const double x[] = {0.0};
  const FunctionCdf m([](double, Covariates) { return 0.75; });
  std::vector<ScoredUnit> units(5, ScoredUnit{x, true, std::nullopt, std::nullopt});
  EXPECT_EQ(empirical_if_mean(3.0, units, kUnitRatio, m, 0.25), 0.0);
  EXPECT_THROW(empirical_if_mean(3.0, {}, kUnitRatio, m, 0.25), ContractViolation);
}

TEST(EmpiricalMean, FourUnitHandComputation) {
  const double x[] = {0.0};
  const std::vector<ScoredUnit> units{{x, false, 1.0, 1.0},
                                      {x, false, 2.0, 2.0},
                                      {x, true, std::nullopt, std::nullopt},
                                      {x, true, std::nullopt, std::nullopt}};
  EXPECT_DOUBLE_EQ(empirical_if_mean(0.5, units, kUnitRatio, kZeroCdf, 0.5), -0.25);
  EXPECT_DOUBLE_EQ(empirical_if_mean(1.0, units, kUnitRatio, kZeroCdf, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(empirical_if_mean(2.0, units, kUnitRatio, kZeroCdf, 0.5), 0.25);
  const auto sol = solve_quantile(units, kUnitRatio, kZeroCdf, 0.5);
  EXPECT_EQ(sol.theta, 1.0);
  EXPECT_EQ(sol.if_mean, 0.0);
  EXPECT_FALSE(sol.infinite());
}

TEST(EmpiricalMean, MatchesNaiveLoop) {
  Rng rng(Seed{21});
  const auto pi = [](Covariates x) { return std::exp(0.5 * x[0]); };
  const auto m = [](double t, Covariates x) { return normal_cdf(t - 0.2 * x[0]); };
  const FunctionCdf cdf(m);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 50);
    for (double theta : {-0.3, 0.0, 0.25, 0.9, 1.7, 4.0}) {
      EXPECT_NEAR(empirical_if_mean(theta, inst.units, pi, cdf, 0.1),
                  naive_mean(theta, inst.units, pi, m, 0.1), 1e-12);
    }
  }
}

TEST(Candidates, SortedDistinctScoresAndBreakpointsThenInfinity) {
  const double x[] = {0.0};
  const std::vector<ScoredUnit> units{{x, false, 2.0, 2.0},
                                      {x, true, std::nullopt, std::nullopt},
                                      {x, false, 1.0, 1.0},
                                      {x, false, 2.0, 2.0}};
  const FunctionCdf m([](double, Covariates) { return 0.0; }, {1.5, 2.0, kInf});
  EXPECT_EQ(candidate_thetas(units, m), (std::vector<double>{1.0, 1.5, 2.0, kInf}));
}

TEST(SolverProperty, ExhaustiveScanAndMinimality) {
  Rng rng(Seed{23});
  std::vector<double> grid;
  for (int k = 1; k <= 12; ++k) grid.push_back(0.17 * k);
  const auto pi = [](Covariates x) { return 0.3 + x[0] * x[0]; };
  // step function in theta on `grid`, varying with x
  const auto m = [&](double t, Covariates x) {
    const auto k = std::upper_bound(grid.begin(), grid.end(), t) - grid.begin();
    return std::min(1.0, static_cast<double>(k) / 12.0 * (0.8 + 0.1 * std::tanh(x[0])));
  };
  const FunctionCdf cdf(m, grid);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_instance(rng, 5 + trial % 40);
    if (std::none_of(inst.units.begin(), inst.units.end(), [](auto& u) { return !u.target; })) {
      continue;
    }
    const double alpha = 0.05 + 0.9 * rng.uniform();
    const auto sol = solve_quantile(inst.units, pi, cdf, alpha);
    EXPECT_EQ(sol.theta, scan_solution(inst.units, pi, m, grid, alpha));
    for (double c : candidate_thetas(inst.units, cdf)) {
      if (c >= sol.theta) break;
      EXPECT_LT(empirical_if_mean(c, inst.units, pi, cdf, alpha), 0.0);
    }
    if (!sol.infinite()) {
      EXPECT_GE(empirical_if_mean(sol.theta, inst.units, pi, cdf, alpha), 0.0);
    }
  }
}

TEST(Solver, TrivialNuisancesGiveOrderStatistic) {
  // pi = 1, m = 0 and as many target as labeled units: the solution is the
  // ceil(n (1 - alpha))-th smallest labeled score.
  Rng rng(Seed{29});
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 37;
    const double alpha = 0.01 + 0.98 * rng.uniform();
    std::vector<double> scores(n);
    for (auto& s : scores) s = rng.normal();
    std::vector<std::vector<double>> xs(2 * n, std::vector<double>{0.0});
    std::vector<ScoredUnit> units;
    for (std::size_t i = 0; i < n; ++i) units.push_back({xs[i], false, scores[i], scores[i]});
    for (std::size_t i = 0; i < n; ++i) units.push_back({xs[n + i], true, {}, {}});
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * (1.0 - alpha)));
    const auto sol = solve_quantile(units, kUnitRatio, kZeroCdf, alpha);
    EXPECT_EQ(sol.theta, sorted[k - 1]) << n << " " << alpha;
  }
}

TEST(Solver, EmpiricalCdfWithoutTargetsSolvesAtSmallestScore) {
  // m equal to the labeled empirical CDF makes the equation vanish for every
  // theta once targets are absent, so the first candidate already qualifies.
  const double x[] = {0.0};
  const std::vector<double> scores{3.0, 1.0, 2.0};
  std::vector<ScoredUnit> units;
  for (double s : scores) units.push_back({x, false, s, s});
  const FunctionCdf ecdf(
      [&](double t, Covariates) {
        return static_cast<double>(std::count_if(scores.begin(), scores.end(),
                                                 [&](double s) { return s <= t; })) /
               3.0;
      },
      {1.0, 2.0, 3.0});
  EXPECT_EQ(solve_quantile(units, kUnitRatio, ecdf, 0.1).theta, 1.0);
}

TEST(Solver, NoQualifyingCandidateIsInfinite) {
  const double x[] = {0.0};
  std::vector<ScoredUnit> units{{x, false, 1e6, 1e6}};
  for (int i = 0; i < 20; ++i) units.push_back({x, true, {}, {}});
  const auto sol = solve_quantile(units, kUnitRatio, kZeroCdf, 1e-3);
  EXPECT_TRUE(sol.infinite());
  EXPECT_THROW(solve_quantile({}, kUnitRatio, kZeroCdf, 0.1), ContractViolation);
  EXPECT_THROW(solve_quantile(units, kUnitRatio, kZeroCdf, 1.0), std::domain_error);
}

TEST(SensIfValue, Examples) {
  const double x[] = {0.0};
  SensitivitySpec spec{[](Covariates, double) { return std::log(2.0); },
                       [](Covariates) { return 0.0; }};
  EXPECT_DOUBLE_EQ(sens_if_value(1.0, x, 0.5, 0.5, false, spec, kZeroCdf, 0.1), 0.5);
  EXPECT_THROW(sens_if_value(1.0, x, std::nullopt, 0.5, false, spec, kZeroCdf, 0.1),
               ContractViolation);
}

TEST(SensIfValue, ReducesToStandardEquation) {
  Rng rng(Seed{31});
  const auto pi = [](Covariates x) { return std::exp(0.7 * x[0]); };
  const FunctionCdf cdf([](double t, Covariates x) { return normal_cdf(t + 0.1 * x[0]); });
  SensitivitySpec spec{[](Covariates, double) { return 0.0; },
                       [&](Covariates x) { return -std::log(pi(x)); }};
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 30);
    for (const auto& u : inst.units) {
      const double a = if_value(0.5, u.x, u.score, u.target, pi, cdf, 0.1);
      const double b = sens_if_value(0.5, u.x, u.y, u.score, u.target, spec, cdf, 0.1);
      // exp(-(-log pi)) reproduces pi up to rounding of exp and log
      EXPECT_NEAR(a, b, 4e-16 * (1.0 + std::abs(a)));
    }
    EXPECT_EQ(solve_quantile(inst.units, pi, cdf, 0.1).theta,
              solve_quantile_sens(inst.units, spec, cdf, 0.1).theta);
  }
}

TEST(DoubleRobustness, EitherNuisanceCorrectGivesTargetCdfIdentity) {
  // Under missingness at random, the population mean of the estimating
  // function equals P(T=1) (F_target(theta) - (1 - alpha)) whenever pi or m
  // is correct.
  const Law law{-0.2, 0.8, 0.0};
  const double alpha = 0.1;
  auto pi_star = [&](int x, int) { return law.ptx(x) / (1 - law.ptx(x)); };
  auto m_star = [&](double t, int x) { return law.target_cdf_given_x(t, x); };
  auto pi_wrong = [](int x, int) { return 0.5 + x; };
  auto m_wrong = [](double t, int) { return t < 0 ? 0.0 : 0.5; };
  for (double theta : {-1.0, 0.0, 1.0, 2.5, 3.0, 4.0, 5.0}) {
    const double truth = law.ptotal() * (law.target_cdf(theta) - (1 - alpha));
    EXPECT_NEAR(law.if_mean(theta, alpha, pi_star, m_wrong), truth, 1e-14);
    EXPECT_NEAR(law.if_mean(theta, alpha, pi_wrong, m_star), truth, 1e-14);
    EXPECT_NEAR(law.if_mean(theta, alpha, pi_star, m_star), truth, 1e-14);
  }
  // both wrong: the identity breaks
  EXPECT_GT(std::abs(law.if_mean(2.0, alpha, pi_wrong, m_wrong) -
                     law.ptotal() * (law.target_cdf(2.0) - (1 - alpha))),
            1e-3);
}

TEST(ProductBias, ShiftIsBoundedByProductOfErrors) {
  const Law law{0.1, -0.5, 0.0};
  const double alpha = 0.1, theta = 2.0;
  auto pi_star = [&](int x) { return law.ptx(x) / (1 - law.ptx(x)); };
  auto m_star = [&](double t, int x) { return law.target_cdf_given_x(t, x); };
  const double dpi[] = {0.7, -0.4, 1.1};
  const double dm[] = {-0.2, 0.3, 0.15};
  const double base = law.ptotal() * (law.target_cdf(theta) - (1 - alpha));
  for (double ep : {0.0, 0.05, 0.2, 0.5}) {
    for (double em : {0.0, 0.05, 0.2, 0.5}) {
      auto w = [&](int x, int) { return pi_star(x) + ep * dpi[x]; };
      auto m = [&](double t, int x) { return m_star(t, x) + em * dm[x]; };
      const double shift = law.if_mean(theta, alpha, w, m) - base;
      double npi = 0, nm = 0, exact = 0;
      for (int x = 0; x < 3; ++x) {
        npi += law.px(x) * std::pow(ep * dpi[x], 2);
        nm += law.px(x) * std::pow(em * dm[x], 2);
        exact += law.px(x) * (1 - law.ptx(x)) * (ep * dpi[x]) * (-em * dm[x]);
      }
      EXPECT_NEAR(shift, exact, 1e-14);
      EXPECT_LE(std::abs(shift), std::sqrt(npi) * std::sqrt(nm) + 1e-15);
    }
  }
}

TEST(Sensitivity, EnumerationOracleForTrueHypothesis) {
  const DiscreteMnar model{-0.4, 0.3, 0.35};
  const Law law{model.a0, model.a1, model.b};
  const double alpha = 0.1, s = model.true_s();
  const auto spec = model.sensitivity(s);
  const auto cdf = model.implied_cdf(s);
  // exact means, with the library's nuisances plugged into the oracle sum
  auto weight = [&](int x, int y) {
    const double xv[] = {static_cast<double>(x)};
    return std::exp(-spec.eta(xv) - spec.gamma(xv, y));
  };
  auto m_wrong = [](double t, int) { return t < 1 ? 0.1 : 0.6; };
  auto eta_wrong = [&](int x, int y) { return weight(x, y) * (1.0 + 0.3 * x); };
  auto m_lib = [&](double t, int x) {
    const double xv[] = {static_cast<double>(x)};
    return (*cdf)(t, xv);
  };
  for (double theta : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) {
    const double truth = law.ptotal() * (law.target_cdf(theta) - (1 - alpha));
    EXPECT_NEAR(law.if_mean(theta, alpha, weight, m_wrong), truth, 1e-13);
    EXPECT_NEAR(law.if_mean(theta, alpha, eta_wrong, m_lib), truth, 1e-13);
    EXPECT_NEAR(model.target_cdf(theta), law.target_cdf(theta), 1e-14);
  }
  double q = 0;
  while (law.target_cdf(q) < 1 - alpha - 1e-12) q += 1;
  EXPECT_EQ(model.target_quantile(alpha), q);

  // sample: empirical mean near its population value, solution near the quantile
  Rng rng(Seed{37});
  const auto data = model.sample(40000, rng);
  std::vector<ScoredUnit> units;
  for (std::size_t i = 0; i < data.observed.size(); ++i) {
    ScoredUnit u{data.observed.x(i), data.observed.is_target(i), {}, {}};
    if (!u.target) u.y = u.score = data.observed.y(i);
    units.push_back(u);
  }
  double sum = 0, sumsq = 0;
  for (const auto& u : units) {
    const double v = sens_if_value(q, u.x, u.y, u.score, u.target, spec, *cdf, alpha);
    sum += v;
    sumsq += v * v;
  }
  const double n = static_cast<double>(units.size());
  const double mean = sum / n, se = std::sqrt((sumsq / n - mean * mean) / n);
  const double truth = law.ptotal() * (law.target_cdf(q) - (1 - alpha));
  EXPECT_LT(std::abs(mean - truth), 4.0 * se);
  const auto sol = solve_quantile_sens(units, spec, *cdf, alpha);
  EXPECT_LE(std::abs(sol.theta - q), 1.0);
}
