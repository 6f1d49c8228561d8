#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "driftsets/bench.hpp"
#include "driftsets/drp.hpp"
#include "driftsets/errors.hpp"

using namespace driftsets;

namespace {

DrpConfig trivial_config(double alpha, Variant v) {
  DrpConfig cfg;
  cfg.alpha = alpha;
  cfg.variant = v;
  cfg.score.fixed_center = [](Covariates) { return 0.0; };
  cfg.nuisance.ratio = [](Covariates) { return 1.0; };
  cfg.nuisance.cdf = [](const ScoreModel&) {
    return std::make_shared<const FunctionCdf>([](double, Covariates) { return 0.0; });
  };
  return cfg;
}

DrpConfig oracle_config(double alpha, Variant v) {
  DrpConfig cfg;
  cfg.alpha = alpha;
  cfg.variant = v;
  cfg.nuisance.ratio = kang_schafer_ratio;
  cfg.nuisance.cdf = [](const ScoreModel& s) { return kang_schafer_cdf(s); };
  return cfg;
}

double coverage(const FittedDrp& f, const TestSample& test) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hit += f.predict(test.row(i)).contains(test.y[i]);
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

}  // namespace

TEST(FitOnParts, FourUnitHandComputation) {
  Matrix x = Matrix::Zero(4, 1);
  const Dataset ds(x, {0, 0, 1, 1}, {1.0, -2.0, NAN, NAN});
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const auto f = fit_on_parts(ds, trivial_config(0.5, Variant::kSplit2), all, all, all);
  EXPECT_EQ(f.solution.theta, 1.0);
  const double q[] = {0.0};
  const auto set = f.predict(q);
  EXPECT_EQ(set.lower, -1.0);
  EXPECT_EQ(set.upper, 1.0);
}

TEST(FitFull, SingleLabeledUnit) {
  Matrix x(1, 1);
  x << 0.3;
  const Dataset ds(x, {0}, {2.5});
  const auto f = fit_full(ds, trivial_config(0.5, Variant::kFull));
  EXPECT_EQ(f.solution.theta, 2.5);
}

TEST(Predict, RidgeAndCqrSets) {
  RidgeModel zero;
  zero.coefficients = Eigen::VectorXd::Zero(1);
  FittedDrp f{ScoreModel::residual(zero), {}, {}, {}, {1.645, 0.0}, 0.1, {}, {}, {}};
  const double q[] = {3.0};
  const auto set = predict(f, q);
  EXPECT_EQ(set.lower, -1.645);
  EXPECT_EQ(set.upper, 1.645);
  EXPECT_NEAR(set.width(), 3.29, 1e-12);

  f.solution.theta = kInf;
  EXPECT_TRUE(std::isinf(predict(f, q).width()));

  QuantileModel lo, hi;
  lo.coefficients = hi.coefficients = Eigen::VectorXd::Ones(1);
  lo.intercept = -1.0;
  hi.intercept = 2.0;
  FittedDrp c{ScoreModel::cqr(lo, hi), {}, {}, {}, {0.0, 0.0}, 0.1, {}, {}, {}};
  const auto s = predict(c, q);
  EXPECT_EQ(s.lower, 2.0);
  EXPECT_EQ(s.upper, 5.0);
}

TEST(Split3, HygieneAndDeterminism) {
  Rng gen(Seed{41});
  const auto data = gen_kang_schafer(600, gen);
  DrpConfig cfg;
  cfg.variant = Variant::kSplit3;
  Rng a(Seed{5}), b(Seed{5});
  const auto f1 = fit_split3(data.observed, cfg, a);
  const auto f2 = fit_split3(data.observed, cfg, b);
  EXPECT_EQ(f1.solution.theta, f2.solution.theta);
  EXPECT_EQ(f1.eval_indices, f2.eval_indices);
  std::set<std::size_t> seen;
  for (const auto* part : {&f1.score_indices, &f1.nuisance_indices, &f1.eval_indices}) {
    EXPECT_EQ(part->size(), 200u);
    for (auto i : *part) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), 600u);
  ASSERT_NE(f1.propensity, nullptr);
  EXPECT_TRUE(std::isfinite(f1.solution.theta));
}

TEST(Split2, ScoreAndNuisancesShareTheFirstHalf) {
  Rng gen(Seed{43});
  const auto data = gen_kang_schafer(400, gen);
  Rng a(Seed{1}), b(Seed{1});
  DrpConfig cfg;
  const auto f = fit_split2(data.observed, cfg, a);
  EXPECT_EQ(f.score_indices, f.nuisance_indices);
  std::vector<std::size_t> s = f.score_indices, e = f.eval_indices, common;
  std::sort(s.begin(), s.end());
  std::sort(e.begin(), e.end());
  std::set_intersection(s.begin(), s.end(), e.begin(), e.end(), std::back_inserter(common));
  EXPECT_TRUE(common.empty());
  cfg.variant = Variant::kSplit2;
  EXPECT_EQ(fit_drp(data.observed, cfg, b).solution.theta, f.solution.theta);
}

TEST(Split, PartWithoutLabeledUnitsIsConfigError) {
  Matrix x(9, 1);
  for (int i = 0; i < 9; ++i) x(i, 0) = i;
  std::vector<double> y(9, NAN);
  y[0] = 1.0;
  const Dataset ds(x, {0, 1, 1, 1, 1, 1, 1, 1, 1}, y);
  const std::vector<std::size_t> first{0}, rest{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_THROW(fit_on_parts(ds, trivial_config(0.1, Variant::kSplit2), first, first, rest),
               ConfigError);
  DrpConfig fitted;
  EXPECT_THROW(fit_on_parts(ds, fitted, rest, first, first), ConfigError);
}

TEST(Split, TooFewLabeledUnitsForCdfGrid) {
  Rng gen(Seed{47});
  const auto data = gen_kang_schafer(90, gen);
  DrpConfig cfg;
  Rng rng(Seed{2});
  EXPECT_THROW(fit_split3(data.observed, cfg, rng), ConfigError);
}

TEST(DrpProperty, QuantileIsMonotoneInAlpha) {
  Rng gen(Seed{53});
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = gen_kang_schafer(300, gen);
    DrpConfig cfg;
    cfg.variant = Variant::kSplit2;
    Rng rng(Seed{static_cast<std::uint64_t>(trial)});
    const auto f = fit_split2(data.observed, cfg, rng);
    const auto units = scored_units(data.observed, f.score, f.eval_indices);
    double prev = kInf;
    for (double alpha : {0.01, 0.05, 0.1, 0.2, 0.35, 0.5, 0.8}) {
      const double theta = solve_quantile(units, f.ratio, *f.cdf, alpha).theta;
      EXPECT_LE(theta, prev) << alpha;
      prev = theta;
    }
  }
}

TEST(Drp, OracleNuisancesCoverAtNominalLevel) {
  // Score trained on its own split and exact nuisances: coverage over many
  // fits should sit within Monte Carlo error of 0.9.
  const int fits = 60;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < fits; ++r) {
    Rng base(Seed{59}, static_cast<std::uint64_t>(r));
    auto data_rng = base.fork(0), test_rng = base.fork(1), fit_rng = base.fork(2);
    const auto data = gen_kang_schafer(600, data_rng);
    const auto test = draw_target_sample(500, test_rng);
    const auto f = fit_split3(data.observed, oracle_config(0.1, Variant::kSplit3), fit_rng);
    const double c = coverage(f, test);
    sum += c;
    sumsq += c * c;
  }
  const double mean = sum / fits;
  const double se = std::sqrt((sumsq / fits - mean * mean) / (fits - 1));
  EXPECT_LT(std::abs(mean - 0.9), 3.0 * se + 1e-3) << mean << " se " << se;
}

TEST(Drp, FullAndSplit3AgreeAtLargeN) {
  // A single split3 fit solves on a third of the data and misses the bound
  // on roughly one draw in six, so the check is on the median over draws.
  std::vector<double> ratios;
  for (std::uint64_t s = 0; s < 15; ++s) {
    Rng gen(Seed{61}, s);
    const auto data = gen_kang_schafer(2000, gen);
    DrpConfig cfg;
    Rng rng(Seed{3});
    const auto f3 = fit_split3(data.observed, cfg, rng);
    const auto ff = fit_full(data.observed, cfg);
    std::vector<double> scores;
    for (auto i : data.observed.labeled_indices()) {
      scores.push_back(ff.score.score(data.observed.x(i), data.observed.y(i)));
    }
    std::sort(scores.begin(), scores.end());
    const double iqr = scores[scores.size() * 3 / 4] - scores[scores.size() / 4];
    ratios.push_back(std::abs(ff.solution.theta - f3.solution.theta) / iqr);
  }
  std::nth_element(ratios.begin(), ratios.begin() + 7, ratios.end());
  EXPECT_LT(ratios[7], 0.2);
}

TEST(Efcp, SingleCandidateMatchesSplit2) {
  Rng gen(Seed{67});
  const auto data = gen_kang_schafer(500, gen);
  DrpConfig cfg;
  cfg.variant = Variant::kSplit2;
  const ScoreSpec spec = cfg.score;
  Rng a(Seed{9}), b(Seed{9});
  const auto e = fit_efcp(data.observed, std::span<const ScoreSpec>(&spec, 1), cfg, a);
  const auto s = fit_split2(data.observed, cfg, b);
  ASSERT_EQ(e.candidates.size(), 1u);
  EXPECT_EQ(e.candidates[0].solution.theta, s.solution.theta);
  Rng q(Seed{10});
  const auto test = draw_target_sample(50, q);
  for (std::size_t i = 0; i < test.size(); ++i) {
    EXPECT_EQ(e.predict(test.row(i)).lower, s.predict(test.row(i)).lower);
    EXPECT_EQ(e.predict(test.row(i)).upper, s.predict(test.row(i)).upper);
  }
}

TEST(EfcpProperty, SelectedSetIsNarrowestCandidate) {
  Rng gen(Seed{71});
  const auto data = gen_kang_schafer(800, gen);
  std::vector<ScoreSpec> specs;
  for (double lambda : {0.01, 1.0, 100.0, 1e4}) {
    ScoreSpec s;
    s.ridge_lambda = lambda;
    specs.push_back(s);
  }
  ScoreSpec cqr;
  cqr.kind = ScoreKind::kCqr;
  specs.push_back(cqr);
  DrpConfig cfg;
  Rng rng(Seed{4});
  const auto e = fit_efcp(data.observed, specs, cfg, rng);
  ASSERT_EQ(e.candidates.size(), specs.size());
  // one shared propensity
  for (const auto& c : e.candidates) EXPECT_EQ(c.propensity, e.candidates[0].propensity);
  Rng q(Seed{11});
  const auto test = draw_target_sample(300, q);
  for (std::size_t i = 0; i < test.size(); ++i) {
    double best = kInf;
    for (const auto& c : e.candidates) best = std::min(best, c.predict(test.row(i)).width());
    EXPECT_EQ(e.predict(test.row(i)).width(), best);
  }
  EXPECT_THROW(fit_efcp(data.observed, {}, cfg, rng), ContractViolation);
}

TEST(CrossValidation, PicksPenaltyByHeldOutError) {
  Rng gen(Seed{73});
  Matrix x(200, 2);
  std::vector<double> signal(200), noise(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = gen.normal();
    x(i, 1) = gen.normal();
    signal[i] = 5.0 * x(i, 0) - 3.0 * x(i, 1) + 0.1 * gen.normal();
    noise[i] = gen.normal();
  }
  const std::vector<std::uint8_t> t(200, 0);
  const Dataset strong(x, t, signal);
  std::vector<std::size_t> idx(200);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const double penalties[] = {0.01, 1e6};
  Rng r1(Seed{1});
  EXPECT_EQ(cross_validate_ridge(strong, idx, penalties, 5, r1), 0.01);

  // a constant column carries no information, so no penalty is worse than another
  // and the first one wins on ties
  Matrix flat = Matrix::Zero(200, 1);
  const Dataset tie(flat, t, noise);
  Rng r2(Seed{1});
  const double reversed[] = {1e6, 0.01};
  EXPECT_EQ(cross_validate_ridge(tie, idx, reversed, 5, r2), 1e6);
  Rng r3(Seed{1});
  EXPECT_THROW(cross_validate_ridge(strong, idx, penalties, 1, r3), ContractViolation);
}

TEST(CrossValidation, HandCheckedFolds) {
  // points on a line: with no penalty every held-out point is predicted
  // exactly, whatever the shuffle
  Matrix x(4, 1);
  x << 0, 1, 2, 3;
  const Dataset ds(x, {0, 0, 0, 0}, {0.0, 1.0, 2.0, 3.0});
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const double penalties[] = {1e3, 0.0};
  Rng rng(Seed{7});
  EXPECT_EQ(cross_validate_ridge(ds, idx, penalties, 2, rng), 0.0);
}

TEST(CvSplit2, Deterministic) {
  Rng gen(Seed{79});
  const auto data = gen_kang_schafer(500, gen);
  DrpConfig cfg;
  const double penalties[] = {0.01, 0.1, 1, 10, 100};
  Rng a(Seed{3}), b(Seed{3});
  EXPECT_EQ(fit_cv_split2(data.observed, cfg, penalties, 5, a).solution.theta,
            fit_cv_split2(data.observed, cfg, penalties, 5, b).solution.theta);
}
