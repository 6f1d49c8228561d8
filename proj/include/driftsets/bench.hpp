#pragma once

// Simulation designs, Monte Carlo harness and coverage evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "driftsets/baselines.hpp"
#include "driftsets/data.hpp"
#include "driftsets/drp.hpp"
#include "driftsets/ifcore.hpp"
#include "driftsets/ite.hpp"
#include "driftsets/nuisance.hpp"
#include "driftsets/rng.hpp"
#include "driftsets/scores.hpp"

namespace driftsets {

// ---- Kang-Schafer design -------------------------------------------------

inline constexpr std::size_t kKangSchaferDim = 4;

struct DgpSpec {
  std::string kind = "kang-schafer";
  std::size_t n = 2000;
};

/// Throws ConfigError for unknown kinds or n < 50.
void validate(const DgpSpec& spec);

double normal_cdf(double z);

/// 210 + 27.4 x1 + 13.7 (x2 + x3 + x4)
double kang_schafer_mean(Covariates x);
/// Log odds of T = 1: -x1 + 0.5 x2 - 0.25 x3 - 0.1 x4
double kang_schafer_log_odds(Covariates x);
double kang_schafer_propensity(Covariates x);
/// Exact density ratio exp(log odds).
double kang_schafer_ratio(Covariates x);
/// Exact m(theta, x) for `score` under unit normal noise.
std::shared_ptr<const ConditionalCdf> kang_schafer_cdf(const ScoreModel& score);

/// x ~ N(0, I_4), y = mean(x) + N(0,1), t ~ Bernoulli(propensity(x)).
MaskedData gen_kang_schafer(std::size_t n, Rng& rng);

struct TestSample {
  Matrix x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  Covariates row(std::size_t i) const {
    return {x.data() + i * static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(x.cols())};
  }
};

/// Fresh draws from the target population, by rejection on t = 1.
TestSample draw_target_sample(std::size_t size, Rng& rng);

// ---- evaluation ----------------------------------------------------------

using SetPredictor = std::function<Interval(Covariates)>;

struct CoverageStats {
  double coverage = 0.0;
  /// Mean of min(width, w_trunc).
  double width = 0.0;
  double infinite_fraction = 0.0;
};

CoverageStats eval_coverage(const SetPredictor& predict, const TestSample& test, double w_trunc);

// ---- Monte Carlo ---------------------------------------------------------

/// Method names understood by run_mc and run_real.
const std::vector<std::string>& method_names();
bool is_method(const std::string& name);

struct McRecord {
  std::string method;
  std::size_t run = 0;
  double coverage = 0.0;
  double width = 0.0;
  double infinite_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct McResult {
  std::string method;
  std::size_t runs = 0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double width = 0.0;
  double width_se = 0.0;
  double infinite_fraction = 0.0;
  /// Test points where the efficient set was not the narrowest candidate.
  std::size_t dominance_violations = 0;
  std::vector<McRecord> records;
};

/// Means and standard errors over `records`, which must be nonempty.
McResult aggregate(const std::string& method, std::vector<McRecord> records);

struct McConfig {
  DgpSpec dgp;
  std::vector<std::string> methods{"full", "split3", "split2", "wcp"};
  std::size_t runs = 500;
  double alpha = 0.1;
  std::uint64_t seed = 1;
  std::size_t test_size = 1000;
  double w_trunc = 10.0;
  double ridge_lambda = 1.0;
  std::vector<double> efcp_lambdas{0.01, 0.1, 1.0, 10.0, 100.0};
  std::size_t cv_folds = 5;
  /// 0 picks DRIFTSETS_THREADS or the hardware concurrency.
  std::size_t threads = 0;
};

/// One result per requested method, in request order.
std::vector<McResult> run_mc(const McConfig& cfg);

/// Worker count: `requested` if positive, else DRIFTSETS_THREADS, else the
/// hardware concurrency.
std::size_t worker_count(std::size_t requested);

/// Runs body(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

// ---- conditional coverage ------------------------------------------------

struct CondConfig {
  double alpha = 0.1;
  std::uint64_t seed = 1;
  std::size_t n = 2000;
  std::size_t points = 200;
  std::size_t draws = 100;
  std::size_t fits = 100;
  double w_trunc = 10.0;
  bool include_wcp = true;
  std::size_t threads = 0;
};

struct CondCovRecord {
  std::string method;
  std::vector<double> x;
  double norm = 0.0;
  double coverage = 0.0;
  double width = 0.0;
};

/// Test points drawn standard normal; for each, outcomes drawn from the
/// outcome model. Coverage and width are averaged over `fits` independent
/// training sets. The DRP arm uses the CQR score with three splits.
std::vector<CondCovRecord> run_conditional(const CondConfig& cfg);

// ---- airfoil -------------------------------------------------------------

struct RealConfig {
  std::filesystem::path data;
  std::vector<std::string> methods{"split3", "wcp"};
  std::size_t runs = 500;
  double alpha = 0.1;
  std::uint64_t seed = 1;
  double w_trunc = 50.0;
  double ridge_lambda = 1.0;
  std::size_t threads = 0;
};

/// Coefficients on the z-scored covariates of the missingness model.
const std::vector<double>& real_propensity_coefficients();

/// expit of the coefficient-weighted z-scores, standardized with the
/// column means and standard deviations of `complete`.
std::function<double(Covariates)> standardized_propensity(const Dataset& complete,
                                                          std::span<const double> coefficients);

/// Loads cfg.data with load_airfoil and runs the experiment.
std::vector<McResult> run_real(const RealConfig& cfg);
/// Same experiment on an already loaded, fully labeled dataset.
std::vector<McResult> run_real(const Dataset& complete, const RealConfig& cfg);

// ---- discrete MNAR model -------------------------------------------------

/// X in {0,1,2} with probabilities (0.3, 0.4, 0.3); Y | X ~ Binomial(5, p_X)
/// with p = (0.3, 0.5, 0.7); P(T = 1 | x, y) = expit(a0 + a1 x + b y).
/// b = 0 is missing at random. The score is R = Y. Every law quantity is
/// computed by enumeration.
struct DiscreteMnar {
  double a0 = 0.0;
  double a1 = 0.0;
  double b = 0.0;

  static constexpr int kLevels = 3;
  static constexpr int kMaxY = 5;

  double p_x(int x) const;
  double p_y_given_x(int y, int x) const;
  double p_target(int x, int y) const;
  double p_target_given_x(int x) const;
  double p_target_total() const;
  /// P(y | x, T = 0), y = 0..5.
  std::vector<double> labeled_pmf(int x) const;
  /// P(y | x, T = 1), y = 0..5.
  std::vector<double> target_pmf(int x) const;
  double target_cdf(double theta) const;
  /// Smallest y with target_cdf(y) >= 1 - alpha.
  double target_quantile(double alpha) const;

  /// P(T=1|x) / P(T=0|x).
  double ratio(int x) const;

  /// Under a hypothesized gamma(x, y) = s y, the baseline log odds implied
  /// by the observable law.
  double implied_eta(int x, double s) const;
  std::vector<double> implied_target_pmf(int x, double s) const;
  SensitivitySpec sensitivity(double s) const;
  /// m_s(theta, x) = sum over y <= theta of the implied target pmf.
  std::shared_ptr<const ConditionalCdf> implied_cdf(double s) const;
  /// The hypothesis that matches the data generating process.
  double true_s() const { return -b; }

  /// One covariate column holding the level of X.
  MaskedData sample(std::size_t n, Rng& rng) const;

  /// Exact mean of the influence function at theta.
  double population_if_mean(double theta, double alpha, const std::function<double(int)>& pi,
                            const std::function<double(double, int)>& m) const;
  /// Same with a labeled-unit weight that may depend on y, as in the
  /// sensitivity estimating equation.
  double population_weighted_if_mean(double theta, double alpha,
                                     const std::function<double(int, int)>& weight,
                                     const std::function<double(double, int)>& m) const;
};

inline int level_of(Covariates x) { return static_cast<int>(x[0]); }

// ---- treatment effects ---------------------------------------------------

struct CausalSample {
  std::vector<CausalUnit> units;
  std::vector<double> y0;
  std::vector<double> y1;
};

/// Kang-Schafer covariates; treatment by the Kang-Schafer propensity; Y(0)
/// from the Kang-Schafer outcome and Y(1) = Y(0) mean + 10 + 5 x2 plus fresh
/// noise.
CausalSample gen_causal(std::size_t n, Rng& rng);
double causal_effect_mean(Covariates x);

}  // namespace driftsets
