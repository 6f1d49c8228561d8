#include "driftsets/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include <fmt/format.h>

#include "driftsets/errors.hpp"

namespace driftsets {

void validate(const DgpSpec& spec) {
  if (spec.kind != "kang-schafer") throw ConfigError(fmt::format("unknown DGP '{}'", spec.kind));
  if (spec.n < 50) throw ConfigError("DGP sample size must be at least 50");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double kang_schafer_mean(Covariates x) {
  return 210.0 + 27.4 * x[0] + 13.7 * x[1] + 13.7 * x[2] + 13.7 * x[3];
}

double kang_schafer_log_odds(Covariates x) {
  return -x[0] + 0.5 * x[1] - 0.25 * x[2] - 0.1 * x[3];
}

double kang_schafer_propensity(Covariates x) { return expit(kang_schafer_log_odds(x)); }

double kang_schafer_ratio(Covariates x) { return std::exp(kang_schafer_log_odds(x)); }

std::shared_ptr<const ConditionalCdf> kang_schafer_cdf(const ScoreModel& score) {
  return std::make_shared<const FunctionCdf>([score](double theta, Covariates x) {
    const auto s = score.interval(x, theta);
    if (s.is_empty()) return 0.0;
    const double mu = kang_schafer_mean(x);
    const double hi = s.upper == kInf ? 1.0 : normal_cdf(s.upper - mu);
    const double lo = s.lower == -kInf ? 0.0 : normal_cdf(s.lower - mu);
    return hi - lo;
  });
}

namespace {

void draw_covariates(Rng& rng, double* out) {
  for (std::size_t j = 0; j < kKangSchaferDim; ++j) out[j] = rng.normal();
}

}  // namespace

MaskedData gen_kang_schafer(std::size_t n, Rng& rng) {
  validate(DgpSpec{"kang-schafer", n});
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kKangSchaferDim));
  std::vector<std::uint8_t> t(n);
  std::vector<double> y(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = x.data() + i * kKangSchaferDim;
    draw_covariates(rng, row);
    const Covariates xi(row, kKangSchaferDim);
    truth[i] = kang_schafer_mean(xi) + rng.normal();
    t[i] = rng.bernoulli(kang_schafer_propensity(xi)) ? 1 : 0;
    y[i] = t[i] ? std::numeric_limits<double>::quiet_NaN() : truth[i];
  }
  return {Dataset(std::move(x), std::move(t), std::move(y)), SealedOutcomes(std::move(truth))};
}

TestSample draw_target_sample(std::size_t size, Rng& rng) {
  TestSample s;
  s.x.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(kKangSchaferDim));
  s.y.reserve(size);
  double row[kKangSchaferDim];
  while (s.y.size() < size) {
    draw_covariates(rng, row);
    const Covariates x(row, kKangSchaferDim);
    if (!rng.bernoulli(kang_schafer_propensity(x))) continue;
    const auto i = static_cast<Eigen::Index>(s.y.size());
    for (std::size_t j = 0; j < kKangSchaferDim; ++j) s.x(i, static_cast<Eigen::Index>(j)) = row[j];
    s.y.push_back(kang_schafer_mean(x) + rng.normal());
  }
  return s;
}

CoverageStats eval_coverage(const SetPredictor& predict, const TestSample& test, double w_trunc) {
  if (test.size() == 0) throw ContractViolation("empty test sample");
  std::size_t covered = 0, infinite = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto s = predict(test.row(i));
    covered += s.contains(test.y[i]) ? 1 : 0;
    const double w = s.width();
    infinite += std::isinf(w) ? 1 : 0;
    width += std::min(w, w_trunc);
  }
  const double n = static_cast<double>(test.size());
  return {static_cast<double>(covered) / n, width / n, static_cast<double>(infinite) / n};
}

// ---- Monte Carlo ---------------------------------------------------------

const std::vector<std::string>& method_names() {
  // Position is the method's random stream id; append only.
  static const std::vector<std::string> names{
      "full", "split3", "split2", "wcp", "efcp", "cv", "dr-oracle-pi", "dr-oracle-m",
      "dr-wrong-both", "dr-oracle-both"};
  return names;
}

bool is_method(const std::string& name) {
  const auto& v = method_names();
  return std::find(v.begin(), v.end(), name) != v.end();
}

namespace {

std::size_t method_id(const std::string& name) {
  const auto& v = method_names();
  const auto it = std::find(v.begin(), v.end(), name);
  if (it == v.end()) throw ConfigError(fmt::format("unknown method '{}'", name));
  return static_cast<std::size_t>(it - v.begin());
}

constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kTestStream = 1;
constexpr std::uint64_t kMethodStreamBase = 100;

struct MethodSettings {
  double alpha = 0.1;
  double ridge_lambda = 1.0;
  double w_trunc = 10.0;
  std::vector<double> efcp_lambdas;
  std::size_t cv_folds = 5;
  bool oracles = false;
};

struct MethodOutcome {
  CoverageStats stats;
  std::size_t violations = 0;
};

std::shared_ptr<const ConditionalCdf> constant_cdf(double v) {
  return std::make_shared<const FunctionCdf>([v](double, Covariates) { return v; });
}

RatioFunction unit_ratio() {
  return [](Covariates) { return 1.0; };
}

MethodOutcome run_method(const std::string& name, const Dataset& ds, const TestSample& test,
                         const MethodSettings& s, Rng& rng) {
  DrpConfig cfg;
  cfg.alpha = s.alpha;
  cfg.score.ridge_lambda = s.ridge_lambda;
  auto drp = [&](const FittedDrp& f) {
    return MethodOutcome{eval_coverage([&](Covariates x) { return f.predict(x); }, test, s.w_trunc)};
  };

  if (name == "full" || name == "split3" || name == "split2") {
    cfg.variant = name == "full" ? Variant::kFull
                                 : (name == "split3" ? Variant::kSplit3 : Variant::kSplit2);
    return drp(fit_drp(ds, cfg, rng));
  }
  if (name == "wcp") {
    WcpConfig w;
    w.alpha = s.alpha;
    w.ridge_lambda = s.ridge_lambda;
    w.w_max = s.w_trunc;
    const auto model = fit_wcp(ds, rng, w);
    return {eval_coverage([&](Covariates x) { return model.predict(x); }, test, s.w_trunc)};
  }
  if (name == "efcp") {
    std::vector<ScoreSpec> specs;
    for (double lambda : s.efcp_lambdas) {
      ScoreSpec spec;
      spec.ridge_lambda = lambda;
      specs.push_back(spec);
    }
    const auto model = fit_efcp(ds, specs, cfg, rng);
    MethodOutcome out{eval_coverage([&](Covariates x) { return model.predict(x); }, test, s.w_trunc)};
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto x = test.row(i);
      double best = kInf;
      for (const auto& c : model.candidates) best = std::min(best, c.predict(x).width());
      if (model.predict(x).width() != best) ++out.violations;
    }
    return out;
  }
  if (name == "cv") {
    return drp(fit_cv_split2(ds, cfg, s.efcp_lambdas, s.cv_folds, rng));
  }
  if (name.rfind("dr-", 0) == 0) {
    if (!s.oracles) throw ConfigError(fmt::format("method '{}' needs a simulated design", name));
    cfg.variant = Variant::kSplit2;
    const bool good_pi = name == "dr-oracle-pi" || name == "dr-oracle-both";
    const bool good_m = name == "dr-oracle-m" || name == "dr-oracle-both";
    cfg.nuisance.ratio = good_pi ? RatioFunction(kang_schafer_ratio) : unit_ratio();
    if (good_m) {
      cfg.nuisance.cdf = [](const ScoreModel& score) { return kang_schafer_cdf(score); };
    } else {
      cfg.nuisance.cdf = [](const ScoreModel&) { return constant_cdf(0.5); };
    }
    return drp(fit_drp(ds, cfg, rng));
  }
  throw ConfigError(fmt::format("unknown method '{}'", name));
}

MethodSettings settings_from(const McConfig& cfg) {
  return {cfg.alpha, cfg.ridge_lambda, cfg.w_trunc, cfg.efcp_lambdas, cfg.cv_folds, true};
}

void check_methods(const std::vector<std::string>& methods) {
  if (methods.empty()) throw ConfigError("no methods requested");
  for (const auto& m : methods) method_id(m);
}

std::vector<McResult> collect(const std::vector<std::string>& methods,
                              std::vector<std::vector<McRecord>>& per_run,
                              std::vector<std::vector<std::size_t>>& violations) {
  std::vector<McResult> out;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    std::vector<McRecord> records;
    std::size_t v = 0;
    for (std::size_t r = 0; r < per_run.size(); ++r) {
      records.push_back(per_run[r][k]);
      v += violations[r][k];
    }
    auto res = aggregate(methods[k], std::move(records));
    res.dominance_violations = v;
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace

McResult aggregate(const std::string& method, std::vector<McRecord> records) {
  if (records.empty()) throw ContractViolation("no records to aggregate");
  std::stable_sort(records.begin(), records.end(),
                   [](const McRecord& a, const McRecord& b) { return a.run < b.run; });
  McResult r;
  r.method = method;
  r.runs = records.size();
  const double n = static_cast<double>(records.size());
  for (const auto& rec : records) {
    r.coverage += rec.coverage;
    r.width += rec.width;
    r.infinite_fraction += rec.infinite_fraction;
  }
  r.coverage /= n;
  r.width /= n;
  r.infinite_fraction /= n;
  if (records.size() > 1) {
    double sc = 0.0, sw = 0.0;
    for (const auto& rec : records) {
      sc += (rec.coverage - r.coverage) * (rec.coverage - r.coverage);
      sw += (rec.width - r.width) * (rec.width - r.width);
    }
    r.coverage_se = std::sqrt(sc / (n - 1.0) / n);
    r.width_se = std::sqrt(sw / (n - 1.0) / n);
  }
  r.records = std::move(records);
  return r;
}

std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DRIFTSETS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

std::vector<McResult> run_mc(const McConfig& cfg) {
  validate(cfg.dgp);
  validate_alpha(cfg.alpha);
  check_methods(cfg.methods);
  if (cfg.runs == 0) throw ConfigError("runs must be positive");
  const auto settings = settings_from(cfg);

  std::vector<std::vector<McRecord>> per_run(cfg.runs);
  std::vector<std::vector<std::size_t>> violations(cfg.runs);
  parallel_for(cfg.runs, worker_count(cfg.threads), [&](std::size_t run) {
    const Rng base(Seed{cfg.seed}, run);
    Rng data_rng = base.fork(kDataStream);
    Rng test_rng = base.fork(kTestStream);
    const auto masked = gen_kang_schafer(cfg.dgp.n, data_rng);
    // Test points come from their own stream, so they are fresh draws that
    // share nothing with the training units.
    const auto test = draw_target_sample(cfg.test_size, test_rng);
    for (const auto& name : cfg.methods) {
      Rng rng = base.fork(kMethodStreamBase + method_id(name));
      const auto out = run_method(name, masked.observed, test, settings, rng);
      per_run[run].push_back({name, run, out.stats.coverage, out.stats.width,
                              out.stats.infinite_fraction, mix_seed(cfg.seed, run)});
      violations[run].push_back(out.violations);
    }
  });
  return collect(cfg.methods, per_run, violations);
}

// ---- conditional coverage ------------------------------------------------

std::vector<CondCovRecord> run_conditional(const CondConfig& cfg) {
  validate_alpha(cfg.alpha);
  if (cfg.points == 0 || cfg.draws == 0 || cfg.fits == 0) {
    throw ConfigError("points, draws and fits must be positive");
  }
  constexpr std::uint64_t kPointStream = 0xC0DE;
  Rng point_rng(Seed{cfg.seed}, kPointStream);
  Matrix points(static_cast<Eigen::Index>(cfg.points), static_cast<Eigen::Index>(kKangSchaferDim));
  for (std::size_t p = 0; p < cfg.points; ++p) draw_covariates(point_rng, points.data() + p * kKangSchaferDim);
  auto point = [&](std::size_t p) { return Covariates(points.data() + p * kKangSchaferDim, kKangSchaferDim); };

  const std::size_t n_methods = cfg.include_wcp ? 2 : 1;
  // [fit][method][point]
  std::vector<std::vector<std::vector<double>>> cover(cfg.fits), width(cfg.fits);
  parallel_for(cfg.fits, worker_count(cfg.threads), [&](std::size_t f) {
    const Rng base(Seed{cfg.seed}, f);
    Rng data_rng = base.fork(kDataStream);
    Rng draw_rng = base.fork(kTestStream);
    const auto masked = gen_kang_schafer(cfg.n, data_rng);

    std::vector<SetPredictor> predictors;
    DrpConfig drp;
    drp.alpha = cfg.alpha;
    drp.variant = Variant::kSplit3;
    drp.score.kind = ScoreKind::kCqr;
    drp.score.cqr_alpha = cfg.alpha;
    Rng drp_rng = base.fork(kMethodStreamBase + method_id("split3"));
    auto fitted = std::make_shared<FittedDrp>(fit_drp(masked.observed, drp, drp_rng));
    predictors.emplace_back([fitted](Covariates x) { return fitted->predict(x); });
    if (cfg.include_wcp) {
      WcpConfig w;
      w.alpha = cfg.alpha;
      w.w_max = cfg.w_trunc;
      Rng wcp_rng = base.fork(kMethodStreamBase + method_id("wcp"));
      auto model = std::make_shared<WcpModel>(fit_wcp(masked.observed, wcp_rng, w));
      predictors.emplace_back([model](Covariates x) { return model->predict(x); });
    }

    cover[f].assign(n_methods, std::vector<double>(cfg.points, 0.0));
    width[f].assign(n_methods, std::vector<double>(cfg.points, 0.0));
    for (std::size_t p = 0; p < cfg.points; ++p) {
      const auto x = point(p);
      std::vector<Interval> sets;
      for (std::size_t k = 0; k < n_methods; ++k) {
        sets.push_back(predictors[k](x));
        width[f][k][p] = std::min(sets.back().width(), cfg.w_trunc);
      }
      const double mu = kang_schafer_mean(x);
      for (std::size_t d = 0; d < cfg.draws; ++d) {
        const double y = mu + draw_rng.normal();
        for (std::size_t k = 0; k < n_methods; ++k) cover[f][k][p] += sets[k].contains(y) ? 1.0 : 0.0;
      }
      for (std::size_t k = 0; k < n_methods; ++k) cover[f][k][p] /= static_cast<double>(cfg.draws);
    }
  });

  std::vector<CondCovRecord> out;
  const char* labels[] = {"split3-cqr", "wcp"};
  for (std::size_t k = 0; k < n_methods; ++k) {
    for (std::size_t p = 0; p < cfg.points; ++p) {
      CondCovRecord rec;
      rec.method = labels[k];
      const auto x = point(p);
      rec.x.assign(x.begin(), x.end());
      rec.norm = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
      for (std::size_t f = 0; f < cfg.fits; ++f) {
        rec.coverage += cover[f][k][p];
        rec.width += width[f][k][p];
      }
      rec.coverage /= static_cast<double>(cfg.fits);
      rec.width /= static_cast<double>(cfg.fits);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

// ---- airfoil -------------------------------------------------------------

const std::vector<double>& real_propensity_coefficients() {
  static const std::vector<double> c{-1.0, 0.5, -0.25, -0.1, 0.0};
  return c;
}

std::function<double(Covariates)> standardized_propensity(const Dataset& complete,
                                                          std::span<const double> coefficients) {
  const auto d = complete.dim();
  if (coefficients.size() != d) throw ContractViolation("one coefficient per covariate");
  const Matrix& x = complete.covariates();
  Eigen::VectorXd mean = x.colwise().mean().transpose();
  Eigen::VectorXd sd(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double s = std::sqrt((x.col(j).array() - mean[j]).square().sum() /
                               std::max<double>(1.0, static_cast<double>(x.rows() - 1)));
    sd[j] = s > 0.0 ? s : 1.0;
  }
  std::vector<double> c(coefficients.begin(), coefficients.end());
  return [mean, sd, c](Covariates v) {
    double lin = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      lin += c[j] * (v[j] - mean[jj]) / sd[jj];
    }
    return expit(lin);
  };
}

std::vector<McResult> run_real(const RealConfig& cfg) {
  return run_real(load_airfoil(cfg.data), cfg);
}

std::vector<McResult> run_real(const Dataset& complete, const RealConfig& cfg) {
  validate_alpha(cfg.alpha);
  check_methods(cfg.methods);
  if (cfg.runs == 0) throw ConfigError("runs must be positive");
  if (complete.target_count() != 0) throw ConfigError("real-data experiment needs every outcome");
  const auto& coef = real_propensity_coefficients();
  if (complete.dim() != coef.size()) {
    throw ConfigError(fmt::format("real-data propensity expects {} covariates", coef.size()));
  }
  const auto propensity = standardized_propensity(complete, coef);
  MethodSettings settings{cfg.alpha, cfg.ridge_lambda, cfg.w_trunc,
                          McConfig{}.efcp_lambdas, McConfig{}.cv_folds, false};

  std::vector<std::vector<McRecord>> per_run(cfg.runs);
  std::vector<std::vector<std::size_t>> violations(cfg.runs);
  parallel_for(cfg.runs, worker_count(cfg.threads), [&](std::size_t run) {
    const Rng base(Seed{cfg.seed}, run);
    Rng data_rng = base.fork(kDataStream);
    const auto masked = apply_missingness(complete, propensity, data_rng);
    const auto& obs = masked.observed;
    TestSample test;
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (obs.is_target(i)) targets.push_back(i);
    }
    if (targets.empty()) throw ConfigError("missingness produced no target units");
    test.x = obs.rows(targets);
    for (auto i : targets) test.y.push_back(masked.truth.reveal(i));
    for (const auto& name : cfg.methods) {
      Rng rng = base.fork(kMethodStreamBase + method_id(name));
      const auto out = run_method(name, obs, test, settings, rng);
      per_run[run].push_back({name, run, out.stats.coverage, out.stats.width,
                              out.stats.infinite_fraction, mix_seed(cfg.seed, run)});
      violations[run].push_back(out.violations);
    }
  });
  return collect(cfg.methods, per_run, violations);
}

// ---- discrete MNAR model -------------------------------------------------

namespace {

constexpr double kLevelProb[] = {0.3, 0.4, 0.3};
constexpr double kSuccess[] = {0.3, 0.5, 0.7};

double binomial_pmf(int k, int n, double p) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

void check_level(int x) {
  if (x < 0 || x >= DiscreteMnar::kLevels) throw ContractViolation("covariate level out of range");
}

}  // namespace

double DiscreteMnar::p_x(int x) const {
  check_level(x);
  return kLevelProb[x];
}

double DiscreteMnar::p_y_given_x(int y, int x) const {
  check_level(x);
  if (y < 0 || y > kMaxY) return 0.0;
  return binomial_pmf(y, kMaxY, kSuccess[x]);
}

double DiscreteMnar::p_target(int x, int y) const { return expit(a0 + a1 * x + b * y); }

double DiscreteMnar::p_target_given_x(int x) const {
  double s = 0.0;
  for (int y = 0; y <= kMaxY; ++y) s += p_y_given_x(y, x) * p_target(x, y);
  return s;
}

double DiscreteMnar::p_target_total() const {
  double s = 0.0;
  for (int x = 0; x < kLevels; ++x) s += p_x(x) * p_target_given_x(x);
  return s;
}

std::vector<double> DiscreteMnar::labeled_pmf(int x) const {
  const double q = 1.0 - p_target_given_x(x);
  std::vector<double> v(kMaxY + 1);
  for (int y = 0; y <= kMaxY; ++y) v[y] = p_y_given_x(y, x) * (1.0 - p_target(x, y)) / q;
  return v;
}

std::vector<double> DiscreteMnar::target_pmf(int x) const {
  const double q = p_target_given_x(x);
  std::vector<double> v(kMaxY + 1);
  for (int y = 0; y <= kMaxY; ++y) v[y] = p_y_given_x(y, x) * p_target(x, y) / q;
  return v;
}

double DiscreteMnar::target_cdf(double theta) const {
  double s = 0.0;
  for (int x = 0; x < kLevels; ++x) {
    for (int y = 0; y <= kMaxY && y <= theta; ++y) s += p_x(x) * p_y_given_x(y, x) * p_target(x, y);
  }
  return s / p_target_total();
}

double DiscreteMnar::target_quantile(double alpha) const {
  validate_alpha(alpha);
  for (int y = 0; y <= kMaxY; ++y) {
    if (target_cdf(y) >= 1.0 - alpha - 1e-12) return y;
  }
  return kMaxY;
}

double DiscreteMnar::ratio(int x) const {
  const double p = p_target_given_x(x);
  return p / (1.0 - p);
}

double DiscreteMnar::implied_eta(int x, double s) const {
  const auto pmf = labeled_pmf(x);
  double tilt = 0.0;
  for (int y = 0; y <= kMaxY; ++y) tilt += pmf[y] * std::exp(-s * y);
  return -std::log(ratio(x) / tilt);
}

std::vector<double> DiscreteMnar::implied_target_pmf(int x, double s) const {
  const auto pmf = labeled_pmf(x);
  const double eta = implied_eta(x, s);
  const double back = 1.0 / ratio(x);
  std::vector<double> v(kMaxY + 1);
  for (int y = 0; y <= kMaxY; ++y) v[y] = pmf[y] * std::exp(-eta - s * y) * back;
  return v;
}

SensitivitySpec DiscreteMnar::sensitivity(double s) const {
  std::array<double, kLevels> eta{};
  for (int x = 0; x < kLevels; ++x) eta[x] = implied_eta(x, s);
  SensitivitySpec spec;
  spec.gamma = [s](Covariates, double y) { return s * y; };
  spec.eta = [eta](Covariates x) { return eta[static_cast<std::size_t>(level_of(x))]; };
  return spec;
}

std::shared_ptr<const ConditionalCdf> DiscreteMnar::implied_cdf(double s) const {
  std::array<std::array<double, kMaxY + 1>, kLevels> cum{};
  for (int x = 0; x < kLevels; ++x) {
    const auto pmf = implied_target_pmf(x, s);
    double c = 0.0;
    for (int y = 0; y <= kMaxY; ++y) {
      c += pmf[y];
      cum[x][y] = c;
    }
  }
  std::vector<double> breaks;
  for (int y = 0; y <= kMaxY; ++y) breaks.push_back(y);
  return std::make_shared<const FunctionCdf>(
      [cum](double theta, Covariates x) {
        if (theta < 0.0) return 0.0;
        const int y = static_cast<int>(std::min<double>(std::floor(theta), kMaxY));
        return cum[static_cast<std::size_t>(level_of(x))][static_cast<std::size_t>(y)];
      },
      breaks);
}

MaskedData DiscreteMnar::sample(std::size_t n, Rng& rng) const {
  Matrix x(static_cast<Eigen::Index>(n), 1);
  std::vector<std::uint8_t> t(n);
  std::vector<double> y(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const int level = u < kLevelProb[0] ? 0 : (u < kLevelProb[0] + kLevelProb[1] ? 1 : 2);
    int count = 0;
    for (int k = 0; k < kMaxY; ++k) count += rng.bernoulli(kSuccess[level]) ? 1 : 0;
    x(static_cast<Eigen::Index>(i), 0) = level;
    truth[i] = count;
    t[i] = rng.bernoulli(p_target(level, count)) ? 1 : 0;
    y[i] = t[i] ? std::numeric_limits<double>::quiet_NaN() : truth[i];
  }
  return {Dataset(std::move(x), std::move(t), std::move(y)), SealedOutcomes(std::move(truth))};
}

double DiscreteMnar::population_if_mean(double theta, double alpha,
                                        const std::function<double(int)>& pi,
                                        const std::function<double(double, int)>& m) const {
  return population_weighted_if_mean(
      theta, alpha, [&](int x, int) { return pi(x); }, m);
}

double DiscreteMnar::population_weighted_if_mean(
    double theta, double alpha, const std::function<double(int, int)>& weight,
    const std::function<double(double, int)>& m) const {
  double total = 0.0;
  for (int x = 0; x < kLevels; ++x) {
    const double mx = m(theta, x);
    double labeled = 0.0;
    for (int y = 0; y <= kMaxY; ++y) {
      const double mass = p_y_given_x(y, x) * (1.0 - p_target(x, y));
      labeled += mass * weight(x, y) * ((y <= theta ? 1.0 : 0.0) - mx);
    }
    total += p_x(x) * (labeled + p_target_given_x(x) * (mx - (1.0 - alpha)));
  }
  return total;
}

// ---- treatment effects ---------------------------------------------------

double causal_effect_mean(Covariates x) { return 10.0 + 5.0 * x[1]; }

CausalSample gen_causal(std::size_t n, Rng& rng) {
  CausalSample s;
  s.units.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(kKangSchaferDim);
    draw_covariates(rng, x.data());
    const bool treated = rng.bernoulli(kang_schafer_propensity(x));
    const double mu = kang_schafer_mean(x);
    const double y0 = mu + rng.normal();
    const double y1 = mu + causal_effect_mean(x) + rng.normal();
    s.y0.push_back(y0);
    s.y1.push_back(y1);
    s.units.push_back({std::move(x), treated, treated ? y1 : y0});
  }
  return s;
}

}  // namespace driftsets
