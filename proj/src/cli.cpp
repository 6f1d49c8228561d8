#include "driftsets/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "driftsets/bench.hpp"
#include "driftsets/errors.hpp"

namespace driftsets {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values become the strings "inf" / "-inf" / "nan".
ojson number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void check_methods(const std::vector<std::string>& methods) {
  if (methods.empty()) throw UsageError("no methods given");
  for (const auto& m : methods) {
    if (!is_method(m)) {
      std::string valid;
      for (const auto& v : method_names()) valid += (valid.empty() ? "" : ", ") + v;
      throw UsageError(fmt::format("unknown method '{}'; valid methods: {}", m, valid));
    }
  }
}

fs::path prepare_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", out, ec.message()));
  return fs::path(out);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << content;
  if (!f) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::string config_line(const RunConfig& cfg) { return "# config: " + to_json(cfg).dump() + "\n"; }

ojson result_json(const McResult& r) {
  ojson j;
  j["method"] = r.method;
  j["runs"] = r.runs;
  j["coverage"] = number(r.coverage);
  j["coverage_se"] = number(r.coverage_se);
  j["width"] = number(r.width);
  j["width_se"] = number(r.width_se);
  j["infinite_fraction"] = number(r.infinite_fraction);
  j["dominance_violations"] = r.dominance_violations;
  return j;
}

void write_mc(const RunConfig& cfg, const std::vector<McResult>& results) {
  const auto dir = prepare_dir(cfg.out);
  std::string csv = config_line(cfg) + "method,run,coverage,width,infinite_fraction,seed\n";
  ojson summary;
  summary["config"] = to_json(cfg);
  summary["results"] = ojson::array();
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      csv += fmt::format("{},{},{},{},{},{}\n", rec.method, rec.run, csv_number(rec.coverage),
                         csv_number(rec.width), csv_number(rec.infinite_fraction), rec.seed);
    }
    summary["results"].push_back(result_json(r));
  }
  write_file(dir / "records.csv", csv);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

DrpConfig drp_config(const RunConfig& cfg) {
  DrpConfig d;
  d.alpha = cfg.alpha;
  if (cfg.variant == "split3") {
    d.variant = Variant::kSplit3;
  } else if (cfg.variant == "split2") {
    d.variant = Variant::kSplit2;
  } else if (cfg.variant == "full") {
    d.variant = Variant::kFull;
  } else {
    throw UsageError(fmt::format("unknown variant '{}'; valid: split3, split2, full", cfg.variant));
  }
  if (cfg.score == "residual") {
    d.score.kind = ScoreKind::kAbsoluteResidual;
    d.score.ridge_lambda = cfg.ridge_lambda;
    if (cfg.center) {
      const double c = *cfg.center;
      d.score.fixed_center = [c](Covariates) { return c; };
    }
  } else if (cfg.score == "cqr") {
    d.score.kind = ScoreKind::kCqr;
  } else {
    throw UsageError(fmt::format("unknown score '{}'; valid: residual, cqr", cfg.score));
  }
  if (cfg.trivial_nuisances) {
    d.nuisance.ratio = [](Covariates) { return 1.0; };
    d.nuisance.cdf = [](const ScoreModel&) {
      return std::make_shared<const FunctionCdf>([](double, Covariates) { return 0.0; });
    };
  }
  return d;
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& c) {
  ojson j;
  j["subcommand"] = c.subcommand;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  j["runs"] = c.runs;
  j["methods"] = c.methods;
  j["dgp"] = c.dgp;
  j["n"] = c.n;
  j["data"] = c.data;
  j["out"] = c.out;
  j["truncation"] = c.truncation;
  j["test_size"] = c.test_size;
  j["ridge_lambda"] = c.ridge_lambda;
  j["query"] = c.query;
  j["x_columns"] = c.x_columns;
  j["y_column"] = c.y_column;
  j["t_column"] = c.t_column;
  j["variant"] = c.variant;
  j["score"] = c.score;
  j["center"] = c.center ? ojson(*c.center) : ojson(nullptr);
  j["trivial_nuisances"] = c.trivial_nuisances;
  j["points"] = c.points;
  j["draws"] = c.draws;
  j["fits"] = c.fits;
  j["gamma_grid"] = c.gamma_grid;
  j["mnar_a0"] = c.mnar_a0;
  j["mnar_a1"] = c.mnar_a1;
  j["mnar_b"] = c.mnar_b;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.subcommand = j.at("subcommand").get<std::string>();
  c.alpha = j.at("alpha").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.runs = j.at("runs").get<std::size_t>();
  c.methods = j.at("methods").get<std::vector<std::string>>();
  c.dgp = j.at("dgp").get<std::string>();
  c.n = j.at("n").get<std::size_t>();
  c.data = j.at("data").get<std::string>();
  c.out = j.at("out").get<std::string>();
  c.truncation = j.at("truncation").get<double>();
  c.test_size = j.at("test_size").get<std::size_t>();
  c.ridge_lambda = j.at("ridge_lambda").get<double>();
  c.query = j.at("query").get<std::string>();
  c.x_columns = j.at("x_columns").get<std::vector<std::string>>();
  c.y_column = j.at("y_column").get<std::string>();
  c.t_column = j.at("t_column").get<std::string>();
  c.variant = j.at("variant").get<std::string>();
  c.score = j.at("score").get<std::string>();
  if (!j.at("center").is_null()) c.center = j.at("center").get<double>();
  c.trivial_nuisances = j.at("trivial_nuisances").get<bool>();
  c.points = j.at("points").get<std::size_t>();
  c.draws = j.at("draws").get<std::size_t>();
  c.fits = j.at("fits").get<std::size_t>();
  c.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
  c.mnar_a0 = j.at("mnar_a0").get<double>();
  c.mnar_a1 = j.at("mnar_a1").get<double>();
  c.mnar_b = j.at("mnar_b").get<double>();
  return c;
}

int cmd_simulate(const RunConfig& cfg, std::size_t threads) {
  check_methods(cfg.methods);
  McConfig mc;
  mc.dgp = {cfg.dgp, cfg.n};
  mc.methods = cfg.methods;
  mc.runs = cfg.runs;
  mc.alpha = cfg.alpha;
  mc.seed = cfg.seed;
  mc.test_size = cfg.test_size;
  mc.w_trunc = cfg.truncation;
  mc.ridge_lambda = cfg.ridge_lambda;
  mc.threads = threads;
  prepare_dir(cfg.out);
  write_mc(cfg, run_mc(mc));
  return kExitOk;
}

int cmd_real(const RunConfig& cfg, std::size_t threads) {
  check_methods(cfg.methods);
  if (cfg.data.empty()) throw UsageError("--data is required");
  RealConfig rc;
  rc.data = cfg.data;
  rc.methods = cfg.methods;
  rc.runs = cfg.runs;
  rc.alpha = cfg.alpha;
  rc.seed = cfg.seed;
  rc.w_trunc = cfg.truncation;
  rc.ridge_lambda = cfg.ridge_lambda;
  rc.threads = threads;
  prepare_dir(cfg.out);
  write_mc(cfg, run_real(rc));
  return kExitOk;
}

int cmd_conditional(const RunConfig& cfg, std::size_t threads) {
  CondConfig cc;
  cc.alpha = cfg.alpha;
  cc.seed = cfg.seed;
  cc.n = cfg.n;
  cc.points = cfg.points;
  cc.draws = cfg.draws;
  cc.fits = cfg.fits;
  cc.w_trunc = cfg.truncation;
  cc.threads = threads;
  const auto dir = prepare_dir(cfg.out);
  const auto records = run_conditional(cc);
  std::string csv = config_line(cfg) + "method,x1,x2,x3,x4,norm,coverage,width\n";
  ojson summary;
  summary["config"] = to_json(cfg);
  std::map<std::string, std::pair<double, std::size_t>> inner;
  for (const auto& r : records) {
    csv += r.method;
    for (double v : r.x) csv += "," + csv_number(v);
    csv += fmt::format(",{},{},{}\n", csv_number(r.norm), csv_number(r.coverage),
                       csv_number(r.width));
    if (r.norm < 2.0) {
      inner[r.method].first += r.coverage;
      inner[r.method].second += 1;
    }
  }
  summary["coverage_norm_below_2"] = ojson::object();
  for (const auto& [m, acc] : inner) {
    summary["coverage_norm_below_2"][m] = number(acc.first / static_cast<double>(acc.second));
  }
  write_file(dir / "conditional.csv", csv);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data.empty() || cfg.query.empty()) throw UsageError("--data and --query are required");
  if (cfg.x_columns.empty()) throw UsageError("--x-cols is required");
  CsvSchema schema;
  schema.x_columns = cfg.x_columns;
  schema.y_column = cfg.y_column;
  if (!cfg.t_column.empty()) schema.t_column = cfg.t_column;
  const auto ds = load_csv(cfg.data, schema);

  CsvSchema qschema;
  qschema.x_columns = cfg.x_columns;
  const auto query = load_csv(cfg.query, qschema);

  Rng rng(Seed{cfg.seed});
  const auto fitted = fit_drp(ds, drp_config(cfg), rng);
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto x = query.x(i);
    const auto s = fitted.predict(x);
    ojson line;
    line["x"] = std::vector<double>(x.begin(), x.end());
    line["lower"] = number(s.lower);
    line["upper"] = number(s.upper);
    line["width"] = number(s.width());
    out << line.dump() << "\n";
  }
  return kExitOk;
}

int cmd_sensitivity(const RunConfig& cfg) {
  if (cfg.gamma_grid.empty()) throw UsageError("--gamma-grid needs at least one value");
  validate_alpha(cfg.alpha);
  const DiscreteMnar model{cfg.mnar_a0, cfg.mnar_a1, cfg.mnar_b};
  Rng rng(Seed{cfg.seed});
  const auto masked = model.sample(cfg.n, rng);
  const auto& ds = masked.observed;
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto score = ScoreModel::residual([](Covariates) { return 0.0; });
  const auto units = scored_units(ds, score, all);
  const double truth = model.target_quantile(cfg.alpha);

  const auto dir = prepare_dir(cfg.out);
  std::string csv = config_line(cfg) + "method,s,theta,coverage,true_quantile\n";
  ojson summary;
  summary["config"] = to_json(cfg);
  summary["true_s"] = model.true_s();
  summary["true_quantile"] = truth;
  summary["rows"] = ojson::array();
  auto emit = [&](const std::string& method, double s, double theta) {
    const double cov = model.target_cdf(theta);
    csv += fmt::format("{},{},{},{},{}\n", method, csv_number(s), csv_number(theta),
                       csv_number(cov), csv_number(truth));
    ojson row;
    row["method"] = method;
    row["s"] = s;
    row["theta"] = number(theta);
    row["coverage"] = number(cov);
    summary["rows"].push_back(row);
  };

  // The standard estimator under explainable shift, with the ratio written
  // as exp(-eta) so that the s = 0 row reproduces it exactly.
  {
    const auto spec = model.sensitivity(0.0);
    const auto cdf = model.implied_cdf(0.0);
    RatioFunction ratio = [eta = spec.eta](Covariates x) { return std::exp(-eta(x)); };
    emit("drp", 0.0, solve_quantile(units, ratio, *cdf, cfg.alpha).theta);
  }
  for (double s : cfg.gamma_grid) {
    const auto spec = model.sensitivity(s);
    const auto cdf = model.implied_cdf(s);
    emit("sensitivity", s, solve_quantile_sens(units, spec, *cdf, cfg.alpha).theta);
  }
  write_file(dir / "sensitivity.csv", csv);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

namespace {

int dispatch(const RunConfig& cfg, std::size_t threads, std::ostream& out) {
  if (cfg.subcommand == "simulate") return cmd_simulate(cfg, threads);
  if (cfg.subcommand == "real") return cmd_real(cfg, threads);
  if (cfg.subcommand == "conditional") return cmd_conditional(cfg, threads);
  if (cfg.subcommand == "predict") return cmd_predict(cfg, out);
  if (cfg.subcommand == "sensitivity") return cmd_sensitivity(cfg);
  throw UsageError(fmt::format("unknown subcommand '{}'", cfg.subcommand));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust prediction sets under covariate shift"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::size_t threads = 0;
  std::string methods, x_cols, grid, replay_from, replay_out;
  app.add_option("--threads", threads, "Worker threads (0: DRIFTSETS_THREADS or all cores)");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--alpha", cfg.alpha, "Miscoverage level")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", cfg.out, "Output directory");
  };

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on a simulated design");
  common(sim);
  sim->add_option("--dgp", cfg.dgp, "Design")->capture_default_str();
  sim->add_option("--n", cfg.n, "Sample size per run")->capture_default_str();
  sim->add_option("--runs", cfg.runs, "Replications")->capture_default_str();
  sim->add_option("--methods", methods, "Comma separated methods")
      ->default_str("full,split3,split2,wcp");
  sim->add_option("--trunc", cfg.truncation, "Width truncation for reporting")
      ->capture_default_str();
  sim->add_option("--test-size", cfg.test_size, "Target test draws per run")
      ->capture_default_str();
  sim->add_option("--lambda", cfg.ridge_lambda, "Ridge penalty")->capture_default_str();

  auto* real = app.add_subcommand("real", "Airfoil study with simulated missingness");
  common(real);
  real->add_option("--data", cfg.data, "Airfoil file")->required();
  real->add_option("--runs", cfg.runs, "Replications")->capture_default_str();
  real->add_option("--methods", methods, "Comma separated methods")->default_str("split3,wcp");
  real->add_option("--trunc", cfg.truncation, "Width truncation for reporting");
  real->add_option("--lambda", cfg.ridge_lambda, "Ridge penalty")->capture_default_str();

  auto* cond = app.add_subcommand("conditional", "Per-point coverage study");
  common(cond);
  cond->add_option("--n", cfg.n, "Training size per fit")->capture_default_str();
  cond->add_option("--points", cfg.points, "Test points")->capture_default_str();
  cond->add_option("--draws", cfg.draws, "Outcome draws per point")->capture_default_str();
  cond->add_option("--fits", cfg.fits, "Independent training sets")->capture_default_str();
  cond->add_option("--trunc", cfg.truncation, "Width truncation")->capture_default_str();

  auto* pred = app.add_subcommand("predict", "Fit on a CSV and predict sets for query rows");
  pred->add_option("--alpha", cfg.alpha, "Miscoverage level")->capture_default_str();
  pred->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  pred->add_option("--data", cfg.data, "Training CSV")->required();
  pred->add_option("--query", cfg.query, "Query CSV with the covariate columns")->required();
  pred->add_option("--x-cols", x_cols, "Comma separated covariate columns")->required();
  pred->add_option("--y-col", cfg.y_column, "Outcome column")->capture_default_str();
  pred->add_option("--t-col", cfg.t_column, "Target flag column (inferred when absent)");
  pred->add_option("--variant", cfg.variant, "split3, split2 or full")->capture_default_str();
  pred->add_option("--score", cfg.score, "residual or cqr")->capture_default_str();
  pred->add_option("--lambda", cfg.ridge_lambda, "Ridge penalty")->capture_default_str();
  pred->add_option("--center", cfg.center, "Fixed center for the residual score");
  pred->add_flag("--trivial-nuisances", cfg.trivial_nuisances, "Use pi = 1 and m = 0");

  auto* sens = app.add_subcommand("sensitivity", "Sensitivity grid on a discrete MNAR design");
  common(sens);
  sens->add_option("--n", cfg.n, "Sample size")->capture_default_str();
  sens->add_option("--gamma-grid", grid, "Comma separated scales s of gamma(x,y) = s*y")
      ->required();
  sens->add_option("--a0", cfg.mnar_a0, "Missingness intercept")->capture_default_str();
  sens->add_option("--a1", cfg.mnar_a1, "Missingness slope on x")->capture_default_str();
  sens->add_option("--b", cfg.mnar_b, "Missingness slope on y")->capture_default_str();

  auto* replay = app.add_subcommand("replay", "Re-run from the config embedded in a summary");
  replay->add_option("--from", replay_from, "summary.json written by an earlier run")->required();
  replay->add_option("--out", replay_out, "Override the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*replay) {
      std::ifstream in(replay_from);
      if (!in) throw IoError(fmt::format("cannot read '{}'", replay_from));
      const auto j = nlohmann::json::parse(in);
      cfg = run_config_from_json(j.contains("config") ? j.at("config") : j);
      if (!replay_out.empty()) cfg.out = replay_out;
      return dispatch(cfg, threads, out);
    }
    cfg.subcommand = app.get_subcommands().front()->get_name();
    if (cfg.subcommand == "simulate" || cfg.subcommand == "real") {
      if (methods.empty()) methods = cfg.subcommand == "simulate" ? "full,split3,split2,wcp" : "split3,wcp";
      cfg.methods = split_list(methods);
      if (cfg.subcommand == "real" && !real->get_option("--trunc")->count()) cfg.truncation = 50.0;
    }
    if (!x_cols.empty()) cfg.x_columns = split_list(x_cols);
    for (const auto& g : split_list(grid)) {
      try {
        cfg.gamma_grid.push_back(std::stod(g));
      } catch (const std::exception&) {
        throw UsageError(fmt::format("bad --gamma-grid value '{}'", g));
      }
    }
    return dispatch(cfg, threads, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace driftsets
