#pragma once

// Command-line front end. Every artifact written embeds the RunConfig that
// produced it; `replay` re-runs from such an embedded config.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace driftsets {

struct RunConfig {
  std::string subcommand;
  double alpha = 0.1;
  std::uint64_t seed = 1;
  std::size_t runs = 500;
  std::vector<std::string> methods;
  std::string dgp = "kang-schafer";
  std::size_t n = 2000;
  std::string data;
  std::string out;
  double truncation = 10.0;
  std::size_t test_size = 1000;
  double ridge_lambda = 1.0;

  // predict
  std::string query;
  std::vector<std::string> x_columns;
  std::string y_column = "y";
  std::string t_column;
  std::string variant = "split3";
  std::string score = "residual";
  std::optional<double> center;
  bool trivial_nuisances = false;

  // conditional
  std::size_t points = 200;
  std::size_t draws = 100;
  std::size_t fits = 100;

  // sensitivity
  std::vector<double> gamma_grid;
  double mnar_a0 = 0.0;
  double mnar_a1 = 0.0;
  double mnar_b = 0.0;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

int cmd_simulate(const RunConfig& cfg, std::size_t threads);
int cmd_conditional(const RunConfig& cfg, std::size_t threads);
int cmd_real(const RunConfig& cfg, std::size_t threads);
int cmd_predict(const RunConfig& cfg, std::ostream& out);
int cmd_sensitivity(const RunConfig& cfg);

/// Parses argv and dispatches. Diagnostics go to `err`, predictions to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace driftsets
