#include "driftsets/ite.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "driftsets/errors.hpp"

namespace driftsets {

Dataset counterfactual_dataset(std::span<const CausalUnit> units, bool source_arm) {
  if (units.empty()) throw ConfigError("no units");
  const std::size_t d = units.front().x.size();
  std::size_t source = 0;
  Matrix x(static_cast<Eigen::Index>(units.size()), static_cast<Eigen::Index>(d));
  std::vector<std::uint8_t> t(units.size());
  std::vector<double> y(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    if (u.x.size() != d) throw ContractViolation("covariate dimension differs between units");
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = u.x[j];
    }
    const bool in_source = u.treated == source_arm;
    source += in_source ? 1 : 0;
    t[i] = in_source ? 0 : 1;
    y[i] = in_source ? u.y_obs : std::numeric_limits<double>::quiet_NaN();
  }
  if (source == 0 || source == units.size()) {
    throw ConfigError("both treatment arms must be present");
  }
  return Dataset(std::move(x), std::move(t), std::move(y));
}

FittedDrp fit_counterfactual(std::span<const CausalUnit> units, bool source_arm,
                             const DrpConfig& cfg, Rng& rng) {
  const auto ds = counterfactual_dataset(units, source_arm);
  return fit_split3(ds, cfg, rng);
}

IteInterval ite_interval_insample(const FittedDrp& c0, const FittedDrp& c1,
                                  const CausalUnit& unit) {
  if (unit.treated) {
    const auto s = c0.predict(unit.x);
    if (s.is_empty()) return Interval::empty();
    return {unit.y_obs - s.upper, unit.y_obs - s.lower};
  }
  const auto s = c1.predict(unit.x);
  if (s.is_empty()) return Interval::empty();
  return {s.lower - unit.y_obs, s.upper - unit.y_obs};
}

IteInterval interval_difference(const Interval& c1, const Interval& c0) {
  if (c1.is_empty() || c0.is_empty()) return Interval::empty();
  return {c1.lower - c0.upper, c1.upper - c0.lower};
}

IteInterval ite_interval_future(const FittedDrp& c0, const FittedDrp& c1, Covariates x) {
  return interval_difference(c1.predict(x), c0.predict(x));
}

std::vector<CausalUnit> load_causal_csv(const std::filesystem::path& path,
                                        const std::vector<std::string>& x_columns,
                                        const std::string& a_column, const std::string& y_column,
                                        char delimiter) {
  CsvSchema schema;
  schema.x_columns = x_columns;
  schema.x_columns.push_back(a_column);
  schema.y_column = y_column;
  schema.delimiter = delimiter;
  const auto ds = load_csv(path, schema);
  const std::size_t d = x_columns.size();
  std::vector<CausalUnit> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.is_labeled(i)) {
      throw ParseError(fmt::format("row {}: observed outcome missing", i + 1));
    }
    const auto row = ds.x(i);
    const double a = row[d];
    if (a != 0.0 && a != 1.0) throw ParseError(fmt::format("row {}: treatment must be 0 or 1", i + 1));
    out.push_back({std::vector<double>(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d)),
                   a == 1.0, ds.y(i)});
  }
  return out;
}

}  // namespace driftsets
