#include "driftsets/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "driftsets/errors.hpp"

namespace driftsets {

Dataset::Dataset(Matrix x, std::vector<std::uint8_t> target, std::vector<double> y)
    : x_(std::move(x)), target_(std::move(target)), y_(std::move(y)) {
  if (target_.empty()) throw ContractViolation("dataset must be nonempty");
  if (x_.cols() == 0) throw ContractViolation("covariate dimension must be positive");
  if (static_cast<std::size_t>(x_.rows()) != target_.size() || y_.size() != target_.size()) {
    throw ContractViolation("covariates, flags and outcomes differ in length");
  }
  for (std::size_t i = 0; i < target_.size(); ++i) {
    if (target_[i] != 0) {
      target_[i] = 1;
      y_[i] = std::numeric_limits<double>::quiet_NaN();
    } else if (!std::isfinite(y_[i])) {
      throw ContractViolation(fmt::format("labeled unit {} has no finite outcome", i));
    }
  }
}

Dataset Dataset::from_units(std::span<const Unit> units) {
  if (units.empty()) throw ContractViolation("dataset must be nonempty");
  const std::size_t d = units.front().x.size();
  Matrix x(units.size(), d);
  std::vector<std::uint8_t> t(units.size());
  std::vector<double> y(units.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].x.size() != d) {
      throw ContractViolation(fmt::format("unit {} has dimension {}, expected {}", i,
                                          units[i].x.size(), d));
    }
    for (std::size_t j = 0; j < d; ++j) x(i, j) = units[i].x[j];
    t[i] = units[i].target ? 1 : 0;
    if (!units[i].target) {
      if (!units[i].y) throw ContractViolation(fmt::format("labeled unit {} has no outcome", i));
      y[i] = *units[i].y;
    }
  }
  return Dataset(std::move(x), std::move(t), std::move(y));
}

double Dataset::y(std::size_t i) const {
  if (is_target(i)) throw ContractViolation("outcome of a target unit is not observed");
  return y_[i];
}

std::optional<double> Dataset::outcome(std::size_t i) const {
  if (is_target(i)) return std::nullopt;
  return y_[i];
}

Unit Dataset::unit(std::size_t i) const {
  auto row = x(i);
  return Unit{{row.begin(), row.end()}, is_target(i), outcome(i)};
}

std::size_t Dataset::labeled_count() const {
  return static_cast<std::size_t>(std::count(target_.begin(), target_.end(), 0));
}

std::vector<std::size_t> Dataset::labeled_indices() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    if (is_labeled(i)) out.push_back(i);
  }
  return out;
}

Matrix Dataset::rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), dim());
  for (std::size_t k = 0; k < indices.size(); ++k) out.row(k) = x_.row(indices[k]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<std::uint8_t> t(indices.size());
  std::vector<double> y(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    t[k] = target_.at(indices[k]);
    y[k] = y_[indices[k]];
  }
  return Dataset(rows(indices), std::move(t), std::move(y));
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  for (auto& f : out) {
    auto b = f.find_first_not_of(" \t\r");
    auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

bool is_missing(const std::string& field) { return field.empty() || field == "NA"; }

std::optional<double> parse_number(const std::string& field) {
  if (field.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    double v = std::stod(field, &used);
    if (used != field.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open {}", path.string()));
  return in;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  if (schema.x_columns.empty()) throw SchemaError("schema names no covariate columns");
  auto in = open_or_throw(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(fmt::format("{}: missing header row", path.string()));
  const auto header = split_fields(line, schema.delimiter);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < header.size(); ++j) column.emplace(header[j], j);
  auto find = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw SchemaError(fmt::format("missing required column '{}'", name));
    return it->second;
  };
  std::vector<std::size_t> xcol;
  for (const auto& name : schema.x_columns) xcol.push_back(find(name));
  std::optional<std::size_t> ycol, tcol;
  if (schema.y_column) ycol = find(*schema.y_column);
  if (schema.t_column) tcol = find(*schema.t_column);

  std::vector<double> xs;
  std::vector<std::uint8_t> ts;
  std::vector<double> ys;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw ParseError(fmt::format("row {}: expected {} fields, found {}", row, header.size(),
                                   fields.size()));
    }
    for (auto j : xcol) {
      auto v = parse_number(fields[j]);
      if (!v) throw ParseError(fmt::format("row {}: column '{}' is not numeric", row, header[j]));
      xs.push_back(*v);
    }
    std::optional<double> y;
    if (ycol && !is_missing(fields[*ycol])) {
      y = parse_number(fields[*ycol]);
      if (!y) throw ParseError(fmt::format("row {}: outcome is not numeric", row));
    }
    bool target = !y.has_value();
    if (tcol) {
      auto t = parse_number(fields[*tcol]);
      if (!t || (*t != 0.0 && *t != 1.0)) {
        throw ParseError(fmt::format("row {}: t must be 0 or 1", row));
      }
      target = *t == 1.0;
      if (!target && !y) throw ParseError(fmt::format("row {}: labeled row has no outcome", row));
    }
    ts.push_back(target ? 1 : 0);
    ys.push_back(target ? std::numeric_limits<double>::quiet_NaN() : *y);
  }
  if (ts.empty()) throw ParseError(fmt::format("{}: no data rows", path.string()));
  Matrix x = Eigen::Map<Matrix>(xs.data(), static_cast<Eigen::Index>(ts.size()),
                                static_cast<Eigen::Index>(xcol.size()));
  return Dataset(std::move(x), std::move(ts), std::move(ys));
}

Dataset load_airfoil(const std::filesystem::path& path) {
  constexpr std::size_t kColumns = 6;
  auto in = open_or_throw(path);
  std::vector<double> xs;
  std::vector<double> ys;
  std::string line;
  std::size_t row = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != kColumns) {
      throw SchemaError(fmt::format("row {}: airfoil file needs {} columns (5 features + response), "
                                    "found {}",
                                    row, kColumns, fields.size()));
    }
    std::vector<double> values;
    for (const auto& f : fields) {
      auto v = parse_number(f);
      if (!v) break;
      values.push_back(*v);
    }
    if (values.size() != kColumns) {
      if (first) {  // header row
        first = false;
        continue;
      }
      throw ParseError(fmt::format("row {}: non-numeric field", row));
    }
    first = false;
    if (values[0] <= 0.0 || values[4] <= 0.0) {
      throw ParseError(fmt::format("row {}: frequency and thickness must be positive", row));
    }
    values[0] = std::log(values[0]);
    values[4] = std::log(values[4]);
    xs.insert(xs.end(), values.begin(), values.begin() + 5);
    ys.push_back(values[5]);
  }
  if (ys.empty()) throw ParseError(fmt::format("{}: no data rows", path.string()));
  if (ys.size() != kAirfoilRows) {
    spdlog::warn("airfoil file {} has {} rows, expected {}", path.string(), ys.size(), kAirfoilRows);
  }
  const auto n = ys.size();
  Matrix x = Eigen::Map<Matrix>(xs.data(), static_cast<Eigen::Index>(n), 5);
  return Dataset(std::move(x), std::vector<std::uint8_t>(n, 0), std::move(ys));
}

MaskedData apply_missingness(const Dataset& complete, const std::function<double(Covariates)>& p,
                             Rng& rng) {
  if (complete.target_count() != 0) {
    throw ContractViolation("apply_missingness needs every outcome");
  }
  const std::size_t n = complete.size();
  std::vector<std::uint8_t> t(n);
  std::vector<double> y(n);
  std::vector<double> truth(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i) {
    const double prob = p(complete.x(i));
    if (!(prob >= 0.0 && prob <= 1.0)) {
      throw std::domain_error(fmt::format("missingness probability {} outside [0,1]", prob));
    }
    // always consume one draw so the stream does not depend on p
    const double u = rng.uniform();
    t[i] = u < prob ? 1 : 0;
    y[i] = complete.y(i);
    if (t[i]) truth[i] = y[i];
  }
  return {Dataset(complete.covariates(), std::move(t), std::move(y)),
          SealedOutcomes(std::move(truth))};
}

SplitPlan split(std::size_t n, std::span<const double> fractions, Rng& rng,
                std::vector<PartRole> roles) {
  if (fractions.empty()) throw ContractViolation("split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::domain_error("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::domain_error("split fractions must sum to 1");
  if (!roles.empty() && roles.size() != fractions.size()) {
    throw ContractViolation("one role per split part");
  }

  std::vector<std::size_t> sizes(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k + 1 < fractions.size(); ++k) {
    sizes[k] = static_cast<std::size_t>(std::floor(fractions[k] * static_cast<double>(n) + 1e-9));
    assigned += sizes[k];
  }
  if (assigned > n) throw ContractViolation("split sizes exceed dataset size");
  sizes.back() = n - assigned;
  for (auto s : sizes) {
    if (s == 0) throw ContractViolation(fmt::format("split of {} units leaves an empty part", n));
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());

  SplitPlan plan;
  plan.roles = std::move(roles);
  std::size_t offset = 0;
  for (auto s : sizes) {
    std::vector<std::size_t> part(perm.begin() + offset, perm.begin() + offset + s);
    std::sort(part.begin(), part.end());
    plan.parts.push_back(std::move(part));
    offset += s;
  }
  return plan;
}

}  // namespace driftsets
