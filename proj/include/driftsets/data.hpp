#pragma once

// Observed data for the covariate-shift problem: each unit carries
// covariates x, a flag t (1 = unlabeled target draw, 0 = labeled source
// draw) and an outcome y that is only visible when t = 0.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "driftsets/rng.hpp"

namespace driftsets {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Covariates = std::span<const double>;

struct Unit {
  std::vector<double> x;
  bool target = false;
  std::optional<double> y;
};

/// Immutable collection of units with a common covariate dimension.
/// Target units never carry an outcome; the constructor drops any that
/// are supplied.
class Dataset {
 public:
  Dataset() = default;
  /// `y[i]` is ignored for target units and must be finite otherwise.
  Dataset(Matrix x, std::vector<std::uint8_t> target, std::vector<double> y);

  static Dataset from_units(std::span<const Unit> units);

  std::size_t size() const { return target_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }
  bool empty() const { return target_.empty(); }

  Covariates x(std::size_t i) const {
    return {x_.data() + i * dim(), dim()};
  }
  bool is_target(std::size_t i) const { return target_[i] != 0; }
  bool is_labeled(std::size_t i) const { return target_[i] == 0; }
  /// Outcome of a labeled unit; throws ContractViolation for target units.
  double y(std::size_t i) const;
  std::optional<double> outcome(std::size_t i) const;
  Unit unit(std::size_t i) const;

  const Matrix& covariates() const { return x_; }

  std::size_t labeled_count() const;
  std::size_t target_count() const { return size() - labeled_count(); }
  std::vector<std::size_t> labeled_indices() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  /// Rows of the covariate matrix for the given indices.
  Matrix rows(std::span<const std::size_t> indices) const;

 private:
  Matrix x_;
  std::vector<std::uint8_t> target_;
  std::vector<double> y_;
};

/// Ground-truth outcomes of target units, index-aligned with the dataset
/// they were masked from. Only coverage evaluation reads these; no fitting
/// routine accepts this type.
class SealedOutcomes {
 public:
  SealedOutcomes() = default;
  explicit SealedOutcomes(std::vector<double> y) : y_(std::move(y)) {}

  double reveal(std::size_t i) const { return y_.at(i); }
  std::size_t size() const { return y_.size(); }

 private:
  std::vector<double> y_;
};

struct MaskedData {
  Dataset observed;
  SealedOutcomes truth;
};

struct CsvSchema {
  std::vector<std::string> x_columns;
  std::optional<std::string> y_column;
  /// When absent, t is inferred: 1 where y is missing, 0 otherwise.
  std::optional<std::string> t_column;
  char delimiter = ',';
};

/// Reads a header-first delimited file. Missing outcomes are empty fields
/// or the literal NA.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// UCI airfoil self-noise file: five features and the response, tab
/// separated, header optional. Frequency (column 1) and displacement
/// thickness (column 5) are log transformed. All units come back labeled.
Dataset load_airfoil(const std::filesystem::path& path);

inline constexpr std::size_t kAirfoilRows = 1503;

/// Draws t ~ Bernoulli(p(x)) independently per unit and hides y where t = 1.
/// Every unit of `complete` must be labeled.
MaskedData apply_missingness(const Dataset& complete,
                             const std::function<double(Covariates)>& p, Rng& rng);

enum class PartRole { kScoreTrain, kNuisanceTrain, kCalibrate };

struct SplitPlan {
  std::vector<std::vector<std::size_t>> parts;
  std::vector<PartRole> roles;
};

/// Uniform random partition of {0..n-1}. Part k gets floor(fraction_k * n)
/// units and the last part also takes the remainder.
SplitPlan split(std::size_t n, std::span<const double> fractions, Rng& rng,
                std::vector<PartRole> roles = {});
inline SplitPlan split(const Dataset& ds, std::span<const double> fractions, Rng& rng,
                       std::vector<PartRole> roles = {}) {
  return split(ds.size(), fractions, rng, std::move(roles));
}

}  // namespace driftsets
