#pragma once

// Doubly robust prediction sets: split (two or three parts), full-data and
// the efficient (minimum-width) aggregation over several scores.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "driftsets/data.hpp"
#include "driftsets/ifcore.hpp"
#include "driftsets/nuisance.hpp"
#include "driftsets/rng.hpp"
#include "driftsets/scores.hpp"

namespace driftsets {

enum class Variant { kSplit2, kSplit3, kFull };

std::string_view variant_name(Variant v);

/// Builds m(theta, x) for a given fitted score. Used to plug in oracle or
/// deliberately misspecified conditional CDFs.
using CdfFactory = std::function<std::shared_ptr<const ConditionalCdf>(const ScoreModel&)>;

/// Unset members are estimated from data (clipped logistic propensity,
/// grid-of-thresholds conditional CDF).
struct NuisanceSpec {
  RatioFunction ratio;
  CdfFactory cdf;
  double clip = 0.99;
  std::size_t grid_size = 50;
};

struct DrpConfig {
  double alpha = 0.1;
  Variant variant = Variant::kSplit3;
  ScoreSpec score;
  NuisanceSpec nuisance;
  /// Empty selects (1/2, 1/2) or (1/3, 1/3, 1/3).
  std::vector<double> fractions;
};

struct FittedDrp {
  ScoreModel score;
  RatioFunction ratio;
  std::shared_ptr<const ConditionalCdf> cdf;
  std::shared_ptr<const PropensityModel> propensity;  // null for plug-in ratios
  QuantileSolution solution;
  double alpha = 0.1;

  std::vector<std::size_t> score_indices;
  std::vector<std::size_t> nuisance_indices;
  std::vector<std::size_t> eval_indices;

  Interval predict(Covariates x) const { return score.interval(x, solution.theta); }
};

inline Interval predict(const FittedDrp& fitted, Covariates x) { return fitted.predict(x); }

FittedDrp fit_split3(const Dataset& ds, const DrpConfig& cfg, Rng& rng);
FittedDrp fit_split2(const Dataset& ds, const DrpConfig& cfg, Rng& rng);
FittedDrp fit_full(const Dataset& ds, const DrpConfig& cfg);
/// Dispatches on cfg.variant.
FittedDrp fit_drp(const Dataset& ds, const DrpConfig& cfg, Rng& rng);

/// Fits score, nuisances and quantile on explicitly given index sets.
FittedDrp fit_on_parts(const Dataset& ds, const DrpConfig& cfg,
                       std::span<const std::size_t> score_part,
                       std::span<const std::size_t> nuisance_part,
                       std::span<const std::size_t> eval_part);

/// Scored evaluation set for the units in `indices`.
std::vector<ScoredUnit> scored_units(const Dataset& ds, const ScoreModel& score,
                                     std::span<const std::size_t> indices);

/// Per-query selection among candidate sets fitted on a shared split.
struct EfcpModel {
  std::vector<FittedDrp> candidates;

  /// Index of the narrowest candidate set at x; ties go to the lowest index.
  std::size_t select(Covariates x) const;
  Interval predict(Covariates x) const { return candidates[select(x)].predict(x); }
};

/// Candidates and nuisances are trained on the first half, each candidate's
/// quantile is solved on the second half. The propensity is fitted once and
/// shared; the conditional CDF is refitted per candidate score.
EfcpModel fit_efcp(const Dataset& ds, std::span<const ScoreSpec> candidates, const DrpConfig& cfg,
                   Rng& rng);

/// Mean squared error K-fold cross-validation of the ridge penalty on the
/// labeled units among `indices`. Returns the penalty with the lowest error
/// (first on ties).
double cross_validate_ridge(const Dataset& ds, std::span<const std::size_t> indices,
                            std::span<const double> penalties, std::size_t folds, Rng& rng);

/// Two-split DRP whose ridge penalty is chosen by cross-validation on the
/// first half.
FittedDrp fit_cv_split2(const Dataset& ds, const DrpConfig& cfg,
                        std::span<const double> penalties, std::size_t folds, Rng& rng);

}  // namespace driftsets
