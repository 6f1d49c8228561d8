#pragma once

// Prediction intervals for individual treatment effects, obtained by
// treating each arm's missing potential outcome as a covariate-shift
// prediction problem.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "driftsets/drp.hpp"

namespace driftsets {

struct CausalUnit {
  std::vector<double> x;
  bool treated = false;
  double y_obs = 0.0;
};

using IteInterval = Interval;

/// Units of arm `source_arm` become the labeled sample and the other arm the
/// target, so the fitted sets cover Y(source_arm) among the other arm.
Dataset counterfactual_dataset(std::span<const CausalUnit> units, bool source_arm);

/// Three-split DRP on the relabeled data. Both arms must be present.
FittedDrp fit_counterfactual(std::span<const CausalUnit> units, bool source_arm,
                             const DrpConfig& cfg, Rng& rng);

/// Treated: y_obs - C0(x). Control: C1(x) - y_obs.
IteInterval ite_interval_insample(const FittedDrp& c0, const FittedDrp& c1,
                                  const CausalUnit& unit);

/// [L1 - U0, U1 - L0]; both sets are expected at level 1 - alpha/2.
IteInterval ite_interval_future(const FittedDrp& c0, const FittedDrp& c1, Covariates x);
IteInterval interval_difference(const Interval& c1, const Interval& c0);

/// CSV with covariate columns, a 0/1 treatment column and the observed outcome.
std::vector<CausalUnit> load_causal_csv(const std::filesystem::path& path,
                                        const std::vector<std::string>& x_columns,
                                        const std::string& a_column = "a",
                                        const std::string& y_column = "y", char delimiter = ',');

}  // namespace driftsets
