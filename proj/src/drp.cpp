#include "driftsets/drp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "driftsets/errors.hpp"

namespace driftsets {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kSplit2: return "split2";
    case Variant::kSplit3: return "split3";
    case Variant::kFull: return "full";
  }
  return "unknown";
}

std::vector<ScoredUnit> scored_units(const Dataset& ds, const ScoreModel& score,
                                     std::span<const std::size_t> indices) {
  std::vector<ScoredUnit> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    ScoredUnit u{ds.x(i), ds.is_target(i), std::nullopt, std::nullopt};
    if (ds.is_labeled(i)) {
      u.y = ds.y(i);
      u.score = score.score(u.x, *u.y);
    }
    out.push_back(u);
  }
  return out;
}

namespace {

std::size_t count_labeled(const Dataset& ds, std::span<const std::size_t> idx) {
  return static_cast<std::size_t>(
      std::count_if(idx.begin(), idx.end(), [&](auto i) { return ds.is_labeled(i); }));
}

void require_labeled(const Dataset& ds, std::span<const std::size_t> idx, const char* what) {
  if (count_labeled(ds, idx) == 0) {
    throw ConfigError(fmt::format("{} part has no labeled units", what));
  }
}

bool disjoint(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<std::size_t> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  return common.empty();
}

std::vector<double> fractions_or(const DrpConfig& cfg, std::size_t parts) {
  if (!cfg.fractions.empty()) {
    if (cfg.fractions.size() != parts) {
      throw ConfigError(fmt::format("{} needs {} split fractions", variant_name(cfg.variant), parts));
    }
    return cfg.fractions;
  }
  return std::vector<double>(parts, 1.0 / static_cast<double>(parts));
}

}  // namespace

FittedDrp fit_on_parts(const Dataset& ds, const DrpConfig& cfg,
                       std::span<const std::size_t> score_part,
                       std::span<const std::size_t> nuisance_part,
                       std::span<const std::size_t> eval_part) {
  validate_alpha(cfg.alpha);
  if (!cfg.score.fixed_center) require_labeled(ds, score_part, "score training");
  require_labeled(ds, eval_part, "estimating-equation");

  FittedDrp out{fit_score(cfg.score, ds, score_part, cfg.alpha), {}, {}, {}, {}, cfg.alpha,
                {score_part.begin(), score_part.end()},
                {nuisance_part.begin(), nuisance_part.end()},
                {eval_part.begin(), eval_part.end()}};

  if (cfg.nuisance.ratio) {
    out.ratio = cfg.nuisance.ratio;
  } else {
    out.propensity = std::make_shared<const PropensityModel>(
        fit_propensity(ds, nuisance_part, cfg.nuisance.clip));
    out.ratio = [p = out.propensity](Covariates x) { return p->ratio(x); };
  }

  if (cfg.nuisance.cdf) {
    out.cdf = cfg.nuisance.cdf(out.score);
  } else {
    std::vector<std::size_t> labeled;
    for (auto i : nuisance_part) {
      if (ds.is_labeled(i)) labeled.push_back(i);
    }
    if (labeled.size() < cfg.nuisance.grid_size) {
      throw ConfigError(fmt::format("nuisance part has {} labeled units, the conditional CDF grid "
                                    "needs {}",
                                    labeled.size(), cfg.nuisance.grid_size));
    }
    std::vector<double> scores;
    scores.reserve(labeled.size());
    for (auto i : labeled) scores.push_back(out.score.score(ds.x(i), ds.y(i)));
    out.cdf = std::make_shared<const CondCdfModel>(
        fit_cond_cdf(ds.rows(labeled), scores, cfg.nuisance.grid_size));
  }

  const auto units = scored_units(ds, out.score, eval_part);
  out.solution = solve_quantile(units, out.ratio, *out.cdf, cfg.alpha);
  return out;
}

FittedDrp fit_split3(const Dataset& ds, const DrpConfig& cfg, Rng& rng) {
  const auto fr = fractions_or(cfg, 3);
  const auto plan = split(ds, fr, rng,
                          {PartRole::kScoreTrain, PartRole::kNuisanceTrain, PartRole::kCalibrate});
  auto out = fit_on_parts(ds, cfg, plan.parts[0], plan.parts[1], plan.parts[2]);
  if (!disjoint(out.score_indices, out.eval_indices) ||
      !disjoint(out.nuisance_indices, out.eval_indices)) {
    throw ContractViolation("split hygiene violated");
  }
  return out;
}

FittedDrp fit_split2(const Dataset& ds, const DrpConfig& cfg, Rng& rng) {
  const auto fr = fractions_or(cfg, 2);
  const auto plan = split(ds, fr, rng, {PartRole::kScoreTrain, PartRole::kCalibrate});
  auto out = fit_on_parts(ds, cfg, plan.parts[0], plan.parts[0], plan.parts[1]);
  if (!disjoint(out.score_indices, out.eval_indices)) {
    throw ContractViolation("split hygiene violated");
  }
  return out;
}

FittedDrp fit_full(const Dataset& ds, const DrpConfig& cfg) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_on_parts(ds, cfg, all, all, all);
}

FittedDrp fit_drp(const Dataset& ds, const DrpConfig& cfg, Rng& rng) {
  switch (cfg.variant) {
    case Variant::kSplit2: return fit_split2(ds, cfg, rng);
    case Variant::kSplit3: return fit_split3(ds, cfg, rng);
    case Variant::kFull: return fit_full(ds, cfg);
  }
  throw ContractViolation("unknown DRP variant");
}

std::size_t EfcpModel::select(Covariates x) const {
  if (candidates.empty()) throw ContractViolation("EFCP model has no candidates");
  std::size_t best = 0;
  double best_width = candidates[0].predict(x).width();
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double w = candidates[k].predict(x).width();
    if (w < best_width) {
      best = k;
      best_width = w;
    }
  }
  return best;
}

EfcpModel fit_efcp(const Dataset& ds, std::span<const ScoreSpec> candidates, const DrpConfig& cfg,
                   Rng& rng) {
  if (candidates.empty()) throw ContractViolation("EFCP needs at least one candidate score");
  const auto fr = fractions_or(cfg, 2);
  const auto plan = split(ds, fr, rng, {PartRole::kScoreTrain, PartRole::kCalibrate});
  DrpConfig shared = cfg;
  std::shared_ptr<const PropensityModel> propensity;
  if (!shared.nuisance.ratio) {
    propensity = std::make_shared<const PropensityModel>(
        fit_propensity(ds, plan.parts[0], cfg.nuisance.clip));
    shared.nuisance.ratio = [propensity](Covariates x) { return propensity->ratio(x); };
  }
  EfcpModel model;
  for (const auto& spec : candidates) {
    DrpConfig c = shared;
    c.score = spec;
    auto fitted = fit_on_parts(ds, c, plan.parts[0], plan.parts[0], plan.parts[1]);
    fitted.propensity = propensity;
    model.candidates.push_back(std::move(fitted));
  }
  return model;
}

double cross_validate_ridge(const Dataset& ds, std::span<const std::size_t> indices,
                            std::span<const double> penalties, std::size_t folds, Rng& rng) {
  if (penalties.empty()) throw ContractViolation("no penalties to cross-validate");
  if (folds < 2) throw ContractViolation("cross-validation needs at least 2 folds");
  std::vector<std::size_t> labeled;
  for (auto i : indices) {
    if (ds.is_labeled(i)) labeled.push_back(i);
  }
  if (labeled.size() < folds) throw ConfigError("fewer labeled units than folds");
  std::shuffle(labeled.begin(), labeled.end(), rng.engine());

  std::vector<double> sse(penalties.size(), 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t k = 0; k < labeled.size(); ++k) {
      (k % folds == f ? test : train).push_back(labeled[k]);
    }
    const Matrix x = ds.rows(train);
    std::vector<double> y;
    for (auto i : train) y.push_back(ds.y(i));
    for (std::size_t p = 0; p < penalties.size(); ++p) {
      const auto model = fit_ridge(x, y, penalties[p]);
      for (auto i : test) {
        const double r = ds.y(i) - model.predict(ds.x(i));
        sse[p] += r * r;
      }
    }
  }
  const auto best = std::min_element(sse.begin(), sse.end()) - sse.begin();
  return penalties[static_cast<std::size_t>(best)];
}

FittedDrp fit_cv_split2(const Dataset& ds, const DrpConfig& cfg,
                        std::span<const double> penalties, std::size_t folds, Rng& rng) {
  const auto fr = fractions_or(cfg, 2);
  const auto plan = split(ds, fr, rng, {PartRole::kScoreTrain, PartRole::kCalibrate});
  DrpConfig c = cfg;
  c.score.kind = ScoreKind::kAbsoluteResidual;
  c.score.ridge_lambda = cross_validate_ridge(ds, plan.parts[0], penalties, folds, rng);
  return fit_on_parts(ds, c, plan.parts[0], plan.parts[0], plan.parts[1]);
}

}  // namespace driftsets
