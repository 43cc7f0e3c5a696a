#pragma once

#include <Eigen/Dense>
#include <set>
#include <string>
#include <vector>

#include "panelvar/model.hpp"
#include "panelvar/sampler.hpp"

namespace panelvar {

struct LooResult {
  double elpd = 0;
  double elpd_se = 0;
  std::vector<double> pointwise;  // per-observation elpd, sums to elpd
  std::vector<double> pareto_k;   // per-observation tail-shape diagnostics
  int n_smoothed = 0;             // observations with a fitted tail

  int n_high_k(double threshold = 0.7) const;
  std::string to_json() const;
  static LooResult from_json(const std::string& text);
  void save(const std::string& path) const;
  static LooResult load(const std::string& path);
};

// diff = elpd(candidate) - elpd(reference); se from the paired pointwise
// differences; interval bounds at diff +/- 2 se.
struct ElpdDiff {
  double diff = 0;
  double se_diff = 0;
  double cri_low = 0;
  double cri_high = 0;
};

// Log likelihood of every observation under every posterior draw
// (draws x observations). Observations are ordered country-major, weeks
// t = lag..T-1 within each country.
Eigen::MatrixXd pointwise_loglik(const PosteriorDraws& draws,
                                 const PanelVarPosterior& posterior);

// PSIS-LOO: importance ratios per observation are smoothed by a
// generalized-Pareto fit to the upper 20% tail; degenerate (zero-variance)
// weights fall back to the unsmoothed estimate with a warning.
LooResult psis_loo(const Eigen::MatrixXd& loglik);

ElpdDiff elpd_diff(const LooResult& reference, const LooResult& candidate);

// Fit of a generalized Pareto shape/scale to exceedances (profile-likelihood
// grid with a weakly informative shape prior). Exposed for testing.
struct GpdFit {
  double k = 0;
  double sigma = 0;
};
GpdFit gpd_fit_exceedances(std::vector<double> exceedances);

// Copy of the model spec with the named responses removed from every
// equation except their own; unknown names are an error.
ModelSpec exclusion_experiment(const ModelSpec& spec,
                               const std::set<std::string>& exclude);

struct ForecastRow {
  std::string country;
  std::int64_t week;
  Eigen::VectorXd actual;    // 4
  Eigen::VectorXd forecast;  // posterior predictive mean
  Eigen::VectorXd naive;     // previous observed value
};

struct ForecastResult {
  std::vector<ForecastRow> rows;
  Eigen::VectorXd rmse_model;      // per response
  Eigen::VectorXd rmse_naive;
  Eigen::VectorXd rmse_reduction;  // 1 - rmse_model / rmse_naive

  void save_csv(const std::string& path) const;
  void save_summary_csv(const std::string& path) const;
};

// One-step-ahead predictive means vs the naive carry-forward forecast,
// RMSE pooled over all (country, week) rows.
ForecastResult one_step_forecast(const PosteriorDraws& draws,
                                 const PanelVarPosterior& posterior);

}  // namespace panelvar
