#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "panelvar/dataset.hpp"
#include "panelvar/dates.hpp"
#include "panelvar/model.hpp"

namespace panelvar {

// Exogenous scenario for the generative model: NPI random walks, a
// variant succession schedule, and a vaccination ramp.
struct ScenarioConfig {
  int n_countries = 25;
  int n_weeks = 104;
  std::vector<std::string> npi_ids = default_npi_ids();
  std::int64_t start_day = days_from_civil(2020, 1, 6);
  double gdp_trend_growth = 0.0;   // weekly pre-period growth per country
  double alpha_at = 0.50;          // variant switch points, fraction of n_weeks
  double delta_at = 0.75;
  double omicron_at = 0.96;
  double vacc_start_frac = 0.50;
  double vacc_end_level = 1.5;     // doses per capita at the final week
  int burn_in = 50;

  ModelSpec model_spec() const {
    ModelSpec s;
    s.npi_ids = npi_ids;
    return s;
  }
};

// Compact generative description expanded into a full ParameterVector.
struct TruthConfig {
  Eigen::MatrixXd phi;            // 4x4 lag-1 coefficients
  Eigen::MatrixXd nu;             // 4x4 variant coefficients
  Eigen::VectorXd psi_vacc;       // 4
  Eigen::VectorXd resid_scales;   // 4
  Eigen::MatrixXd omega;          // 4x4 residual correlation
  double coef_scale = 0.02;       // sd of the generated NPI coefficients
  double mu_sd = 0.05;            // sd of the generated country intercepts
  double sigma_mu = 0.05;

  static TruthConfig defaults();  // estimates-scale values
  std::string to_json() const;
  static TruthConfig from_json(const std::string& text);
};

ParameterVector make_truth(const TruthConfig& config, const ModelSpec& spec,
                           int n_countries, std::uint64_t seed);

// Iterates the observation equation generatively: zero initial state,
// `burn_in` discarded steps, then n_weeks recorded ones. Exogenous paths
// before week 0 are held at their week-0 values. Unstable dynamics
// (companion spectral radius >= 1) are an error.
PanelDataset simulate_panel(const ParameterVector& truth,
                            const ScenarioConfig& scenario, std::uint64_t seed);

// Writes the raw-input CSV schemas (responses, npi, vaccination, variants,
// characteristics, borders) reproducing `panel` when re-ingested, plus
// panel.json and truth.json.
void write_synthetic_inputs(const PanelDataset& panel,
                            const ParameterVector& truth,
                            const ScenarioConfig& scenario,
                            std::uint64_t seed, const std::string& dir);

}  // namespace panelvar
