#pragma once

#include <string>
#include <vector>

#include "panelvar/diagnostics.hpp"
#include "panelvar/evaluation.hpp"
#include "panelvar/irf.hpp"

namespace panelvar {

// Static SVG reports. Layout mirrors the result structures: a 4x4
// response-by-shock grid for impulse responses, a forest of NPI
// coefficients grouped by response and column type, and per-variable
// forecast-vs-actual scatters.
void save_irf_grid_svg(const IrfResult& irf, const std::string& path);

void save_npi_forest_svg(const std::vector<ParamSummary>& summaries,
                         const std::vector<std::string>& npi_ids,
                         const std::string& path);

void save_forecast_scatter_svg(const ForecastResult& forecast,
                               const std::string& path);

void save_cluster_scatter_svg(const std::vector<std::string>& labels,
                              const std::vector<double>& x,
                              const std::vector<double>& y,
                              const std::vector<int>& cluster,
                              const std::string& x_name,
                              const std::string& y_name,
                              const std::string& path);

}  // namespace panelvar
