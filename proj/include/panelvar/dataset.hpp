#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "panelvar/common.hpp"

namespace panelvar {

// Fixed response ordering used everywhere (identification ordering):
// log R, log excess deaths, delta GDP, delta transit.
inline constexpr int kResponses = 4;
inline const std::vector<std::string>& response_names() {
  static const std::vector<std::string> names = {"log_r", "log_ed", "d_gdp",
                                                 "d_transit"};
  return names;
}
int response_index(const std::string& name);

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"WT", "Alpha", "Delta",
                                                 "Omicron"};
  return names;
}

// One (country, series) input stream; dates strictly increasing, no
// duplicate (country, date) keys.
struct RawSeries {
  std::string country;
  std::vector<std::int64_t> days;  // serial days
  std::vector<double> values;
};

// Contiguous weekly series starting at ISO week index `week0`.
struct WeeklySeries {
  std::int64_t week0 = 0;
  std::vector<double> v;

  std::int64_t week_end() const {
    return week0 + static_cast<std::int64_t>(v.size()) - 1;
  }
  bool contains(std::int64_t w) const {
    return w >= week0 && w <= week_end() && !v.empty();
  }
  double at(std::int64_t w) const { return v[static_cast<std::size_t>(w - week0)]; }
};

// OxCGRT ordinal indicator ranges (containment/economic/health subsets used
// by the model; USD-valued indicators are not coded here).
struct NpiInfo {
  std::string id;
  std::string name;
  int max_score;
};
const NpiInfo& npi_info(const std::string& id);
// The nine indicators entering the default model.
const std::vector<std::string>& default_npi_ids();

struct PanelCountry {
  std::string country;
  std::int64_t week0 = 0;      // week index of column 0
  Eigen::MatrixXd Y;           // 4 x T response matrix
  Eigen::MatrixXd x_level;     // K x T lagged NPI levels
  Eigen::MatrixXd x_change;    // K x T lagged NPI level changes
  Eigen::MatrixXd variant;     // 4 x T variant dummies (WT, Alpha, Delta, Omicron)
  Eigen::VectorXd vacc;        // T doses per capita

  int weeks() const { return static_cast<int>(Y.cols()); }
};

struct PanelDataset {
  std::vector<std::string> npi_ids;
  std::vector<PanelCountry> countries;

  int n_countries() const { return static_cast<int>(countries.size()); }
  int n_npis() const { return static_cast<int>(npi_ids.size()); }
  int total_weeks() const;
  const PanelCountry& country(const std::string& code) const;

  void validate() const;  // invariant checks; warnings for sanity bounds

  std::string to_json() const;
  static PanelDataset from_json(const std::string& text);
  void save(const std::string& path) const;
  static PanelDataset load(const std::string& path);
};

// Country-level feature table; missing entries are flagged, never
// zero-filled.
struct CountryCharacteristics {
  std::vector<std::string> countries;
  std::vector<std::string> features;
  Eigen::MatrixXd values;                   // country x feature
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> present;

  std::optional<double> value(int country, int feature) const {
    if (!present(country, feature)) return std::nullopt;
    return values(country, feature);
  }
};

struct DataPaths {
  std::string responses;
  std::string npi;
  std::string vaccination;
  std::string variants;
  std::string characteristics;  // optional
  std::string borders;          // optional

  static DataPaths in_dir(const std::string& dir);
};

struct DatasetOptions {
  std::int64_t start_day = 0;       // analysis window (inclusive)
  std::int64_t end_day = 0;
  std::int64_t trend_start_day = 0; // pre-period window for GDP trend growth
  std::int64_t trend_end_day = 0;
  int ed_lead_weeks = 3;

  DatasetOptions();  // defaults: 2020-01-06..2021-12-27, trend 2016-2019
};

// --- transforms -------------------------------------------------------

// One value per ISO week. Weekly-cadence inputs (at most one observation
// per week) pass through; daily inputs are averaged per week, with partial
// boundary weeks dropped and empty interior weeks an error.
WeeklySeries downsample_weekly(const std::vector<std::int64_t>& days,
                               const std::vector<double>& values);

// Mean weekly first difference over the pre-period history (>= 52 weekly
// observations required).
double compute_trend_growth(const WeeklySeries& gdp_history);

// (G_t - G_{t-1} - g) / 10 on weekly GDP levels.
WeeklySeries transform_gdp(const WeeklySeries& gdp_levels, double trend_growth);

// Daily percent-change mobility -> gap interpolation (<= 7 days) ->
// trailing 7-day moving average -> weekly mean -> first difference / 100.
WeeklySeries transform_transit(const std::vector<std::int64_t>& days,
                               const std::vector<double>& values);

// log(x + 1) with the series led by `lead_weeks` (weekly steps); trailing
// entries dropped.
WeeklySeries transform_excess_deaths(const WeeklySeries& ed_per_100k,
                                     int lead_weeks);

// Weekly NPI level paths -> (level, change) feature columns, both lagged
// one week relative to the response; change is the week-over-week first
// difference of the unlagged level.
struct NpiFeatures {
  WeeklySeries level;
  WeeklySeries change;
};
NpiFeatures build_npi_features(const WeeklySeries& weekly_level,
                               const std::string& npi_id,
                               const std::string& country);

// Weekly dominant-variant labels -> four 0/1 dummy columns. WT is always 1;
// Alpha is 0 only while WT dominates; Delta is 0 while WT or Alpha dominate;
// Omicron is 1 only while Omicron dominates.
Eigen::MatrixXd build_variant_dummies(const std::vector<std::string>& dominant);

// Border-length-weighted mean of neighbor values, per week.
// `neighbor_values[i]` holds neighbor i's values for each gap week.
std::vector<double> impute_border_weighted(
    const std::vector<std::vector<double>>& neighbor_values,
    const std::vector<double>& weights_km);

// --- ingestion --------------------------------------------------------

PanelDataset load_panel(const DataPaths& paths,
                        const std::vector<std::string>& npi_ids,
                        const DatasetOptions& options = DatasetOptions());

CountryCharacteristics load_characteristics(const std::string& path);

}  // namespace panelvar
