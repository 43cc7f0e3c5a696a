#include "panelvar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "panelvar/csv.hpp"
#include "panelvar/irf.hpp"
#include "panelvar/rng.hpp"

namespace panelvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

TruthConfig TruthConfig::defaults() {
  TruthConfig t;
  t.phi.resize(4, 4);
  t.phi << 0.757, -0.040, 0.003, 0.103,
           0.271,  0.856, -0.008, 0.014,
          -0.241, -0.054, 0.046, 0.067,
          -0.055, -0.025, 0.135, -0.113;
  t.nu.resize(4, 4);
  t.nu << 0.032, -0.027, 0.033, 0.090,
          0.090,  0.018, 0.024, -0.129,
         -0.143, -0.040, 0.093, 0.115,
         -0.013,  0.013, 0.015, -0.050;
  t.psi_vacc.resize(4);
  t.psi_vacc << -0.004, -0.047, -0.028, -0.020;
  t.resid_scales.resize(4);
  t.resid_scales << 0.08, 0.12, 0.10, 0.05;
  t.omega.resize(4, 4);
  t.omega << 1.00, 0.20, -0.10, 0.05,
             0.20, 1.00, -0.05, 0.02,
            -0.10, -0.05, 1.00, 0.30,
             0.05, 0.02, 0.30, 1.00;
  return t;
}

namespace {

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

MatrixXd matrix_from(const json& j) {
  MatrixXd m(static_cast<Eigen::Index>(j.size()),
             static_cast<Eigen::Index>(j.at(0).size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k)
      m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  return m;
}

VectorXd vector_from(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = j[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

std::string TruthConfig::to_json() const {
  json j;
  j["phi"] = matrix_json(phi);
  j["nu"] = matrix_json(nu);
  j["psi_vacc"] = std::vector<double>(psi_vacc.data(), psi_vacc.data() + psi_vacc.size());
  j["resid_scales"] =
      std::vector<double>(resid_scales.data(), resid_scales.data() + resid_scales.size());
  j["omega"] = matrix_json(omega);
  j["coef_scale"] = coef_scale;
  j["mu_sd"] = mu_sd;
  j["sigma_mu"] = sigma_mu;
  return j.dump(1);
}

TruthConfig TruthConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TruthConfig t = defaults();
  if (j.contains("phi")) t.phi = matrix_from(j["phi"]);
  if (j.contains("nu")) t.nu = matrix_from(j["nu"]);
  if (j.contains("psi_vacc")) t.psi_vacc = vector_from(j["psi_vacc"]);
  if (j.contains("resid_scales")) t.resid_scales = vector_from(j["resid_scales"]);
  if (j.contains("omega")) t.omega = matrix_from(j["omega"]);
  t.coef_scale = j.value("coef_scale", t.coef_scale);
  t.mu_sd = j.value("mu_sd", t.mu_sd);
  t.sigma_mu = j.value("sigma_mu", t.sigma_mu);
  return t;
}

ParameterVector make_truth(const TruthConfig& config, const ModelSpec& spec,
                           int n_countries, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, 0xBEEF);
  ParameterVector t = ParameterVector::zeros(spec, n_countries);
  t.phi[0] = config.phi;
  for (Eigen::Index i = 0; i < t.lambda.rows(); ++i)
    for (Eigen::Index k = 0; k < t.lambda.cols(); ++k)
      t.lambda(i, k) = config.coef_scale * rng.normal();
  for (Eigen::Index i = 0; i < t.delta.rows(); ++i)
    for (Eigen::Index k = 0; k < t.delta.cols(); ++k)
      t.delta(i, k) = config.coef_scale * rng.normal();
  t.nu = config.nu;
  t.psi_vacc = config.psi_vacc;
  for (int c = 0; c < n_countries; ++c)
    for (int i = 0; i < kResponses; ++i) t.mu(i, c) = config.mu_sd * rng.normal();
  t.sigma_mu = config.sigma_mu;
  t.resid_scales = config.resid_scales;
  // Unit-row Cholesky factor of the requested correlation matrix.
  MatrixXd l = cholesky_lower(config.omega);
  for (int i = 0; i < kResponses; ++i) l.row(i) /= l.row(i).norm();
  t.corr_chol = l;
  return t;
}

namespace {

std::string country_code(int c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "C%02d", c);
  return buf;
}

// Country-level exogenous paths, weekly cadence.
struct ExogenousPaths {
  MatrixXd npi_levels;   // K x (n_weeks + 2), weeks -2..n_weeks-1
  std::vector<std::string> variant_labels;  // weeks 0..n_weeks-1
  VectorXd vacc;         // weeks 0..n_weeks-1
};

ExogenousPaths draw_paths(const ScenarioConfig& sc, int country, Rng& rng) {
  const int K = static_cast<int>(sc.npi_ids.size());
  const int T = sc.n_weeks;
  ExogenousPaths p;
  p.npi_levels.resize(K, T + 2);
  for (int k = 0; k < K; ++k) {
    const int cap = npi_info(sc.npi_ids[static_cast<std::size_t>(k)]).max_score;
    double level = 0;
    for (int w = 0; w < T + 2; ++w) {
      double u = rng.uniform();
      if (u < 0.15)
        level = std::min<double>(cap, level + 1);
      else if (u > 0.85)
        level = std::max(0.0, level - 1);
      p.npi_levels(k, w) = level;
    }
  }

  auto jitter = [&](double frac) {
    int base = static_cast<int>(frac * T);
    return base + static_cast<int>(rng.integer(7)) - 3;
  };
  int w_alpha = jitter(sc.alpha_at), w_delta = jitter(sc.delta_at),
      w_omicron = jitter(sc.omicron_at);
  p.variant_labels.resize(static_cast<std::size_t>(T));
  for (int w = 0; w < T; ++w) {
    const char* label = "WT";
    if (w >= w_omicron)
      label = "Omicron";
    else if (w >= w_delta)
      label = "Delta";
    else if (w >= w_alpha)
      label = "Alpha";
    p.variant_labels[static_cast<std::size_t>(w)] = label;
  }

  int v0 = static_cast<int>(sc.vacc_start_frac * T) +
           static_cast<int>(rng.integer(5)) - 2;
  p.vacc.setZero(T);
  for (int w = 0; w < T; ++w)
    if (w >= v0 && T > v0)
      p.vacc(w) = sc.vacc_end_level * static_cast<double>(w - v0) /
                  static_cast<double>(T - v0);
  (void)country;
  return p;
}

}  // namespace

PanelDataset simulate_panel(const ParameterVector& truth,
                            const ScenarioConfig& scenario, std::uint64_t seed) {
  const int T = scenario.n_weeks;
  const int C = scenario.n_countries;
  if (T < 8 || C < 1)
    throw ConfigError("simulate_panel: need n_weeks >= 8 and n_countries >= 1");
  double radius = stability_check(truth.phi);
  if (!(radius < 1.0))
    throw ConfigError("simulate_panel: unstable dynamics (spectral radius " +
                      std::to_string(radius) + " >= 1)");
  ModelSpec spec = scenario.model_spec();
  const int K = static_cast<int>(scenario.npi_ids.size());

  PanelDataset panel;
  panel.npi_ids = scenario.npi_ids;
  MatrixXd sigma_chol = truth.sigma_chol();
  const std::int64_t week0 = week_index(scenario.start_day);

  for (int c = 0; c < C; ++c) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(c) + 1);
    ExogenousPaths paths = draw_paths(scenario, c, rng);

    PanelCountry pc;
    pc.country = country_code(c);
    pc.week0 = week0;
    pc.Y.resize(4, T);
    pc.x_level.resize(K, T);
    pc.x_change.resize(K, T);
    pc.variant = build_variant_dummies(paths.variant_labels);
    pc.vacc = paths.vacc;
    for (int t = 0; t < T; ++t) {
      pc.x_level.col(t) = paths.npi_levels.col(t + 1);   // NPI_{t-1}
      pc.x_change.col(t) =
          paths.npi_levels.col(t + 1) - paths.npi_levels.col(t);
    }

    VectorXd y = VectorXd::Zero(4);
    VectorXd z(4);
    for (int t = -scenario.burn_in; t < T; ++t) {
      int col = std::max(t, 0);
      VectorXd m = truth.mu.col(c) + truth.phi[0] * y;
      if (spec.include_levels) m += truth.lambda * pc.x_level.col(col);
      if (spec.include_changes) m += truth.delta * pc.x_change.col(col);
      m += truth.nu * pc.variant.col(col);
      m += truth.psi_vacc * pc.vacc(col);
      for (int i = 0; i < 4; ++i) z(i) = rng.normal();
      y = m + sigma_chol * z;
      if (t >= 0) pc.Y.col(t) = y;
    }
    panel.countries.push_back(std::move(pc));
  }
  panel.validate();
  return panel;
}

void write_synthetic_inputs(const PanelDataset& panel,
                            const ParameterVector& truth,
                            const ScenarioConfig& scenario, std::uint64_t seed,
                            const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int lead = 3;
  const double population = 1e7;

  CsvWriter resp(dir + "/responses.csv");
  resp.row({"country", "date", "series", "value"});
  CsvWriter npi(dir + "/npi.csv");
  npi.row({"country", "date", "npi_id", "score"});
  CsvWriter vacc(dir + "/vaccination.csv");
  vacc.row({"country", "date", "total_doses", "population"});
  CsvWriter variants(dir + "/variants.csv");
  variants.row({"country", "iso_week", "who_label"});

  const double g = scenario.gdp_trend_growth;
  for (const auto& pc : panel.countries) {
    const int T = pc.weeks();
    // log R: weekly rows, identity transform.
    for (int t = 0; t < T; ++t)
      resp.row({pc.country, format_date(week_monday_serial(pc.week0 + t)),
                "log_r", format_full(pc.Y(0, t))});

    // Excess deaths: invert log1p and shift by the lead; the first `lead`
    // rows are placeholders that the transform never reads.
    for (int w = 0; w < T + lead; ++w) {
      double value = w < lead ? std::expm1(pc.Y(1, 0)) : std::expm1(pc.Y(1, w - lead));
      resp.row({pc.country, format_date(week_monday_serial(pc.week0 + w)),
                "excess_deaths_per_100k", format_full(value)});
    }

    // GDP: pre-period history at constant weekly growth g (for the trend
    // estimate), then levels accumulating 10*dGDP + g.
    std::int64_t hist0 = week_index(days_from_civil(2016, 1, 4));
    double level = 100.0;
    for (std::int64_t w = hist0; w < pc.week0 - 1; ++w) {
      resp.row({pc.country, format_date(week_monday_serial(w)), "gdp",
                format_full(level)});
      level += g;
    }
    resp.row({pc.country, format_date(week_monday_serial(pc.week0 - 1)), "gdp",
              format_full(level)});
    for (int t = 0; t < T; ++t) {
      level += 10.0 * pc.Y(2, t) + g;
      resp.row({pc.country, format_date(week_monday_serial(pc.week0 + t)),
                "gdp", format_full(level)});
    }

    // Transit: piecewise-constant daily percent values chosen so the
    // trailing weekly-averaged moving average reproduces dTransit exactly:
    // weekly MA mean is (4 P_w + 3 P_{w-1}) / 7 for week-constant data.
    {
      double ma_prev = 0.0;
      std::vector<double> p_by_week;
      p_by_week.push_back(0.0);  // week -3
      p_by_week.push_back(0.0);  // week -2 -> MA mean 0
      for (int t = -1; t < T; ++t) {
        double target = t < 0 ? 0.0 : pc.Y(3, t);
        double ma = ma_prev + 100.0 * target;
        double p = (7.0 * ma - 3.0 * p_by_week.back()) / 4.0;
        p_by_week.push_back(p);
        ma_prev = ma;
      }
      for (int w = -3; w < T; ++w) {
        double p = p_by_week[static_cast<std::size_t>(w + 3)];
        std::int64_t monday = week_monday_serial(pc.week0 + w);
        for (int d = 0; d < 7; ++d)
          resp.row({pc.country, format_date(monday + d), "transit",
                    format_full(p)});
      }
    }

    // NPIs: daily scores, constant within each week. The raw level at week
    // w is the (lagged) level column at w+1; two pre-weeks feed the lag and
    // the change column of week 0.
    for (int w = -2; w <= T - 2; ++w) {
      std::int64_t monday = week_monday_serial(pc.week0 + w);
      for (std::size_t k = 0; k < panel.npi_ids.size(); ++k) {
        double score;
        if (w == -2)
          score = pc.x_level(static_cast<Eigen::Index>(k), 0) -
                  pc.x_change(static_cast<Eigen::Index>(k), 0);
        else if (w == -1)
          score = pc.x_level(static_cast<Eigen::Index>(k), 0);
        else
          score = pc.x_level(static_cast<Eigen::Index>(k), w + 1);
        for (int d = 0; d < 7; ++d)
          npi.row({pc.country, format_date(monday + d), panel.npi_ids[k],
                   format_full(score)});
      }
    }

    for (int t = 0; t < T; ++t) {
      std::int64_t monday = week_monday_serial(pc.week0 + t);
      for (int d = 0; d < 7; ++d)
        vacc.row({pc.country, format_date(monday + d),
                  format_full(pc.vacc(t) * population), format_full(population)});
    }

    // Variant labels: recover the dominant label from the dummy columns.
    for (int t = 0; t < T; ++t) {
      int v = 0;
      for (int k = 1; k < 4; ++k)
        if (pc.variant(k, t) >= 0.5) v = k;
      variants.row({pc.country, format_iso_week(pc.week0 + t),
                    variant_names()[static_cast<std::size_t>(v)]});
    }
  }

  // Synthetic country features: two tied to the intercepts, two noise.
  {
    CsvWriter chars(dir + "/characteristics.csv");
    chars.row({"country", "feature", "value"});
    Rng rng = Rng::substream(seed, 0xFEA7);
    for (int c = 0; c < panel.n_countries(); ++c) {
      const std::string& code = panel.countries[static_cast<std::size_t>(c)].country;
      chars.row({code, "health_expenditure",
                 format_full(7.0 - 20.0 * truth.mu(2, c) + 0.3 * rng.normal())});
      chars.row({code, "hospital_beds",
                 format_full(500.0 + 2000.0 * truth.mu(1, c) + 30.0 * rng.normal())});
      chars.row({code, "governance_index", format_full(rng.normal())});
      if (c % 7 != 3)  // leave some entries missing
        chars.row({code, "internet_usage",
                   format_full(80.0 + 5.0 * rng.normal())});
    }
  }
  {
    CsvWriter borders(dir + "/borders.csv");
    borders.row({"country_a", "country_b", "km"});
    for (int c = 0; c + 1 < panel.n_countries(); ++c)
      borders.row({panel.countries[static_cast<std::size_t>(c)].country,
                   panel.countries[static_cast<std::size_t>(c) + 1].country,
                   format_full(200.0 + 50.0 * (c % 5))});
  }

  panel.save(dir + "/panel.json");
  ModelSpec spec = scenario.model_spec();
  ParameterLayout layout(spec, [&] {
    std::vector<std::string> cs;
    for (const auto& c : panel.countries) cs.push_back(c.country);
    return cs;
  }());
  json truth_j;
  truth_j["names"] = layout.names();
  VectorXd flat = layout.flatten(truth);
  truth_j["values"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  std::ofstream tf(dir + "/truth.json");
  tf << truth_j.dump(1) << "\n";
}

}  // namespace panelvar
