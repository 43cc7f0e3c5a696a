#include "panelvar/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "panelvar/csv.hpp"
#include "panelvar/dates.hpp"

namespace panelvar {

using nlohmann::json;

int response_index(const std::string& name) {
  const auto& names = response_names();
  for (int i = 0; i < kResponses; ++i)
    if (names[i] == name) return i;
  throw ConfigError("unknown response variable '" + name + "'");
}

namespace {

const std::vector<NpiInfo>& codebook() {
  static const std::vector<NpiInfo> table = {
      {"C1", "Schools Closing", 3},
      {"C2", "Workplace closure", 3},
      {"C3", "Cancel public events", 2},
      {"C4", "Restrictions on gatherings", 4},
      {"C5", "Close public transport", 2},
      {"C6", "Stay at home requirement", 3},
      {"C7", "Restrictions on internal movement", 2},
      {"C8", "International travel controls", 4},
      {"E1", "Income support", 2},
      {"E2", "Debt/contract relief", 2},
      {"H1", "Public information campaigns", 2},
      {"H2", "Testing policy", 3},
      {"H3", "Contact tracing", 2},
      {"H6", "Facial Coverings", 4},
      {"H7", "Vaccination policy", 5},
      {"H8", "Protection of elderly people", 3},
  };
  return table;
}

int variant_index(const std::string& label) {
  const auto& names = variant_names();
  for (int i = 0; i < 4; ++i)
    if (names[i] == label) return i;
  return -1;
}

struct WeekRange {
  std::int64_t lo, hi;  // inclusive
  bool empty() const { return lo > hi; }
};

WeekRange intersect(WeekRange a, WeekRange b) {
  return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}

WeekRange range_of(const WeeklySeries& s) {
  return {s.week0, s.week_end()};
}

}  // namespace

const NpiInfo& npi_info(const std::string& id) {
  for (const auto& e : codebook())
    if (e.id == id) return e;
  throw ConfigError("unknown NPI id '" + id + "'");
}

const std::vector<std::string>& default_npi_ids() {
  static const std::vector<std::string> ids = {"C1", "C2", "C4", "C5", "C8",
                                               "H2", "H6", "H8", "E1"};
  return ids;
}

DatasetOptions::DatasetOptions() {
  start_day = days_from_civil(2020, 1, 6);
  end_day = days_from_civil(2021, 12, 27);
  trend_start_day = days_from_civil(2016, 1, 1);
  trend_end_day = days_from_civil(2019, 12, 31);
}

DataPaths DataPaths::in_dir(const std::string& dir) {
  DataPaths p;
  p.responses = dir + "/responses.csv";
  p.npi = dir + "/npi.csv";
  p.vaccination = dir + "/vaccination.csv";
  p.variants = dir + "/variants.csv";
  p.characteristics = dir + "/characteristics.csv";
  p.borders = dir + "/borders.csv";
  return p;
}

// --- weekly aggregation ------------------------------------------------

WeeklySeries downsample_weekly(const std::vector<std::int64_t>& days,
                               const std::vector<double>& values) {
  if (days.empty()) throw DataError("downsample_weekly: empty series");
  std::map<std::int64_t, std::pair<double, int>> acc;  // week -> (sum, count)
  bool weekly_cadence = true;
  for (std::size_t i = 0; i < days.size(); ++i) {
    auto& a = acc[week_index(days[i])];
    a.first += values[i];
    a.second += 1;
    if (a.second > 1) weekly_cadence = false;
  }

  std::int64_t first_week = acc.begin()->first;
  std::int64_t last_week = acc.rbegin()->first;
  if (!weekly_cadence) {
    // Daily cadence: drop partial boundary weeks.
    if (days.front() > week_monday_serial(first_week)) {
      acc.erase(first_week);
      if (acc.empty()) throw DataError("downsample_weekly: no whole week covered");
      first_week = acc.begin()->first;
    }
    if (days.back() < week_monday_serial(last_week) + 6) {
      acc.erase(last_week);
      if (acc.empty()) throw DataError("downsample_weekly: no whole week covered");
      last_week = acc.rbegin()->first;
    }
  }

  WeeklySeries out;
  out.week0 = first_week;
  out.v.reserve(static_cast<std::size_t>(last_week - first_week + 1));
  for (std::int64_t w = first_week; w <= last_week; ++w) {
    auto it = acc.find(w);
    if (it == acc.end() || it->second.second == 0)
      throw DataError("downsample_weekly: empty week " + format_iso_week(w));
    out.v.push_back(it->second.first / it->second.second);
  }
  return out;
}

double compute_trend_growth(const WeeklySeries& gdp_history) {
  if (gdp_history.v.size() < 52)
    throw DataError("trend-growth window has " +
                    std::to_string(gdp_history.v.size()) +
                    " weeks; need at least 52");
  double sum = 0;
  for (std::size_t i = 1; i < gdp_history.v.size(); ++i)
    sum += gdp_history.v[i] - gdp_history.v[i - 1];
  return sum / static_cast<double>(gdp_history.v.size() - 1);
}

WeeklySeries transform_gdp(const WeeklySeries& gdp_levels, double trend_growth) {
  if (gdp_levels.v.size() < 2)
    throw DataError("transform_gdp: need at least 2 weekly observations");
  WeeklySeries out;
  out.week0 = gdp_levels.week0 + 1;
  out.v.resize(gdp_levels.v.size() - 1);
  for (std::size_t i = 1; i < gdp_levels.v.size(); ++i) {
    double g0 = gdp_levels.v[i - 1], g1 = gdp_levels.v[i];
    if (!std::isfinite(g0) || !std::isfinite(g1))
      throw DataError("transform_gdp: non-finite GDP level at week " +
                      format_iso_week(gdp_levels.week0 + static_cast<std::int64_t>(i)));
    out.v[i - 1] = (g1 - g0 - trend_growth) / 10.0;
  }
  return out;
}

WeeklySeries transform_transit(const std::vector<std::int64_t>& days,
                               const std::vector<double>& values) {
  if (days.size() < 14)
    throw DataError("transform_transit: need at least two weeks of daily data");

  // Fill gaps of at most 7 missing days by linear interpolation.
  std::vector<double> daily;
  std::int64_t d0 = days.front();
  daily.reserve(static_cast<std::size_t>(days.back() - d0 + 1));
  for (std::size_t i = 0; i < days.size(); ++i) {
    if (i > 0) {
      std::int64_t gap = days[i] - days[i - 1] - 1;
      if (gap > 7)
        throw DataError("transit gap of " + std::to_string(gap) +
                        " days after " + format_date(days[i - 1]));
      for (std::int64_t g = 1; g <= gap; ++g) {
        double frac = static_cast<double>(g) / static_cast<double>(gap + 1);
        daily.push_back(values[i - 1] + frac * (values[i] - values[i - 1]));
      }
    }
    daily.push_back(values[i]);
  }

  // Trailing 7-day moving average, defined once a full window exists.
  std::vector<std::int64_t> ma_days;
  std::vector<double> ma;
  double window = 0;
  for (std::size_t i = 0; i < daily.size(); ++i) {
    window += daily[i];
    if (i >= 7) window -= daily[i - 7];
    if (i >= 6) {
      ma_days.push_back(d0 + static_cast<std::int64_t>(i));
      ma.push_back(window / 7.0);
    }
  }
  if (ma.size() < 8)
    throw DataError("transform_transit: series too short after smoothing");

  WeeklySeries weekly = downsample_weekly(ma_days, ma);
  if (weekly.v.size() < 2)
    throw DataError("transform_transit: fewer than 2 whole weeks");
  WeeklySeries out;
  out.week0 = weekly.week0 + 1;
  out.v.resize(weekly.v.size() - 1);
  for (std::size_t i = 1; i < weekly.v.size(); ++i)
    out.v[i - 1] = (weekly.v[i] - weekly.v[i - 1]) / 100.0;
  return out;
}

WeeklySeries transform_excess_deaths(const WeeklySeries& ed_per_100k,
                                     int lead_weeks) {
  if (lead_weeks < 0) throw ConfigError("lead_weeks must be >= 0");
  if (ed_per_100k.v.size() <= static_cast<std::size_t>(lead_weeks))
    throw DataError("excess-death series shorter than the lead");
  WeeklySeries out;
  out.week0 = ed_per_100k.week0;
  out.v.resize(ed_per_100k.v.size() - static_cast<std::size_t>(lead_weeks));
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    double x = ed_per_100k.v[i + static_cast<std::size_t>(lead_weeks)];
    if (!(x > -1.0))
      throw DataError(
          "excess deaths <= -1 per 100k at week " +
          format_iso_week(ed_per_100k.week0 +
                          static_cast<std::int64_t>(i + lead_weeks)));
    out.v[i] = std::log1p(x);
  }
  return out;
}

NpiFeatures build_npi_features(const WeeklySeries& weekly_level,
                               const std::string& npi_id,
                               const std::string& country) {
  const NpiInfo& info = npi_info(npi_id);
  for (std::size_t i = 0; i < weekly_level.v.size(); ++i) {
    double s = weekly_level.v[i];
    if (!(s >= 0.0 && s <= static_cast<double>(info.max_score)))
      throw DataError("NPI " + npi_id + " score " + std::to_string(s) +
                      " outside codebook range [0," +
                      std::to_string(info.max_score) + "] for " + country +
                      " week " +
                      format_iso_week(weekly_level.week0 +
                                      static_cast<std::int64_t>(i)));
  }
  NpiFeatures f;
  f.level.week0 = weekly_level.week0 + 1;  // NPI_{t-1} enters at t
  f.level.v = weekly_level.v;
  f.change.week0 = weekly_level.week0 + 2;
  f.change.v.resize(weekly_level.v.size() >= 1 ? weekly_level.v.size() - 1 : 0);
  for (std::size_t i = 1; i < weekly_level.v.size(); ++i)
    f.change.v[i - 1] = weekly_level.v[i] - weekly_level.v[i - 1];
  return f;
}

Eigen::MatrixXd build_variant_dummies(const std::vector<std::string>& dominant) {
  Eigen::MatrixXd d(4, static_cast<Eigen::Index>(dominant.size()));
  for (std::size_t t = 0; t < dominant.size(); ++t) {
    int v = variant_index(dominant[t]);
    if (v < 0)
      throw DataError("unknown variant label '" + dominant[t] + "'");
    d(0, t) = 1.0;                    // WT: permanent intercept-like dummy
    d(1, t) = v >= 1 ? 1.0 : 0.0;     // Alpha: off only while WT dominates
    d(2, t) = v >= 2 ? 1.0 : 0.0;     // Delta: off while WT or Alpha dominate
    d(3, t) = v == 3 ? 1.0 : 0.0;     // Omicron: on only while dominant
  }
  return d;
}

std::vector<double> impute_border_weighted(
    const std::vector<std::vector<double>>& neighbor_values,
    const std::vector<double>& weights_km) {
  if (neighbor_values.empty() || neighbor_values.size() != weights_km.size())
    throw DataError("impute_border_weighted: neighbor/weight size mismatch");
  for (double w : weights_km)
    if (!(w > 0)) throw DataError("impute_border_weighted: weights must be > 0");
  std::size_t n_weeks = neighbor_values.front().size();
  for (const auto& nv : neighbor_values)
    if (nv.size() != n_weeks)
      throw DataError("impute_border_weighted: ragged neighbor coverage");
  std::vector<double> out(n_weeks, 0.0);
  double wsum = 0;
  for (double w : weights_km) wsum += w;
  for (std::size_t t = 0; t < n_weeks; ++t) {
    double s = 0;
    for (std::size_t i = 0; i < neighbor_values.size(); ++i)
      s += weights_km[i] * neighbor_values[i][t];
    out[t] = s / wsum;
  }
  return out;
}

// --- panel assembly ----------------------------------------------------

namespace {

struct SeriesBuilder {
  std::vector<std::int64_t> days;
  std::vector<double> values;
  std::map<std::int64_t, long> seen;  // day -> line number

  void add(std::int64_t day, double value, const std::string& file, long line) {
    auto it = seen.find(day);
    if (it != seen.end()) {
      std::ostringstream os;
      os << file << ":" << line << ": duplicate (country,date) row (first seen at line "
         << it->second << ")";
      throw DataError(os.str());
    }
    seen[day] = line;
    days.push_back(day);
    values.push_back(value);
  }

  void sort() {
    std::vector<std::size_t> idx(days.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return days[a] < days[b]; });
    std::vector<std::int64_t> d(days.size());
    std::vector<double> v(days.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d[i] = days[idx[i]];
      v[i] = values[idx[i]];
    }
    days.swap(d);
    values.swap(v);
  }
};

WeeklySeries crop(const WeeklySeries& s, WeekRange r) {
  WeeklySeries out;
  out.week0 = r.lo;
  out.v.assign(s.v.begin() + static_cast<std::ptrdiff_t>(r.lo - s.week0),
               s.v.begin() + static_cast<std::ptrdiff_t>(r.hi - s.week0 + 1));
  return out;
}

}  // namespace

PanelDataset load_panel(const DataPaths& paths,
                        const std::vector<std::string>& npi_ids,
                        const DatasetOptions& options) {
  // responses.csv: country,date,series,value
  std::map<std::string, std::map<std::string, SeriesBuilder>> resp;
  {
    CsvReader r(paths.responses);
    std::size_t c_country = r.col("country"), c_date = r.col("date"),
                c_series = r.col("series"), c_value = r.col("value");
    std::vector<std::string> f;
    while (r.next(f)) {
      const std::string& series = f[c_series];
      if (series != "gdp" && series != "transit" &&
          series != "excess_deaths_per_100k" && series != "log_r")
        throw DataError(paths.responses + ":" + std::to_string(r.line()) +
                        ": unknown series '" + series + "'");
      resp[f[c_country]][series].add(parse_date_serial(f[c_date]),
                                     r.to_double(f[c_value], "response"),
                                     paths.responses, r.line());
    }
  }

  // npi.csv: country,date,npi_id,score
  std::map<std::string, std::map<std::string, SeriesBuilder>> npi;
  {
    CsvReader r(paths.npi);
    std::size_t c_country = r.col("country"), c_date = r.col("date"),
                c_id = r.col("npi_id"), c_score = r.col("score");
    std::vector<std::string> f;
    while (r.next(f)) {
      const std::string& id = f[c_id];
      double score = r.to_double(f[c_score], "score");
      const NpiInfo& info = npi_info(id);
      if (!(score >= 0 && score <= info.max_score))
        throw DataError(paths.npi + ":" + std::to_string(r.line()) + ": NPI " +
                        id + " score " + f[c_score] + " outside codebook range");
      npi[f[c_country]][id].add(parse_date_serial(f[c_date]), score, paths.npi,
                                r.line());
    }
  }

  // vaccination.csv: country,date,total_doses,population
  std::map<std::string, SeriesBuilder> vacc;
  {
    CsvReader r(paths.vaccination);
    std::size_t c_country = r.col("country"), c_date = r.col("date"),
                c_doses = r.col("total_doses"), c_pop = r.col("population");
    std::vector<std::string> f;
    while (r.next(f)) {
      double doses = r.to_double(f[c_doses], "total_doses");
      double pop = r.to_double(f[c_pop], "population");
      if (!(pop > 0))
        throw DataError(paths.vaccination + ":" + std::to_string(r.line()) +
                        ": population must be > 0");
      vacc[f[c_country]].add(parse_date_serial(f[c_date]), doses / pop,
                             paths.vaccination, r.line());
    }
  }

  // variants.csv: country,iso_week,who_label
  std::map<std::string, std::map<std::int64_t, std::string>> var_labels;
  {
    CsvReader r(paths.variants);
    std::size_t c_country = r.col("country"), c_week = r.col("iso_week"),
                c_label = r.col("who_label");
    std::vector<std::string> f;
    while (r.next(f)) {
      std::int64_t w = parse_iso_week(f[c_week]);
      auto& m = var_labels[f[c_country]];
      if (m.count(w))
        throw DataError(paths.variants + ":" + std::to_string(r.line()) +
                        ": duplicate (country,iso_week) row");
      m[w] = f[c_label];
    }
  }

  // borders.csv: country_a,country_b,km (optional, symmetric)
  std::map<std::string, std::vector<std::pair<std::string, double>>> borders;
  if (!paths.borders.empty() && std::ifstream(paths.borders).good()) {
    CsvReader r(paths.borders);
    std::size_t c_a = r.col("country_a"), c_b = r.col("country_b"),
                c_km = r.col("km");
    std::vector<std::string> f;
    while (r.next(f)) {
      double km = r.to_double(f[c_km], "km");
      borders[f[c_a]].emplace_back(f[c_b], km);
      borders[f[c_b]].emplace_back(f[c_a], km);
    }
  }

  // Variant dummies per country, with border-weighted gap imputation.
  std::map<std::string, std::map<std::int64_t, Eigen::Vector4d>> var_dummies;
  for (const auto& [country, labels] : var_labels) {
    std::vector<std::string> seq;
    std::vector<std::int64_t> weeks;
    for (const auto& [w, label] : labels) {
      weeks.push_back(w);
      seq.push_back(label);
    }
    Eigen::MatrixXd d = build_variant_dummies(seq);
    auto& out = var_dummies[country];
    for (std::size_t i = 0; i < weeks.size(); ++i) out[weeks[i]] = d.col(i);
  }
  for (auto& [country, dummies] : var_dummies) {
    if (dummies.empty()) continue;
    std::vector<std::int64_t> gaps;
    for (std::int64_t w = dummies.begin()->first; w <= dummies.rbegin()->first; ++w)
      if (!dummies.count(w)) gaps.push_back(w);
    if (gaps.empty()) continue;
    auto bit = borders.find(country);
    if (bit == borders.end())
      throw DataError("variant data gap for " + country +
                      " and no borders.csv neighbors to impute from");
    for (int k = 0; k < 4; ++k) {
      std::vector<std::vector<double>> nv;
      std::vector<double> wkm;
      for (const auto& [nb, km] : bit->second) {
        auto nit = var_dummies.find(nb);
        if (nit == var_dummies.end()) continue;
        bool full = true;
        std::vector<double> vals;
        for (std::int64_t w : gaps) {
          auto vit = nit->second.find(w);
          if (vit == nit->second.end()) {
            full = false;
            break;
          }
          vals.push_back(vit->second(k));
        }
        if (full) {
          nv.push_back(std::move(vals));
          wkm.push_back(km);
        }
      }
      if (nv.empty())
        throw DataError("no neighbor coverage for variant gap weeks of " +
                        country);
      std::vector<double> filled = impute_border_weighted(nv, wkm);
      for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (k == 0) var_dummies[country][gaps[i]] = Eigen::Vector4d::Zero();
        var_dummies[country][gaps[i]](k) = filled[i];
      }
    }
    log_info("imputed " + std::to_string(gaps.size()) +
             " variant gap weeks for " + country + " from border neighbors");
  }

  const std::int64_t start_week = week_index(options.start_day);
  const std::int64_t end_week = week_index(options.end_day);
  const WeekRange analysis{start_week, end_week};

  PanelDataset panel;
  panel.npi_ids = npi_ids;

  std::set<std::string> all_countries;
  for (const auto& [c, _] : resp) all_countries.insert(c);
  for (const auto& [c, _] : npi) all_countries.insert(c);
  for (const auto& [c, _] : vacc) all_countries.insert(c);
  for (const auto& [c, _] : var_labels) all_countries.insert(c);

  std::vector<std::string> dropped;
  for (const std::string& country : all_countries) {
    auto missing = [&](const std::string& what) {
      dropped.push_back(country + " (" + what + ")");
    };
    auto rit = resp.find(country);
    if (rit == resp.end()) {
      missing("responses");
      continue;
    }
    bool ok = true;
    for (const char* s :
         {"gdp", "transit", "excess_deaths_per_100k", "log_r"})
      if (!rit->second.count(s)) {
        missing(std::string("responses: ") + s);
        ok = false;
        break;
      }
    if (!ok) continue;
    auto nit = npi.find(country);
    if (nit == npi.end()) {
      missing("npi");
      continue;
    }
    for (const std::string& id : npi_ids)
      if (!nit->second.count(id)) {
        missing("npi: " + id);
        ok = false;
        break;
      }
    if (!ok) continue;
    if (!vacc.count(country)) {
      missing("vaccination");
      continue;
    }
    if (!var_dummies.count(country)) {
      missing("variants");
      continue;
    }

    for (auto& [_, b] : rit->second) b.sort();
    for (auto& [_, b] : nit->second) b.sort();
    vacc[country].sort();

    // Responses.
    auto& gdp_b = rit->second["gdp"];
    WeeklySeries gdp_weekly = downsample_weekly(gdp_b.days, gdp_b.values);
    const std::int64_t trend_lo = week_index(options.trend_start_day);
    const std::int64_t trend_hi = week_index(options.trend_end_day);
    WeekRange trend_range =
        intersect(range_of(gdp_weekly), WeekRange{trend_lo, trend_hi});
    if (trend_range.empty())
      throw DataError("no GDP history in the trend window for " + country);
    double g_c = compute_trend_growth(crop(gdp_weekly, trend_range));
    // Keep one week before the analysis start so the first difference exists.
    WeekRange gdp_range = intersect(range_of(gdp_weekly),
                                    WeekRange{start_week - 1, end_week});
    if (gdp_range.empty() || gdp_range.hi - gdp_range.lo < 1) {
      missing("gdp coverage");
      continue;
    }
    WeeklySeries dgdp = transform_gdp(crop(gdp_weekly, gdp_range), g_c);

    auto& tr_b = rit->second["transit"];
    WeeklySeries dtransit = transform_transit(tr_b.days, tr_b.values);

    auto& ed_b = rit->second["excess_deaths_per_100k"];
    WeeklySeries ed_weekly = downsample_weekly(ed_b.days, ed_b.values);
    WeeklySeries log_ed =
        transform_excess_deaths(ed_weekly, options.ed_lead_weeks);

    auto& lr_b = rit->second["log_r"];
    WeeklySeries log_r = downsample_weekly(lr_b.days, lr_b.values);

    // Exogenous columns.
    std::vector<NpiFeatures> feats;
    for (const std::string& id : npi_ids) {
      auto& b = nit->second[id];
      feats.push_back(
          build_npi_features(downsample_weekly(b.days, b.values), id, country));
    }
    auto& vb = vacc[country];
    WeeklySeries vacc_weekly = downsample_weekly(vb.days, vb.values);

    const auto& vd = var_dummies[country];
    WeekRange variant_range{vd.begin()->first, vd.rbegin()->first};

    WeekRange window = analysis;
    window = intersect(window, range_of(log_r));
    window = intersect(window, range_of(log_ed));
    window = intersect(window, range_of(dgdp));
    window = intersect(window, range_of(dtransit));
    window = intersect(window, range_of(vacc_weekly));
    window = intersect(window, variant_range);
    for (const auto& f : feats) {
      window = intersect(window, range_of(f.level));
      window = intersect(window, range_of(f.change));
    }
    if (window.empty() || window.hi - window.lo + 1 < 3) {
      missing("aligned coverage");
      continue;
    }

    const int T = static_cast<int>(window.hi - window.lo + 1);
    PanelCountry pc;
    pc.country = country;
    pc.week0 = window.lo;
    pc.Y.resize(4, T);
    pc.x_level.resize(static_cast<Eigen::Index>(npi_ids.size()), T);
    pc.x_change.resize(static_cast<Eigen::Index>(npi_ids.size()), T);
    pc.variant.resize(4, T);
    pc.vacc.resize(T);
    for (int t = 0; t < T; ++t) {
      std::int64_t w = window.lo + t;
      pc.Y(0, t) = log_r.at(w);
      pc.Y(1, t) = log_ed.at(w);
      pc.Y(2, t) = dgdp.at(w);
      pc.Y(3, t) = dtransit.at(w);
      for (std::size_t k = 0; k < feats.size(); ++k) {
        pc.x_level(static_cast<Eigen::Index>(k), t) = feats[k].level.at(w);
        pc.x_change(static_cast<Eigen::Index>(k), t) = feats[k].change.at(w);
      }
      pc.variant.col(t) = vd.at(w);
      pc.vacc(t) = vacc_weekly.at(w);
    }
    panel.countries.push_back(std::move(pc));
  }

  if (!dropped.empty()) {
    std::string list;
    for (const auto& d : dropped) list += (list.empty() ? "" : ", ") + d;
    log_warn("dropped countries missing mandatory series: " + list);
  }
  if (panel.countries.empty())
    throw DataError("no country has complete coverage; panel is empty");
  panel.validate();
  return panel;
}

int PanelDataset::total_weeks() const {
  int n = 0;
  for (const auto& c : countries) n += c.weeks();
  return n;
}

const PanelCountry& PanelDataset::country(const std::string& code) const {
  for (const auto& c : countries)
    if (c.country == code) return c;
  throw DataError("country not in panel: " + code);
}

void PanelDataset::validate() const {
  for (const auto& c : countries) {
    if (c.Y.rows() != 4 || c.variant.rows() != 4)
      throw DataError("panel " + c.country + ": wrong response dimension");
    if (!c.Y.allFinite())
      throw DataError("panel " + c.country + ": non-finite response value");
    for (int t = 0; t < c.weeks(); ++t) {
      if (c.variant(0, t) != 1.0)
        throw DataError("panel " + c.country + ": WT dummy must be 1");
      for (int k = 1; k < 4; ++k)
        if (c.variant(k, t) > c.variant(k - 1, t) + 1e-12)
          throw DataError("panel " + c.country +
                          ": variant dummies not monotone at week " +
                          format_iso_week(c.week0 + t));
    }
    for (int t = 0; t < c.weeks(); ++t) {
      if (std::abs(c.Y(2, t)) >= 10.0 || std::abs(c.Y(3, t)) >= 10.0) {
        log_warn("panel " + c.country + ": |dGDP| or |dTransit| >= 10 at week " +
                 format_iso_week(c.week0 + t) + " (unusual scale)");
        break;
      }
    }
  }
}

// --- serialization -----------------------------------------------------

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()),
                    static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k)
      m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  return m;
}

}  // namespace

std::string PanelDataset::to_json() const {
  json j;
  j["schema"] = "panelvar/panel/v1";
  j["responses"] = response_names();
  j["npi_ids"] = npi_ids;
  json jc = json::object();
  for (const auto& c : countries) {
    json e;
    e["week0"] = c.week0;
    e["weeks"] = c.weeks();
    e["Y"] = matrix_to_json(c.Y);
    e["x_level"] = matrix_to_json(c.x_level);
    e["x_change"] = matrix_to_json(c.x_change);
    e["variant"] = matrix_to_json(c.variant);
    json v = json::array();
    for (int t = 0; t < c.weeks(); ++t) v.push_back(c.vacc(t));
    e["vacc"] = std::move(v);
    jc[c.country] = std::move(e);
  }
  j["series"] = std::move(jc);
  return j.dump(1);
}

PanelDataset PanelDataset::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("schema", "") != "panelvar/panel/v1")
    throw DataError("panel JSON: unknown or missing schema tag");
  PanelDataset p;
  p.npi_ids = j.at("npi_ids").get<std::vector<std::string>>();
  for (const auto& [country, e] : j.at("series").items()) {
    PanelCountry c;
    c.country = country;
    c.week0 = e.at("week0").get<std::int64_t>();
    c.Y = matrix_from_json(e.at("Y"));
    c.x_level = matrix_from_json(e.at("x_level"));
    c.x_change = matrix_from_json(e.at("x_change"));
    c.variant = matrix_from_json(e.at("variant"));
    auto v = e.at("vacc").get<std::vector<double>>();
    c.vacc = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    p.countries.push_back(std::move(c));
  }
  std::sort(p.countries.begin(), p.countries.end(),
            [](const PanelCountry& a, const PanelCountry& b) {
              return a.country < b.country;
            });
  p.validate();
  return p;
}

void PanelDataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << to_json() << "\n";
}

PanelDataset PanelDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

CountryCharacteristics load_characteristics(const std::string& path) {
  CsvReader r(path);
  std::size_t c_country = r.col("country"), c_feature = r.col("feature"),
              c_value = r.col("value");
  std::map<std::string, std::map<std::string, double>> table;
  std::set<std::string> features;
  std::vector<std::string> f;
  while (r.next(f)) {
    table[f[c_country]][f[c_feature]] = r.to_double(f[c_value], "value");
    features.insert(f[c_feature]);
  }
  CountryCharacteristics cc;
  for (const auto& [c, _] : table) cc.countries.push_back(c);
  cc.features.assign(features.begin(), features.end());
  cc.values.setZero(static_cast<Eigen::Index>(cc.countries.size()),
                    static_cast<Eigen::Index>(cc.features.size()));
  cc.present.setConstant(cc.values.rows(), cc.values.cols(), false);
  for (Eigen::Index i = 0; i < cc.values.rows(); ++i) {
    const auto& row = table[cc.countries[static_cast<std::size_t>(i)]];
    for (Eigen::Index k = 0; k < cc.values.cols(); ++k) {
      auto it = row.find(cc.features[static_cast<std::size_t>(k)]);
      if (it != row.end()) {
        cc.values(i, k) = it->second;
        cc.present(i, k) = true;
      }
    }
  }
  return cc;
}

}  // namespace panelvar
