#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "panelvar/dataset.hpp"
#include "panelvar/dates.hpp"
#include "panelvar/synth.hpp"
#include "test_helpers.hpp"

using namespace panelvar;

TEST_CASE("ISO week arithmetic") {
  CHECK(parse_iso_week("2020-W02") == week_index(parse_date_serial("2020-01-06")));
  CHECK(parse_iso_week("2020-W01") == week_index(parse_date_serial("2019-12-30")));
  CHECK(format_iso_week(parse_iso_week("2021-W09")) == "2021-W09");
  CHECK(weekday(parse_date_serial("2020-01-06")) == 0);  // Monday
  CHECK(weekday(parse_date_serial("2020-01-05")) == 6);  // Sunday
  CHECK(format_date(parse_date_serial("2016-02-29")) == "2016-02-29");
}

TEST_CASE("downsample_weekly") {
  std::int64_t mon = parse_date_serial("2021-03-01");  // a Monday

  SUBCASE("seven identical daily values give that value") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 0; i < 7; ++i) {
      days.push_back(mon + i);
      vals.push_back(4.2);
    }
    WeeklySeries w = downsample_weekly(days, vals);
    REQUIRE(w.v.size() == 1);
    CHECK(w.v[0] == 4.2);
  }
  SUBCASE("daily values 1..7 average to 4") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 0; i < 7; ++i) {
      days.push_back(mon + i);
      vals.push_back(i + 1.0);
    }
    CHECK(downsample_weekly(days, vals).v[0] == 4.0);
  }
  SUBCASE("14 days spanning two ISO weeks give two outputs") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 0; i < 14; ++i) {
      days.push_back(mon + i);
      vals.push_back(1.0);
    }
    CHECK(downsample_weekly(days, vals).v.size() == 2);
  }
  SUBCASE("partial boundary weeks are dropped for daily data") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 3; i < 17; ++i) {  // Thursday start, Wednesday end
      days.push_back(mon + i);
      vals.push_back(1.0);
    }
    CHECK(downsample_weekly(days, vals).v.size() == 1);
  }
  SUBCASE("weekly-cadence input passes through") {
    std::vector<std::int64_t> days = {mon + 2, mon + 9, mon + 16};
    std::vector<double> vals = {1.0, 2.0, 3.0};
    WeeklySeries w = downsample_weekly(days, vals);
    REQUIRE(w.v.size() == 3);
    CHECK(w.v[1] == 2.0);
  }
  SUBCASE("weekly-constant daily data round-trips losslessly") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    std::vector<double> weekly = {1.5, -2.25, 0.125, 7.0};
    for (std::size_t w = 0; w < weekly.size(); ++w)
      for (int d = 0; d < 7; ++d) {
        days.push_back(mon + 7 * static_cast<std::int64_t>(w) + d);
        vals.push_back(weekly[w]);
      }
    WeeklySeries out = downsample_weekly(days, vals);
    REQUIRE(out.v.size() == weekly.size());
    for (std::size_t w = 0; w < weekly.size(); ++w) CHECK(out.v[w] == weekly[w]);
  }
}

TEST_CASE("compute_trend_growth") {
  WeeklySeries s;
  s.week0 = 0;
  SUBCASE("linear series returns the slope") {
    for (int i = 0; i < 60; ++i) s.v.push_back(10 + 0.3 * i);
    CHECK(compute_trend_growth(s) == doctest::Approx(0.3).epsilon(1e-12));
  }
  SUBCASE("constant series returns zero") {
    s.v.assign(60, 5.0);
    CHECK(compute_trend_growth(s) == 0.0);
  }
  SUBCASE("noisy linear series recovers the slope within sampling error") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n(0.0, 0.5);
    double sum_diff = 0;
    double prev = 0;
    for (int i = 0; i < 208; ++i) {
      double v = 0.25 * i + n(gen);
      if (i > 0) sum_diff += v - prev;
      prev = v;
      s.v.push_back(v);
    }
    double brute = sum_diff / 207.0;  // brute-force mean of differences
    CHECK(compute_trend_growth(s) == doctest::Approx(brute).epsilon(1e-12));
    CHECK(std::abs(compute_trend_growth(s) - 0.25) < 0.02);
  }
  SUBCASE("short window is an error") {
    s.v.assign(51, 1.0);
    CHECK_THROWS_AS(compute_trend_growth(s), DataError);
  }
}

TEST_CASE("transform_gdp") {
  WeeklySeries g;
  g.week0 = 100;
  SUBCASE("direct formula") {
    g.v = {100, 101};
    WeeklySeries d = transform_gdp(g, 0.1);
    REQUIRE(d.v.size() == 1);
    CHECK(d.week0 == 101);
    CHECK(d.v[0] == doctest::Approx(0.09).epsilon(1e-12));
  }
  SUBCASE("zero case") {
    g.v = {100, 100};
    CHECK(transform_gdp(g, 0.0).v[0] == 0.0);
  }
  SUBCASE("non-finite input is an error") {
    g.v = {100, std::nan("")};
    CHECK_THROWS_AS(transform_gdp(g, 0.0), DataError);
  }
  SUBCASE("trend fixture de-trends to zero") {
    WeeklySeries hist;
    hist.week0 = 0;
    for (int i = 0; i < 208; ++i) hist.v.push_back(50 + 0.2 * i);
    double trend = compute_trend_growth(hist);
    CHECK(trend == doctest::Approx(0.2).epsilon(1e-9));
    WeeklySeries d = transform_gdp(hist, trend);
    for (double x : d.v) CHECK(std::abs(x) < 1e-12);
  }
}

TEST_CASE("transform_transit") {
  std::int64_t mon = parse_date_serial("2021-03-01");
  SUBCASE("constant series differences to zero") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 0; i < 35; ++i) {
      days.push_back(mon + i);
      vals.push_back(0.0);
    }
    WeeklySeries d = transform_transit(days, vals);
    for (double x : d.v) CHECK(x == 0.0);
  }
  SUBCASE("permanent step spreads across the smoothing window") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    const int step_at = 21;  // a Monday boundary
    for (int i = 0; i < 56; ++i) {
      days.push_back(mon + i);
      vals.push_back(i < step_at ? 0.0 : -70.0);
    }
    // Hand-rolled oracle: trailing 7-day mean, weekly mean, difference/100.
    std::vector<double> ma;
    for (int i = 6; i < 56; ++i) {
      double s = 0;
      for (int k = i - 6; k <= i; ++k) s += vals[static_cast<std::size_t>(k)];
      ma.push_back(s / 7.0);
    }
    // MA days cover mon+6..mon+55; first whole week starts at mon+7.
    std::vector<double> weekly;
    for (int w = 1; w < 8; ++w) {
      double s = 0;
      for (int d = 0; d < 7; ++d) s += ma[static_cast<std::size_t>(7 * w + d - 6)];
      weekly.push_back(s / 7.0);
    }
    WeeklySeries d = transform_transit(days, vals);
    REQUIRE(d.v.size() == weekly.size() - 1);
    double total = 0;
    for (std::size_t i = 1; i < weekly.size(); ++i) {
      double expect = (weekly[i] - weekly[i - 1]) / 100.0;
      CHECK(d.v[i - 1] == doctest::Approx(expect).epsilon(1e-12));
      total += d.v[i - 1];
    }
    CHECK(total == doctest::Approx(-0.70).epsilon(1e-9));
  }
  SUBCASE("single missing day in a constant series changes nothing") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 0; i < 35; ++i) {
      if (i == 17) continue;
      days.push_back(mon + i);
      vals.push_back(3.0);
    }
    WeeklySeries d = transform_transit(days, vals);
    for (double x : d.v) CHECK(x == 0.0);
  }
  SUBCASE("gaps beyond seven days are an error") {
    std::vector<std::int64_t> days;
    std::vector<double> vals;
    for (int i = 0; i < 40; ++i) {
      if (i >= 10 && i < 18) continue;  // 8 missing days
      days.push_back(mon + i);
      vals.push_back(0.0);
    }
    CHECK_THROWS_AS(transform_transit(days, vals), DataError);
  }
}

TEST_CASE("transform_excess_deaths") {
  WeeklySeries ed;
  ed.week0 = 10;
  SUBCASE("log1p values") {
    ed.v = {0.0, std::exp(1.0) - 1.0, 0.0, 0.0};
    WeeklySeries out = transform_excess_deaths(ed, 0);
    CHECK(out.v[0] == 0.0);
    CHECK(out.v[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("lead shifts the index") {
    ed.v = {1, 2, 3, 4, 5};
    WeeklySeries out = transform_excess_deaths(ed, 3);
    REQUIRE(out.v.size() == 2);
    CHECK(out.week0 == 10);
    CHECK(out.v[0] == doctest::Approx(std::log1p(4.0)));
    CHECK(out.v[1] == doctest::Approx(std::log1p(5.0)));
  }
  SUBCASE("values at or below -1 are an error naming the week") {
    ed.v = {0.0, -1.0, 0.0, 0.0};
    try {
      transform_excess_deaths(ed, 0);
      FAIL("expected error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(format_iso_week(11)) != std::string::npos);
    }
  }
  SUBCASE("inverse recovers the input") {
    ed.v = {0.1, 0.5, 1.9, 0.01};
    WeeklySeries out = transform_excess_deaths(ed, 0);
    for (std::size_t i = 0; i < ed.v.size(); ++i)
      CHECK(std::expm1(out.v[i]) == doctest::Approx(ed.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("build_npi_features") {
  WeeklySeries lvl;
  lvl.week0 = 50;
  SUBCASE("constant level lags through; changes vanish") {
    lvl.v.assign(6, 2.0);
    NpiFeatures f = build_npi_features(lvl, "C1", "AAA");
    CHECK(f.level.week0 == 51);
    for (double x : f.level.v) CHECK(x == 2.0);
    CHECK(f.change.week0 == 52);
    for (double x : f.change.v) CHECK(x == 0.0);
  }
  SUBCASE("a step produces a single change entry at the lagged position") {
    lvl.v = {0, 0, 3, 3, 3};
    NpiFeatures f = build_npi_features(lvl, "C1", "AAA");
    // level steps at week 52 (index 2), so the lagged change column has its
    // spike at week 53.
    CHECK(f.change.at(53) == 3.0);
    CHECK(f.change.at(52) == 0.0);
    CHECK(f.change.at(54) == 0.0);
  }
  SUBCASE("out-of-range scores name the NPI and week") {
    lvl.v = {0, 5, 0};
    try {
      build_npi_features(lvl, "C1", "AAA");
      FAIL("expected error");
    } catch (const DataError& e) {
      std::string msg = e.what();
      CHECK(msg.find("C1") != std::string::npos);
      CHECK(msg.find("AAA") != std::string::npos);
      CHECK(msg.find(format_iso_week(51)) != std::string::npos);
    }
  }
  SUBCASE("the default list has the nine modeled indicators") {
    CHECK(default_npi_ids().size() == 9);
  }
}

TEST_CASE("build_variant_dummies") {
  SUBCASE("succession example") {
    Eigen::MatrixXd d = build_variant_dummies({"WT", "WT", "Alpha", "Delta"});
    Eigen::MatrixXd expect(4, 4);
    expect << 1, 1, 1, 1,
              0, 0, 1, 1,
              0, 0, 0, 1,
              0, 0, 0, 0;
    CHECK((d - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("all wild type") {
    Eigen::MatrixXd d = build_variant_dummies({"WT", "WT"});
    CHECK(d.row(0).sum() == 2.0);
    CHECK(d.bottomRows(3).cwiseAbs().sum() == 0.0);
  }
  SUBCASE("omicron recedes but delta stays on") {
    Eigen::MatrixXd d = build_variant_dummies({"Delta", "Omicron", "Delta"});
    CHECK(d(3, 0) == 0.0);
    CHECK(d(3, 1) == 1.0);
    CHECK(d(3, 2) == 0.0);
    CHECK(d(2, 0) == 1.0);
    CHECK(d(2, 1) == 1.0);
    CHECK(d(2, 2) == 1.0);
  }
  SUBCASE("unknown label is an error") {
    CHECK_THROWS_AS(build_variant_dummies({"WT", "Sigma"}), DataError);
  }
  SUBCASE("columns are pointwise monotone for random sequences") {
    std::mt19937_64 gen(3);
    const char* labels[] = {"WT", "Alpha", "Delta", "Omicron"};
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<std::string> seq;
      for (int t = 0; t < 30; ++t) seq.push_back(labels[gen() % 4]);
      Eigen::MatrixXd d = build_variant_dummies(seq);
      for (int t = 0; t < 30; ++t) {
        CHECK(d(0, t) == 1.0);
        for (int k = 1; k < 4; ++k) CHECK(d(k, t) <= d(k - 1, t));
      }
    }
  }
}

TEST_CASE("impute_border_weighted") {
  SUBCASE("weighted mean") {
    auto out = impute_border_weighted({{10.0}, {20.0}}, {2.0, 3.0});
    CHECK(out[0] == doctest::Approx(16.0).epsilon(1e-12));
  }
  SUBCASE("single neighbor copies") {
    auto out = impute_border_weighted({{7.5, 8.5}}, {123.0});
    CHECK(out[0] == 7.5);
    CHECK(out[1] == 8.5);
  }
  SUBCASE("equal weights give the plain mean") {
    auto out = impute_border_weighted({{1.0}, {2.0}, {3.0}}, {5.0, 5.0, 5.0});
    CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("nonpositive weights are rejected") {
    CHECK_THROWS_AS(impute_border_weighted({{1.0}}, {0.0}), DataError);
  }
}

TEST_CASE("synthetic CSV schemas round-trip through load_panel") {
  testing::TempDir dir;
  ScenarioConfig sc;
  sc.n_countries = 3;
  sc.n_weeks = 30;
  TruthConfig tc = TruthConfig::defaults();
  ParameterVector truth = make_truth(tc, sc.model_spec(), sc.n_countries, 42);
  PanelDataset panel = simulate_panel(truth, sc, 42);
  write_synthetic_inputs(panel, truth, sc, 42, dir.str());

  DatasetOptions opts;
  opts.start_day = sc.start_day;
  opts.end_day = sc.start_day + 7 * (sc.n_weeks - 1);
  PanelDataset loaded =
      load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts);

  REQUIRE(loaded.n_countries() == 3);
  for (int c = 0; c < 3; ++c) {
    const auto& a = panel.countries[static_cast<std::size_t>(c)];
    const auto& b = loaded.countries[static_cast<std::size_t>(c)];
    REQUIRE(a.country == b.country);
    REQUIRE(b.weeks() == a.weeks());
    CHECK((a.Y - b.Y).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.x_level - b.x_level).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.x_change - b.x_change).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.variant - b.variant).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.vacc - b.vacc).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("x_change equals the discrete derivative of x_level") {
    for (const auto& c : loaded.countries)
      for (int t = 1; t < c.weeks(); ++t)
        for (int k = 0; k < c.x_level.rows(); ++k)
          CHECK(c.x_change(k, t) == c.x_level(k, t) - c.x_level(k, t - 1));
  }

  SUBCASE("panel JSON round-trips") {
    loaded.save(dir.file("panel2.json"));
    PanelDataset reloaded = PanelDataset::load(dir.file("panel2.json"));
    for (int c = 0; c < 3; ++c) {
      const auto& a = loaded.countries[static_cast<std::size_t>(c)];
      const auto& b = reloaded.countries[static_cast<std::size_t>(c)];
      CHECK((a.Y - b.Y).cwiseAbs().maxCoeff() == 0.0);
      CHECK(a.week0 == b.week0);
    }
  }
}

TEST_CASE("full 25-country input set loads 25 countries") {
  testing::TempDir dir;
  ScenarioConfig sc;
  sc.n_countries = 25;
  sc.n_weeks = 16;
  TruthConfig tc = TruthConfig::defaults();
  ParameterVector truth = make_truth(tc, sc.model_spec(), sc.n_countries, 19);
  PanelDataset panel = simulate_panel(truth, sc, 19);
  write_synthetic_inputs(panel, truth, sc, 19, dir.str());
  DatasetOptions opts;
  opts.start_day = sc.start_day;
  opts.end_day = sc.start_day + 7 * (sc.n_weeks - 1);
  PanelDataset loaded = load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts);
  CHECK(loaded.n_countries() == 25);
}

TEST_CASE("load_panel error and exclusion paths") {
  testing::TempDir dir;
  ScenarioConfig sc;
  sc.n_countries = 2;
  sc.n_weeks = 20;
  TruthConfig tc = TruthConfig::defaults();
  ParameterVector truth = make_truth(tc, sc.model_spec(), sc.n_countries, 7);
  PanelDataset panel = simulate_panel(truth, sc, 7);
  write_synthetic_inputs(panel, truth, sc, 7, dir.str());
  DatasetOptions opts;
  opts.start_day = sc.start_day;
  opts.end_day = sc.start_day + 7 * (sc.n_weeks - 1);

  SUBCASE("duplicate (country,date) rows are rejected with the row number") {
    std::ofstream app(dir.file("responses.csv"), std::ios::app);
    app << "C00," << format_date(week_monday_serial(panel.countries[0].week0 + 3))
        << ",log_r,0.5\n";
    app.close();
    try {
      load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts);
      FAIL("expected duplicate-key error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
      CHECK(std::string(e.what()).find("responses.csv:") != std::string::npos);
    }
  }

  SUBCASE("country missing a mandatory series is dropped with a warning") {
    // Strip all gdp rows for C01.
    std::ifstream in(dir.file("responses.csv"));
    std::stringstream keep;
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("C01", 0) != 0 || line.find(",gdp,") == std::string::npos)
        keep << line << "\n";
    in.close();
    std::ofstream out(dir.file("responses.csv"));
    out << keep.str();
    out.close();
    PanelDataset loaded = load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts);
    CHECK(loaded.n_countries() == 1);
    CHECK(loaded.countries[0].country == "C00");
  }

  SUBCASE("malformed numeric fields carry the row number") {
    std::ofstream app(dir.file("responses.csv"), std::ios::app);
    app << "C00,2021-06-07,log_r,not_a_number\n";
    app.close();
    CHECK_THROWS_AS(load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts),
                    DataError);
  }
}

TEST_CASE("ragged coverage yields per-country week ranges") {
  testing::TempDir dir;
  ScenarioConfig sc;
  sc.n_countries = 2;
  sc.n_weeks = 24;
  TruthConfig tc = TruthConfig::defaults();
  ParameterVector truth = make_truth(tc, sc.model_spec(), 2, 23);
  PanelDataset panel = simulate_panel(truth, sc, 23);
  write_synthetic_inputs(panel, truth, sc, 23, dir.str());

  // Truncate the last four weeks of C00's log_r series.
  std::int64_t cutoff = week_monday_serial(panel.countries[0].week0 + 20);
  {
    std::ifstream in(dir.file("responses.csv"));
    std::stringstream keep;
    std::string line;
    while (std::getline(in, line)) {
      bool drop = line.rfind("C00,", 0) == 0 &&
                  line.find(",log_r,") != std::string::npos &&
                  parse_date_serial(line.substr(4, 10)) >= cutoff;
      if (!drop) keep << line << "\n";
    }
    in.close();
    std::ofstream out(dir.file("responses.csv"));
    out << keep.str();
  }
  DatasetOptions opts;
  opts.start_day = sc.start_day;
  opts.end_day = sc.start_day + 7 * (sc.n_weeks - 1);
  PanelDataset loaded = load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts);
  REQUIRE(loaded.n_countries() == 2);
  CHECK(loaded.country("C00").weeks() == 20);
  CHECK(loaded.country("C01").weeks() == 24);

  // The posterior accepts the ragged panel; each country contributes its
  // own lag-adjusted observation count.
  ModelSpec spec = sc.model_spec();
  PanelVarPosterior post(loaded, spec);
  CHECK(post.n_observations() == 19 + 23);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(post.dim());
  CHECK(std::isfinite(post.log_posterior(u)));
}

TEST_CASE("variant gaps are filled from border-weighted neighbors") {
  testing::TempDir dir;
  ScenarioConfig sc;
  sc.n_countries = 3;
  sc.n_weeks = 20;
  TruthConfig tc = TruthConfig::defaults();
  ParameterVector truth = make_truth(tc, sc.model_spec(), sc.n_countries, 11);
  PanelDataset panel = simulate_panel(truth, sc, 11);
  write_synthetic_inputs(panel, truth, sc, 11, dir.str());

  // Remove interior variant weeks for C01 (keep first and last).
  std::int64_t w0 = panel.countries[1].week0;
  {
    std::ifstream in(dir.file("variants.csv"));
    std::stringstream keep;
    std::string line;
    while (std::getline(in, line)) {
      bool drop = false;
      for (int t = 5; t <= 9; ++t)
        if (line == "C01," + format_iso_week(w0 + t) + ",WT" ||
            line.rfind("C01," + format_iso_week(w0 + t), 0) == 0)
          drop = true;
      if (!drop) keep << line << "\n";
    }
    in.close();
    std::ofstream out(dir.file("variants.csv"));
    out << keep.str();
  }
  DatasetOptions opts;
  opts.start_day = sc.start_day;
  opts.end_day = sc.start_day + 7 * (sc.n_weeks - 1);
  PanelDataset loaded = load_panel(DataPaths::in_dir(dir.str()), sc.npi_ids, opts);
  const auto& c01 = loaded.country("C01");
  // Imputed weeks are border-length-weighted means of the neighbors, so the
  // monotonicity invariant still holds (validate() ran inside load_panel).
  for (int t = 5; t <= 9; ++t) CHECK(c01.variant(0, t) == 1.0);
}
