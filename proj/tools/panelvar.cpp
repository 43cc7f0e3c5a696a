// panelvar: fit and analyze partially pooled vector autoregressions on
// weekly country panels. Subcommands cover the whole pipeline: simulate,
// fit, irf, loo, forecast, posthoc, sensitivity.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "panelvar/csv.hpp"
#include "panelvar/dataset.hpp"
#include "panelvar/dates.hpp"
#include "panelvar/diagnostics.hpp"
#include "panelvar/evaluation.hpp"
#include "panelvar/irf.hpp"
#include "panelvar/model.hpp"
#include "panelvar/posthoc.hpp"
#include "panelvar/sampler.hpp"
#include "panelvar/stats.hpp"
#include "panelvar/svg.hpp"
#include "panelvar/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace panelvar;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Args {
  std::string config;
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool strict = false;
  int threads = 0;
};

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::uint64_t h = 14695981039346656037ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Accumulates the run manifest; written as the final step so a manifest's
// presence marks a completed run.
class Manifest {
 public:
  Manifest(const std::string& subcommand, const Args& args)
      : start_(std::chrono::steady_clock::now()) {
    j_["subcommand"] = subcommand;
    j_["version"] = kVersion;
    j_["seed"] = args.seed;
    j_["out_dir"] = args.out;
    j_["config_hash"] =
        args.config.empty() ? "none" : hex64(fnv1a_file(args.config));
    auto now = std::chrono::system_clock::now();
    j_["started_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch())
            .count();
    j_["inputs"] = json::object();
  }
  void input(const std::string& path) {
    if (fs::exists(path)) j_["inputs"][path] = hex64(fnv1a_file(path));
  }
  void write(const std::string& out_dir) {
    auto elapsed = std::chrono::steady_clock::now() - start_;
    j_["duration_s"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() /
        1000.0;
    std::ofstream f(out_dir + "/manifest.json");
    if (!f) throw DataError("cannot write manifest in " + out_dir);
    f << j_.dump(1) << "\n";
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return j;
}

ModelSpec spec_from_config(const json& cfg) {
  if (!cfg.contains("model")) return ModelSpec{};
  return ModelSpec::from_json(cfg["model"].dump());
}

SamplerConfig sampler_from_config(const json& cfg, const Args& args) {
  SamplerConfig s;
  if (cfg.contains("sampler")) {
    const auto& j = cfg["sampler"];
    s.chains = j.value("chains", s.chains);
    s.warmup = j.value("warmup", s.warmup);
    s.iterations = j.value("iterations", s.iterations);
    s.adapt_delta = j.value("adapt_delta", s.adapt_delta);
    s.init_step_size = j.value("init_step_size", s.init_step_size);
    s.max_treedepth = j.value("max_treedepth", s.max_treedepth);
    s.seed = j.value("seed", s.seed);
  }
  if (args.seed_set) s.seed = args.seed;
  if (args.threads > 0) s.threads = args.threads;
  s.validate();
  return s;
}

DatasetOptions dataset_options_from_config(const json& cfg) {
  DatasetOptions o;
  if (!cfg.contains("data")) return o;
  const auto& j = cfg["data"];
  if (j.contains("start")) o.start_day = parse_date_serial(j["start"]);
  if (j.contains("end")) o.end_day = parse_date_serial(j["end"]);
  if (j.contains("trend_start"))
    o.trend_start_day = parse_date_serial(j["trend_start"]);
  if (j.contains("trend_end")) o.trend_end_day = parse_date_serial(j["trend_end"]);
  o.ed_lead_weeks = j.value("ed_lead_weeks", o.ed_lead_weeks);
  return o;
}

ScenarioConfig scenario_from_config(const json& cfg) {
  ScenarioConfig sc;
  if (!cfg.contains("scenario")) return sc;
  const auto& j = cfg["scenario"];
  sc.n_countries = j.value("n_countries", sc.n_countries);
  sc.n_weeks = j.value("n_weeks", sc.n_weeks);
  if (j.contains("npi_ids"))
    sc.npi_ids = j["npi_ids"].get<std::vector<std::string>>();
  if (j.contains("start")) sc.start_day = parse_date_serial(j["start"]);
  sc.gdp_trend_growth = j.value("gdp_trend_growth", sc.gdp_trend_growth);
  sc.alpha_at = j.value("alpha_at", sc.alpha_at);
  sc.delta_at = j.value("delta_at", sc.delta_at);
  sc.omicron_at = j.value("omicron_at", sc.omicron_at);
  sc.vacc_start_frac = j.value("vacc_start_frac", sc.vacc_start_frac);
  sc.vacc_end_level = j.value("vacc_end_level", sc.vacc_end_level);
  sc.burn_in = j.value("burn_in", sc.burn_in);
  return sc;
}

// A fit output directory: draws plus the panel and spec they were drawn
// against.
struct FitDir {
  PosteriorDraws draws;
  PanelDataset panel;
  ModelSpec spec;
};

FitDir load_fit_dir(const std::string& dir, Manifest& manifest) {
  for (const char* f : {"draws.csv", "panel.json", "model_spec.json"}) {
    std::string p = dir + "/" + f;
    if (!fs::exists(p))
      throw DataError("missing prerequisite " + p +
                      " (run `panelvar fit` into this directory first)");
    manifest.input(p);
  }
  FitDir fd;
  fd.draws = PosteriorDraws::load_csv(dir + "/draws.csv");
  fd.panel = PanelDataset::load(dir + "/panel.json");
  std::ifstream ms(dir + "/model_spec.json");
  std::stringstream ss;
  ss << ms.rdbuf();
  fd.spec = ModelSpec::from_json(ss.str());
  return fd;
}

PanelDataset load_input_panel(const std::string& data_dir, const ModelSpec& spec,
                              const json& cfg, Manifest& manifest) {
  std::string pj = data_dir + "/panel.json";
  if (fs::exists(pj)) {
    manifest.input(pj);
    return PanelDataset::load(pj);
  }
  DataPaths paths = DataPaths::in_dir(data_dir);
  for (const std::string& p : {paths.responses, paths.npi, paths.vaccination,
                               paths.variants, paths.borders})
    manifest.input(p);
  return load_panel(paths, spec.npi_ids, dataset_options_from_config(cfg));
}

// Test hook: corrupt the gradient so the start-up self-test trips.
struct BrokenGradientTarget : Target {
  const Target& inner;
  explicit BrokenGradientTarget(const Target& t) : inner(t) {}
  int dim() const override { return inner.dim(); }
  double logp_grad(const Eigen::VectorXd& u, Eigen::VectorXd* g) const override {
    double v = inner.logp_grad(u, g);
    if (g && g->size() > 0) g->array() += 10.0 + g->cwiseAbs().maxCoeff();
    return v;
  }
  int constrained_dim() const override { return inner.constrained_dim(); }
  void constrain(const Eigen::VectorXd& u, Eigen::VectorXd& o) const override {
    inner.constrain(u, o);
  }
  std::vector<std::string> param_names() const override {
    return inner.param_names();
  }
};

int cmd_simulate(const Args& args, const json& cfg) {
  Manifest manifest("simulate", args);
  ScenarioConfig sc = scenario_from_config(cfg);
  TruthConfig tc = cfg.contains("truth") ? TruthConfig::from_json(cfg["truth"].dump())
                                         : TruthConfig::defaults();
  ModelSpec spec = sc.model_spec();
  ParameterVector truth = make_truth(tc, spec, sc.n_countries, args.seed);
  PanelDataset panel = simulate_panel(truth, sc, args.seed);
  fs::create_directories(args.out);
  write_synthetic_inputs(panel, truth, sc, args.seed, args.out);
  std::ofstream ms(args.out + "/model_spec.json");
  ms << spec.to_json() << "\n";
  log_info("simulated " + std::to_string(sc.n_countries) + " countries x " +
           std::to_string(sc.n_weeks) + " weeks into " + args.out);
  manifest.write(args.out);
  return 0;
}

int cmd_fit(const Args& args, const json& cfg) {
  Manifest manifest("fit", args);
  ModelSpec spec = spec_from_config(cfg);
  SamplerConfig scfg = sampler_from_config(cfg, args);
  PanelDataset panel = load_input_panel(args.data, spec, cfg, manifest);

  PanelVarPosterior posterior(panel, spec);
  log_info("fitting " + std::to_string(posterior.dim()) + " parameters on " +
           std::to_string(posterior.n_observations()) + " observations");

  PosteriorDraws draws;
  if (cfg.contains("debug") && cfg["debug"].value("break_gradient", false)) {
    BrokenGradientTarget broken(posterior);
    draws = run_sampling(broken, scfg);
  } else {
    draws = run_sampling(posterior, scfg);
  }

  fs::create_directories(args.out);
  draws.save_csv(args.out + "/draws.csv");
  draws.save_telemetry(args.out + "/telemetry.json");
  auto summaries = summarize(draws);
  save_summary_csv(summaries, args.out + "/summary.csv");
  panel.save(args.out + "/panel.json");
  {
    std::ofstream ms(args.out + "/model_spec.json");
    ms << spec.to_json() << "\n";
  }
  if (fs::exists(args.data + "/characteristics.csv"))
    fs::copy_file(args.data + "/characteristics.csv",
                  args.out + "/characteristics.csv",
                  fs::copy_options::overwrite_existing);
  manifest.write(args.out);

  if (args.strict) {
    double max_rhat = 0;
    for (const auto& s : summaries)
      if (std::isfinite(s.rhat)) max_rhat = std::max(max_rhat, s.rhat);
    int divergences = 0;
    for (const auto& s : draws.stats) divergences += s.divergences;
    double div_rate = static_cast<double>(divergences) /
                      std::max(1, draws.total_draws());
    if (max_rhat > 1.01)
      throw DiagnosticError("strict mode: max split R-hat " +
                            std::to_string(max_rhat) + " exceeds 1.01");
    if (div_rate > 0.01)
      throw DiagnosticError("strict mode: divergent transition rate " +
                            std::to_string(div_rate) + " exceeds 1%");
  }
  return 0;
}

int cmd_irf(const Args& args, const json& cfg) {
  Manifest manifest("irf", args);
  FitDir fd = load_fit_dir(args.data, manifest);
  IrfKind kind = IrfKind::Oirf;
  int horizon = 20;
  if (cfg.contains("irf")) {
    kind = irf_kind_from_name(cfg["irf"].value("kind", "oirf"));
    horizon = cfg["irf"].value("horizon", 20);
  }
  std::vector<std::string> countries;
  for (const auto& c : fd.panel.countries) countries.push_back(c.country);
  ParameterLayout layout(fd.spec, countries);
  IrfResult irf = irf_posterior(fd.draws, layout, kind, horizon);
  fs::create_directories(args.out);
  irf.save_csv(args.out + "/irf.csv");
  save_irf_grid_svg(irf, args.out + "/irf_grid.svg");
  manifest.write(args.out);
  return 0;
}

LooResult loo_for_dir(const std::string& dir, int thin, Manifest& manifest) {
  FitDir fd = load_fit_dir(dir, manifest);
  if (thin > 1) {
    for (auto& chain : fd.draws.chains) {
      Eigen::MatrixXd thinned((chain.rows() + thin - 1) / thin, chain.cols());
      for (Eigen::Index i = 0, r = 0; i < chain.rows(); i += thin, ++r)
        thinned.row(r) = chain.row(i);
      chain = std::move(thinned);
    }
  }
  PanelVarPosterior posterior(fd.panel, fd.spec);
  return psis_loo(pointwise_loglik(fd.draws, posterior));
}

int cmd_loo(const Args& args, const json& cfg) {
  Manifest manifest("loo", args);
  int thin = cfg.contains("loo") ? cfg["loo"].value("thin", 1) : 1;
  LooResult reference = loo_for_dir(args.data, thin, manifest);
  fs::create_directories(args.out);
  reference.save(args.out + "/loo.json");

  std::vector<std::pair<std::string, LooResult>> rows;
  if (cfg.contains("loo") && cfg["loo"].contains("compare")) {
    for (const auto& entry : cfg["loo"]["compare"]) {
      std::string name = entry.at("name").get<std::string>();
      std::string dir = entry.at("dir").get<std::string>();
      LooResult cand = loo_for_dir(dir, thin, manifest);
      cand.save(args.out + "/loo_" + name + ".json");
      rows.emplace_back(name, std::move(cand));
    }
  }
  CsvWriter w(args.out + "/elpd_diff.csv");
  w.row({"model", "elpd", "diff", "se_diff", "cri_low", "cri_high"});
  w.row({"reference", format_full(reference.elpd), "0", "0", "0", "0"});
  for (const auto& [name, cand] : rows) {
    ElpdDiff d = elpd_diff(reference, cand);
    w.row({name, format_full(cand.elpd), format_full(d.diff),
           format_full(d.se_diff), format_full(d.cri_low),
           format_full(d.cri_high)});
  }
  manifest.write(args.out);
  return 0;
}

int cmd_forecast(const Args& args, const json& cfg) {
  (void)cfg;
  Manifest manifest("forecast", args);
  FitDir fd = load_fit_dir(args.data, manifest);
  PanelVarPosterior posterior(fd.panel, fd.spec);
  ForecastResult r = one_step_forecast(fd.draws, posterior);
  fs::create_directories(args.out);
  r.save_csv(args.out + "/forecast.csv");
  r.save_summary_csv(args.out + "/forecast_summary.csv");
  save_forecast_scatter_svg(r, args.out + "/forecast_scatter.svg");
  manifest.write(args.out);
  return 0;
}

int cmd_posthoc(const Args& args, const json& cfg) {
  Manifest manifest("posthoc", args);
  FitDir fd = load_fit_dir(args.data, manifest);
  std::vector<std::string> countries;
  for (const auto& c : fd.panel.countries) countries.push_back(c.country);
  ParameterLayout layout(fd.spec, countries);
  fs::create_directories(args.out);

  std::vector<CorrelationPosterior> correlations;
  const auto& rn = response_names();
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      correlations.push_back(intercept_correlation(
          fd.draws, layout, rn[static_cast<std::size_t>(a)],
          rn[static_cast<std::size_t>(b)]));

  std::string chars_path = args.data + "/characteristics.csv";
  if (fs::exists(chars_path)) {
    manifest.input(chars_path);
    CountryCharacteristics chars = load_characteristics(chars_path);
    for (const auto& feature : chars.features)
      for (int v = 0; v < 4; ++v) {
        try {
          correlations.push_back(characteristic_correlation(
              fd.draws, layout, rn[static_cast<std::size_t>(v)], chars, feature));
        } catch (const std::exception& e) {
          log_warn(std::string("skipping characteristic correlation: ") + e.what());
        }
      }
    PcaResult p = pca(chars);
    p.save_loadings_csv(args.out + "/pca_loadings.csv");
  } else {
    log_warn("no characteristics.csv next to the draws; skipping feature "
             "correlations and PCA");
  }
  save_correlations_csv(correlations, args.out + "/correlations.csv");

  // Countries in the plane of mean (log ED, dGDP) intercepts, clustered.
  {
    int k = 3, restarts = 20;
    if (cfg.contains("kmeans")) {
      k = cfg["kmeans"].value("k", k);
      restarts = cfg["kmeans"].value("restarts", restarts);
    }
    k = std::min<int>(k, static_cast<int>(countries.size()));
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(countries.size()), 2);
    std::vector<double> xs, ys;
    for (std::size_t c = 0; c < countries.size(); ++c) {
      auto ed = fd.draws.parameter_draws(
          fd.draws.name_index("intercept.log_ed." + countries[c]));
      auto gdp = fd.draws.parameter_draws(
          fd.draws.name_index("intercept.d_gdp." + countries[c]));
      pts(static_cast<Eigen::Index>(c), 0) = mean_of(ed);
      pts(static_cast<Eigen::Index>(c), 1) = mean_of(gdp);
      xs.push_back(pts(static_cast<Eigen::Index>(c), 0));
      ys.push_back(pts(static_cast<Eigen::Index>(c), 1));
    }
    KmeansResult km = kmeans(pts, k, args.seed, restarts);
    CsvWriter w(args.out + "/clusters.csv");
    w.row({"country", "cluster", "intercept_log_ed", "intercept_d_gdp"});
    for (std::size_t c = 0; c < countries.size(); ++c)
      w.row({countries[c], std::to_string(km.assignments[c]),
             format_full(xs[c]), format_full(ys[c])});
    save_cluster_scatter_svg(countries, xs, ys, km.assignments, "log ED",
                             "dGDP", args.out + "/intercept_clusters.svg");
  }

  if (fs::exists(args.data + "/summary.csv")) {
    manifest.input(args.data + "/summary.csv");
    auto summaries = load_summary_csv(args.data + "/summary.csv");
    save_npi_forest_svg(summaries, fd.spec.npi_ids, args.out + "/npi_forest.svg");
  }
  manifest.write(args.out);
  return 0;
}

int cmd_sensitivity(const Args& args, const json& cfg) {
  Manifest manifest("sensitivity", args);
  FitDir fd = load_fit_dir(args.data, manifest);
  SamplerConfig scfg = sampler_from_config(cfg, args);
  auto refits = loco_sensitivity(fd.panel, fd.spec, scfg);
  fs::create_directories(args.out + "/loco");
  CsvWriter agg(args.out + "/sensitivity_summary.csv");
  agg.row({"excluded_country", "name", "mean", "cri_low", "cri_high"});
  for (const auto& refit : refits) {
    std::string dir = args.out + "/loco/" + refit.excluded_country;
    fs::create_directories(dir);
    save_summary_csv(refit.phi_summaries, dir + "/summary.csv");
    for (const auto& s : refit.phi_summaries)
      agg.row({refit.excluded_country, s.name, format_full(s.mean),
               format_full(s.cri_low), format_full(s.cri_high)});
  }
  manifest.write(args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian panel vector autoregression toolkit"};
  app.require_subcommand(1);

  Args args;
  auto add_common = [&](CLI::App* sub, bool needs_data, bool needs_seed) {
    sub->add_option("--config", args.config, "JSON configuration file");
    auto* d = sub->add_option(
        "--data", args.data,
        "input directory (raw CSVs, panel.json, or a fit output)");
    if (needs_data) d->required();
    sub->add_option("--out", args.out, "output directory")->required();
    auto* s = sub->add_option("--seed", args.seed, "RNG seed");
    if (needs_seed) s->required();
    sub->add_flag("--strict", args.strict,
                  "fail on convergence diagnostics (fit only)");
    sub->add_option("--threads", args.threads, "worker threads (default: cores)");
  };

  CLI::App* c_simulate = app.add_subcommand("simulate", "generate a synthetic panel");
  add_common(c_simulate, false, true);
  CLI::App* c_fit = app.add_subcommand("fit", "sample the posterior");
  add_common(c_fit, true, true);
  CLI::App* c_irf = app.add_subcommand("irf", "impulse response functions");
  add_common(c_irf, true, false);
  CLI::App* c_loo = app.add_subcommand("loo", "cross-validation comparison");
  add_common(c_loo, true, false);
  CLI::App* c_forecast = app.add_subcommand("forecast", "one-step forecast benchmark");
  add_common(c_forecast, true, false);
  CLI::App* c_posthoc = app.add_subcommand("posthoc", "country-effect analyses");
  add_common(c_posthoc, true, false);
  CLI::App* c_sensitivity =
      app.add_subcommand("sensitivity", "leave-one-country-out refits");
  add_common(c_sensitivity, true, false);

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = load_config(args.config);
    if (c_simulate->parsed()) {
      args.seed_set = true;
      return cmd_simulate(args, cfg);
    }
    if (c_fit->parsed()) {
      args.seed_set = true;
      return cmd_fit(args, cfg);
    }
    if (c_irf->parsed()) return cmd_irf(args, cfg);
    if (c_loo->parsed()) return cmd_loo(args, cfg);
    if (c_forecast->parsed()) return cmd_forecast(args, cfg);
    if (c_posthoc->parsed()) return cmd_posthoc(args, cfg);
    if (c_sensitivity->parsed()) {
      args.seed_set = c_sensitivity->count("--seed") > 0;
      return cmd_sensitivity(args, cfg);
    }
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 1;
  } catch (const DataError& e) {
    log_error(e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    log_error(e.what());
    return 2;
  } catch (const SamplerError& e) {
    log_error(e.what());
    return 3;
  } catch (const DiagnosticError& e) {
    log_error(e.what());
    return 4;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 1;
}
