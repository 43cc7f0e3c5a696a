#include "panelvar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "panelvar/csv.hpp"
#include "panelvar/dates.hpp"
#include "panelvar/stats.hpp"

namespace panelvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

MatrixXd pointwise_loglik(const PosteriorDraws& draws,
                          const PanelVarPosterior& posterior) {
  if (draws.dim() != posterior.constrained_dim())
    throw std::invalid_argument(
        "pointwise_loglik: draws do not match the model dimension");
  MatrixXd ll(draws.total_draws(), posterior.n_observations());
  Eigen::Index row = 0;
  for (const auto& chain : draws.chains)
    for (Eigen::Index i = 0; i < chain.rows(); ++i) {
      ParameterVector theta =
          posterior.layout().unflatten(chain.row(i).transpose());
      ll.row(row++) = posterior.pointwise_loglik(theta).transpose();
    }
  return ll;
}

GpdFit gpd_fit_exceedances(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const int n = static_cast<int>(x.size());
  if (n < 5) throw std::invalid_argument("gpd_fit: need at least 5 exceedances");
  if (!(x.back() > 0)) throw std::invalid_argument("gpd_fit: no positive spread");

  const double prior = 3.0;
  const int m = 30 + static_cast<int>(std::floor(std::sqrt(n)));
  const double xstar = x[static_cast<std::size_t>(
      std::max(0, static_cast<int>(std::floor(n / 4.0 + 0.5)) - 1))];
  const double xmax = x.back();

  std::vector<double> theta(static_cast<std::size_t>(m)), logl(static_cast<std::size_t>(m));
  for (int j = 1; j <= m; ++j) {
    double t = 1.0 / xmax + (1.0 - std::sqrt(static_cast<double>(m) / (j - 0.5))) /
                                (prior * xstar);
    double k = 0;
    for (double xi : x) k += std::log1p(-t * xi);
    k /= n;
    theta[static_cast<std::size_t>(j - 1)] = t;
    logl[static_cast<std::size_t>(j - 1)] = n * (std::log(-t / k) - k - 1.0);
  }
  double lse = logsumexp(logl);
  double theta_hat = 0;
  for (int j = 0; j < m; ++j)
    theta_hat += theta[static_cast<std::size_t>(j)] *
                 std::exp(logl[static_cast<std::size_t>(j)] - lse);

  double k_hat = 0;
  for (double xi : x) k_hat += std::log1p(-theta_hat * xi);
  k_hat /= n;
  GpdFit fit;
  fit.sigma = -k_hat / theta_hat;
  // Weakly informative prior on the shape, stabilizing small tails.
  fit.k = (n * k_hat + 5.0) / (n + 10.0);
  return fit;
}

namespace {

double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

}  // namespace

LooResult psis_loo(const MatrixXd& loglik) {
  const int S = static_cast<int>(loglik.rows());
  const int n = static_cast<int>(loglik.cols());
  if (S == 0 || n == 0) throw std::invalid_argument("psis_loo: empty matrix");
  if (S < 400)
    log_warn("psis_loo: only " + std::to_string(S) +
             " draws; at least 400 are recommended");

  LooResult out;
  out.pointwise.resize(static_cast<std::size_t>(n));
  out.pareto_k.assign(static_cast<std::size_t>(n), 0.0);
  const int tail_len = static_cast<int>(std::ceil(0.2 * S));
  bool warned_degenerate = false;

  std::vector<double> lw(static_cast<std::size_t>(S));
  std::vector<int> order(static_cast<std::size_t>(S));
  for (int i = 0; i < n; ++i) {
    double lw_max = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < S; ++s) {
      lw[static_cast<std::size_t>(s)] = -loglik(s, i);
      lw_max = std::max(lw_max, lw[static_cast<std::size_t>(s)]);
    }
    for (auto& w : lw) w -= lw_max;

    bool smoothed = false;
    if (tail_len >= 5 && S - tail_len >= 1) {
      for (int s = 0; s < S; ++s) order[static_cast<std::size_t>(s)] = s;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return lw[static_cast<std::size_t>(a)] < lw[static_cast<std::size_t>(b)];
      });
      double cutoff = std::exp(lw[static_cast<std::size_t>(order[static_cast<std::size_t>(S - tail_len - 1)])]);
      std::vector<double> exceed(static_cast<std::size_t>(tail_len));
      for (int z = 0; z < tail_len; ++z)
        exceed[static_cast<std::size_t>(z)] =
            std::exp(lw[static_cast<std::size_t>(order[static_cast<std::size_t>(S - tail_len + z)])]) - cutoff;
      if (exceed.back() > 1e-14) {
        GpdFit fit = gpd_fit_exceedances(exceed);
        if (std::isfinite(fit.k) && std::isfinite(fit.sigma) && fit.sigma > 0) {
          for (int z = 0; z < tail_len; ++z) {
            double p = (z + 0.5) / tail_len;
            double q = cutoff + gpd_quantile(p, fit.k, fit.sigma);
            // Smoothed weights never exceed the raw maximum (= 1 here).
            lw[static_cast<std::size_t>(order[static_cast<std::size_t>(S - tail_len + z)])] =
                std::min(std::log(q), 0.0);
          }
          out.pareto_k[static_cast<std::size_t>(i)] = fit.k;
          smoothed = true;
          ++out.n_smoothed;
        }
      }
    }
    if (!smoothed && !warned_degenerate) {
      log_warn("psis_loo: degenerate importance weights for at least one "
               "observation; returning unsmoothed estimates there");
      warned_degenerate = true;
    }

    std::vector<double> num(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s)
      num[static_cast<std::size_t>(s)] = lw[static_cast<std::size_t>(s)] + loglik(s, i);
    out.pointwise[static_cast<std::size_t>(i)] = logsumexp(num) - logsumexp(lw);
  }

  out.elpd = 0;
  for (double p : out.pointwise) out.elpd += p;
  double var = 0, mean = out.elpd / n;
  for (double p : out.pointwise) var += (p - mean) * (p - mean);
  var = n > 1 ? var / (n - 1) : 0.0;
  out.elpd_se = std::sqrt(static_cast<double>(n) * var);
  int high = out.n_high_k();
  if (high > 0)
    log_warn("psis_loo: " + std::to_string(high) +
             " observations with pareto_k > 0.7; estimates may be unstable");
  return out;
}

int LooResult::n_high_k(double threshold) const {
  int c = 0;
  for (double k : pareto_k)
    if (k > threshold) ++c;
  return c;
}

std::string LooResult::to_json() const {
  json j;
  j["elpd"] = elpd;
  j["se"] = elpd_se;
  j["n_obs"] = pointwise.size();
  j["k_summary"] = {{"max", pareto_k.empty() ? 0.0
                            : *std::max_element(pareto_k.begin(), pareto_k.end())},
                    {"n_gt_0.7", n_high_k()},
                    {"n_smoothed", n_smoothed}};
  j["pointwise"] = pointwise;
  j["pareto_k"] = pareto_k;
  return j.dump(1);
}

LooResult LooResult::from_json(const std::string& text) {
  json j = json::parse(text);
  LooResult r;
  r.elpd = j.at("elpd").get<double>();
  r.elpd_se = j.at("se").get<double>();
  r.pointwise = j.at("pointwise").get<std::vector<double>>();
  r.pareto_k = j.at("pareto_k").get<std::vector<double>>();
  if (j.contains("k_summary"))
    r.n_smoothed = j["k_summary"].value("n_smoothed", 0);
  return r;
}

void LooResult::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << to_json() << "\n";
}

LooResult LooResult::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ElpdDiff elpd_diff(const LooResult& reference, const LooResult& candidate) {
  if (reference.pointwise.size() != candidate.pointwise.size())
    throw std::invalid_argument(
        "elpd_diff: observation sets differ (" +
        std::to_string(reference.pointwise.size()) + " vs " +
        std::to_string(candidate.pointwise.size()) + ")");
  const std::size_t n = reference.pointwise.size();
  ElpdDiff d;
  std::vector<double> paired(n);
  for (std::size_t i = 0; i < n; ++i)
    paired[i] = candidate.pointwise[i] - reference.pointwise[i];
  for (double x : paired) d.diff += x;
  double sdev = sd_of(paired);
  d.se_diff = std::sqrt(static_cast<double>(n)) * sdev;
  d.cri_low = d.diff - 2.0 * d.se_diff;
  d.cri_high = d.diff + 2.0 * d.se_diff;
  return d;
}

ModelSpec exclusion_experiment(const ModelSpec& spec,
                               const std::set<std::string>& exclude) {
  ModelSpec out = spec;
  out.excluded_predictors.clear();
  for (const auto& name : exclude)
    out.excluded_predictors.insert(response_index(name));
  return out;
}

ForecastResult one_step_forecast(const PosteriorDraws& draws,
                                 const PanelVarPosterior& posterior) {
  if (draws.total_draws() == 0)
    throw std::invalid_argument("one_step_forecast: no draws");
  // Predictive mean is linear in (mu, coefficients), so the posterior-mean
  // parameter vector gives it exactly.
  VectorXd mean_c = VectorXd::Zero(draws.dim());
  for (const auto& chain : draws.chains)
    mean_c += chain.colwise().sum().transpose();
  mean_c /= static_cast<double>(draws.total_draws());
  ParameterVector mean_theta = posterior.layout().unflatten(mean_c);

  const PanelDataset& panel = posterior.panel();
  const ModelSpec& spec = posterior.layout().spec();
  ForecastResult r;
  VectorXd sse_model = VectorXd::Zero(kResponses);
  VectorXd sse_naive = VectorXd::Zero(kResponses);
  int count = 0;
  for (int c = 0; c < panel.n_countries(); ++c) {
    const auto& pc = panel.countries[static_cast<std::size_t>(c)];
    for (int t = spec.lag; t < pc.weeks(); ++t) {
      ForecastRow row;
      row.country = pc.country;
      row.week = pc.week0 + t;
      row.actual = pc.Y.col(t);
      row.forecast = linear_predictor(mean_theta, panel, spec, t, c);
      row.naive = pc.Y.col(t - 1);
      sse_model.array() += (row.actual - row.forecast).array().square();
      sse_naive.array() += (row.actual - row.naive).array().square();
      ++count;
      r.rows.push_back(std::move(row));
    }
  }
  r.rmse_model = (sse_model / count).cwiseSqrt();
  r.rmse_naive = (sse_naive / count).cwiseSqrt();
  r.rmse_reduction =
      VectorXd::Ones(kResponses) - r.rmse_model.cwiseQuotient(r.rmse_naive);
  return r;
}

void ForecastResult::save_csv(const std::string& path) const {
  CsvWriter w(path);
  w.row({"country", "week", "variable", "actual", "forecast", "naive"});
  const auto& rn = response_names();
  for (const auto& row : rows)
    for (int i = 0; i < kResponses; ++i)
      w.row({row.country, format_iso_week(row.week), rn[static_cast<std::size_t>(i)],
             format_full(row.actual(i)), format_full(row.forecast(i)),
             format_full(row.naive(i))});
}

void ForecastResult::save_summary_csv(const std::string& path) const {
  CsvWriter w(path);
  w.row({"variable", "rmse_model", "rmse_naive", "rmse_reduction"});
  const auto& rn = response_names();
  for (int i = 0; i < kResponses; ++i)
    w.row({rn[static_cast<std::size_t>(i)], format_full(rmse_model(i)),
           format_full(rmse_naive(i)), format_full(rmse_reduction(i))});
}

}  // namespace panelvar
