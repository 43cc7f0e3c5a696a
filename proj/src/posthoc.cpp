#include "panelvar/posthoc.hpp"

#include <algorithm>
#include <cmath>

#include "panelvar/csv.hpp"
#include "panelvar/rng.hpp"
#include "panelvar/stats.hpp"

namespace panelvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void summarize_correlation(CorrelationPosterior& c) {
  c.mean = mean_of(c.draws);
  std::vector<double> sorted = c.draws;
  std::sort(sorted.begin(), sorted.end());
  c.cri_low = quantile_sorted(sorted, 0.025);
  c.cri_high = quantile_sorted(sorted, 0.975);
  for (double v : c.draws)
    if (!(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9))
      throw DiagnosticError("correlation draw outside [-1,1]");
}

// Column indices of the intercepts of one response, panel country order.
std::vector<int> intercept_indices(const ParameterLayout& layout,
                                   const std::string& var) {
  std::vector<int> idx;
  for (const auto& country : layout.countries()) {
    std::string name = "intercept." + var + "." + country;
    idx.push_back(layout.name_index(name));
  }
  return idx;
}

}  // namespace

bool CorrelationPosterior::significant_80() const {
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  double lo = quantile_sorted(sorted, 0.10);
  double hi = quantile_sorted(sorted, 0.90);
  return lo > 0 || hi < 0;
}

CorrelationPosterior intercept_correlation(const PosteriorDraws& draws,
                                           const ParameterLayout& layout,
                                           const std::string& var_a,
                                           const std::string& var_b) {
  if (layout.n_countries() < 3)
    throw DiagnosticError("intercept_correlation: need at least 3 countries");
  std::vector<int> ia = intercept_indices(layout, var_a);
  std::vector<int> ib = intercept_indices(layout, var_b);
  CorrelationPosterior out;
  out.label = var_a + " vs " + var_b;
  out.draws.reserve(static_cast<std::size_t>(draws.total_draws()));
  std::vector<double> a(ia.size()), b(ib.size());
  for (const auto& chain : draws.chains)
    for (Eigen::Index r = 0; r < chain.rows(); ++r) {
      for (std::size_t c = 0; c < ia.size(); ++c) {
        a[c] = chain(r, ia[c]);
        b[c] = chain(r, ib[c]);
      }
      out.draws.push_back(pearson(a, b));
    }
  summarize_correlation(out);
  return out;
}

CorrelationPosterior characteristic_correlation(
    const PosteriorDraws& draws, const ParameterLayout& layout,
    const std::string& var, const CountryCharacteristics& chars,
    const std::string& feature) {
  auto fit = std::find(chars.features.begin(), chars.features.end(), feature);
  if (fit == chars.features.end())
    throw DataError("characteristic '" + feature + "' not found");
  int fcol = static_cast<int>(fit - chars.features.begin());

  // Countries present in both the panel and the feature table.
  std::vector<int> param_idx;
  std::vector<double> fvals;
  for (std::size_t ci = 0; ci < layout.countries().size(); ++ci) {
    const std::string& country = layout.countries()[ci];
    auto cit = std::find(chars.countries.begin(), chars.countries.end(), country);
    if (cit == chars.countries.end()) continue;
    auto v = chars.value(static_cast<int>(cit - chars.countries.begin()), fcol);
    if (!v) continue;
    param_idx.push_back(
        layout.name_index("intercept." + var + "." + country));
    fvals.push_back(*v);
  }
  if (param_idx.size() < 3)
    throw DiagnosticError("characteristic_correlation: fewer than 3 countries "
                          "with data for '" + feature + "'");
  if (sd_of(fvals) == 0)
    throw DataError("characteristic_correlation: feature '" + feature +
                    "' is constant");

  CorrelationPosterior out;
  out.label = var + " vs " + feature;
  std::vector<double> mu(param_idx.size());
  for (const auto& chain : draws.chains)
    for (Eigen::Index r = 0; r < chain.rows(); ++r) {
      for (std::size_t c = 0; c < param_idx.size(); ++c)
        mu[c] = chain(r, param_idx[c]);
      out.draws.push_back(pearson(mu, fvals));
    }
  summarize_correlation(out);
  return out;
}

PcaResult pca(const CountryCharacteristics& chars) {
  const int n = static_cast<int>(chars.countries.size());
  const int f = static_cast<int>(chars.features.size());
  if (n < 2 || f < 2)
    throw DataError("pca: need at least 2 countries and 2 features");

  // Column-mean imputation of missing entries, then standardization.
  MatrixXd x(n, f);
  int imputed = 0;
  for (int k = 0; k < f; ++k) {
    double sum = 0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (chars.present(i, k)) {
        sum += chars.values(i, k);
        ++cnt;
      }
    if (cnt == 0)
      throw DataError("pca: feature '" + chars.features[static_cast<std::size_t>(k)] +
                      "' has no data");
    double m = sum / cnt;
    for (int i = 0; i < n; ++i) {
      x(i, k) = chars.present(i, k) ? chars.values(i, k) : m;
      if (!chars.present(i, k)) ++imputed;
    }
  }
  if (imputed > 0)
    log_warn("pca: imputed " + std::to_string(imputed) +
             " missing feature entries at column means");

  for (int k = 0; k < f; ++k) {
    double m = x.col(k).mean();
    x.col(k).array() -= m;
    double sd = std::sqrt(x.col(k).squaredNorm() / (n - 1));
    if (sd == 0)
      throw DataError("pca: feature '" + chars.features[static_cast<std::size_t>(k)] +
                      "' is constant");
    x.col(k) /= sd;
  }

  MatrixXd corr = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(corr);
  if (es.info() != Eigen::Success) throw DiagnosticError("pca: eigensolver failed");

  PcaResult r;
  r.features = chars.features;
  r.countries = chars.countries;
  r.eigenvalues.resize(f);
  r.loadings.resize(f, f);
  // SelfAdjointEigenSolver returns ascending order; report descending.
  for (int k = 0; k < f; ++k) {
    r.eigenvalues(k) = es.eigenvalues()(f - 1 - k);
    r.loadings.col(k) = es.eigenvectors().col(f - 1 - k);
  }
  r.scores = x * r.loadings;
  return r;
}

void PcaResult::save_loadings_csv(const std::string& path,
                                  int max_components) const {
  CsvWriter w(path);
  int nc = std::min<int>(max_components, static_cast<int>(eigenvalues.size()));
  std::vector<std::string> header = {"feature"};
  for (int k = 0; k < nc; ++k) header.push_back("dim" + std::to_string(k + 1));
  w.row(header);
  std::vector<std::string> ev = {"(eigenvalue)"};
  for (int k = 0; k < nc; ++k) ev.push_back(format_full(eigenvalues(k)));
  w.row(ev);
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::vector<std::string> row = {features[i]};
    for (int k = 0; k < nc; ++k)
      row.push_back(format_full(loadings(static_cast<Eigen::Index>(i), k)));
    w.row(row);
  }
}

KmeansResult kmeans(const MatrixXd& points, int k, std::uint64_t seed,
                    int restarts) {
  const int n = static_cast<int>(points.rows());
  if (k < 1 || k > n)
    throw std::invalid_argument("kmeans: need 1 <= k <= n points");
  if (restarts < 1) restarts = 1;

  KmeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < restarts; ++attempt) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(attempt));
    // Distinct random points as initial centers.
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < k) {
      int c = static_cast<int>(rng.integer(static_cast<std::uint64_t>(n)));
      if (std::find(chosen.begin(), chosen.end(), c) == chosen.end())
        chosen.push_back(c);
    }
    MatrixXd centers(k, points.cols());
    for (int j = 0; j < k; ++j) centers.row(j) = points.row(chosen[static_cast<std::size_t>(j)]);

    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    double prev_wcss = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 200; ++iter) {
      bool changed = false;
      double wcss = 0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = (points.row(i) - centers.row(0)).squaredNorm();
        for (int j = 1; j < k; ++j) {
          double d = (points.row(i) - centers.row(j)).squaredNorm();
          if (d < bestd) {
            bestd = d;
            arg = j;
          }
        }
        if (assign[static_cast<std::size_t>(i)] != arg) changed = true;
        assign[static_cast<std::size_t>(i)] = arg;
        wcss += bestd;
      }
      if (wcss > prev_wcss + 1e-9)
        throw DiagnosticError("kmeans: within-cluster sum of squares increased");
      prev_wcss = wcss;
      if (!changed && iter > 0) break;

      MatrixXd sums = MatrixXd::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int i = 0; i < n; ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      for (int j = 0; j < k; ++j) {
        if (counts[static_cast<std::size_t>(j)] == 0) {
          // Reseed an emptied cluster at the point farthest from its center.
          int far = 0;
          double fard = -1;
          for (int i = 0; i < n; ++i) {
            double d = (points.row(i) -
                        centers.row(assign[static_cast<std::size_t>(i)]))
                           .squaredNorm();
            if (d > fard) {
              fard = d;
              far = i;
            }
          }
          centers.row(j) = points.row(far);
          prev_wcss = std::numeric_limits<double>::infinity();
        } else {
          centers.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
        }
      }
    }
    double wcss = 0;
    for (int i = 0; i < n; ++i)
      wcss += (points.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    if (wcss < best.wcss) {
      best.wcss = wcss;
      best.centers = centers;
      best.assignments = assign;
    }
  }
  return best;
}

std::vector<LocoRefit> loco_sensitivity(const PanelDataset& panel,
                                        const ModelSpec& spec,
                                        const SamplerConfig& sampler_config) {
  if (panel.n_countries() < 3)
    throw DataError("loco_sensitivity: need at least 3 countries");
  std::vector<LocoRefit> out;
  for (int drop = 0; drop < panel.n_countries(); ++drop) {
    PanelDataset reduced;
    reduced.npi_ids = panel.npi_ids;
    for (int c = 0; c < panel.n_countries(); ++c)
      if (c != drop)
        reduced.countries.push_back(panel.countries[static_cast<std::size_t>(c)]);
    LocoRefit refit;
    refit.excluded_country = panel.countries[static_cast<std::size_t>(drop)].country;
    try {
      PanelVarPosterior posterior(reduced, spec);
      PosteriorDraws draws = run_sampling(posterior, sampler_config);
      for (const auto& s : summarize(draws))
        if (s.name.rfind("phi.", 0) == 0) refit.phi_summaries.push_back(s);
    } catch (const std::exception& e) {
      throw SamplerError("leave-one-out refit excluding " +
                         refit.excluded_country + " failed: " + e.what());
    }
    out.push_back(std::move(refit));
  }
  return out;
}

void save_correlations_csv(const std::vector<CorrelationPosterior>& rows,
                           const std::string& path) {
  CsvWriter w(path);
  w.row({"label", "mean", "cri_low", "cri_high", "sig95", "sig80"});
  for (const auto& c : rows)
    w.row({c.label, format_full(c.mean), format_full(c.cri_low),
           format_full(c.cri_high), c.significant_95() ? "1" : "0",
           c.significant_80() ? "1" : "0"});
}

}  // namespace panelvar
