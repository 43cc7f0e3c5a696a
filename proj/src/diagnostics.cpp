#include "panelvar/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "panelvar/common.hpp"
#include "panelvar/csv.hpp"
#include "panelvar/stats.hpp"

namespace panelvar {

namespace {

// Split every chain into halves of equal length (middle draw dropped when
// odd), so within-chain trends register as between-chain disagreement.
std::vector<std::vector<double>> split_chains(
    const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    std::size_t half = c.size() / 2;
    if (half == 0) throw DiagnosticError("chain too short to split");
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

bool all_constant(const std::vector<std::vector<double>>& chains) {
  double first = chains.front().front();
  for (const auto& c : chains)
    for (double x : c)
      if (x != first) return false;
  return true;
}

// Average ranks with ties, mapped through the normal quantile function at
// (r - 3/8)/(S + 1/4).
std::vector<std::vector<double>> rank_normalize(
    const std::vector<std::vector<double>>& chains) {
  struct Entry {
    double value;
    std::size_t chain, pos;
  };
  std::vector<Entry> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i)
      all.push_back({chains[c][i], c, i});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.value < b.value; });
  const double S = static_cast<double>(all.size());
  std::vector<std::vector<double>> z(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c)
    z[c].resize(chains[c].size());
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].value == all[i].value) ++j;
    double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    double score = inv_normal_cdf((avg_rank - 0.375) / (S + 0.25));
    for (std::size_t k = i; k <= j; ++k) z[all[k].chain][all[k].pos] = score;
    i = j + 1;
  }
  return z;
}

// Classic potential scale reduction on already-prepared chains.
double basic_rhat(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m);
  double w = 0;
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    double s = sd_of(chains[c]);
    w += s * s;
  }
  w /= static_cast<double>(m);
  double b = sd_of(means);
  b = static_cast<double>(n) * b * b;
  if (w <= 0) return 1.0;
  double var_plus = (static_cast<double>(n - 1) / n) * w + b / static_cast<double>(n);
  return std::sqrt(var_plus / w);
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains.front().empty())
    throw DiagnosticError("split_rhat: empty input");
  auto split = split_chains(chains);
  if (split.size() < 2) throw DiagnosticError("split_rhat: need >= 2 half-chains");
  for (const auto& c : split)
    if (c.size() < 4)
      throw DiagnosticError("split_rhat: need at least 4 draws per half-chain");
  if (all_constant(split)) return 1.0;
  return basic_rhat(rank_normalize(split));
}

double relative_ess(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw DiagnosticError("relative_ess: empty input");
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  if (total < 8) throw DiagnosticError("relative_ess: need at least 8 draws");
  if (all_constant(chains)) return 0.0;

  auto split = split_chains(chains);
  const std::size_t m = split.size();
  const std::size_t n = split.front().size();
  for (const auto& c : split)
    if (c.size() != n)
      throw DiagnosticError("relative_ess: chains of unequal length");

  // Per-chain autocovariances (biased, 1/n normalization).
  std::vector<std::vector<double>> acov(m);
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(split[c]);
    acov[c].resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0;
      for (std::size_t i = 0; i + t < n; ++i)
        s += (split[c][i] - means[c]) * (split[c][i + t] - means[c]);
      acov[c][t] = s / static_cast<double>(n);
    }
    vars[c] = acov[c][0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  double w = mean_of(vars);
  double b = m > 1 ? sd_of(means) : 0.0;
  b = static_cast<double>(n) * b * b;
  double var_plus =
      (static_cast<double>(n - 1) / n) * w + (m > 1 ? b / static_cast<double>(n) : 0.0);
  if (var_plus <= 0) return 0.0;

  auto rho = [&](std::size_t t) {
    double mean_acov = 0;
    for (std::size_t c = 0; c < m; ++c) mean_acov += acov[c][t];
    mean_acov /= static_cast<double>(m);
    return 1.0 - (w - mean_acov) / var_plus;
  };

  // Geyer initial positive + monotone sequence on paired autocorrelations.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0);  // cap antithetic chains at full efficiency
  return 1.0 / tau;
}

std::vector<ParamSummary> summarize(const PosteriorDraws& draws) {
  if (draws.n_chains() == 0 || draws.iterations() == 0)
    throw DiagnosticError("summarize: no draws");
  std::vector<ParamSummary> out;
  out.reserve(draws.names.size());
  for (int k = 0; k < draws.dim(); ++k) {
    ParamSummary s;
    s.name = draws.names[static_cast<std::size_t>(k)];
    std::vector<double> pooled = draws.parameter_draws(k);
    s.mean = mean_of(pooled);
    s.sd = sd_of(pooled);
    std::sort(pooled.begin(), pooled.end());
    s.cri_low = quantile_sorted(pooled, 0.025);
    s.cri_high = quantile_sorted(pooled, 0.975);
    auto per_chain = draws.parameter_chains(k);
    try {
      s.rhat = split_rhat(per_chain);
      s.rel_ess = relative_ess(per_chain);
    } catch (const DiagnosticError&) {
      s.rhat = std::numeric_limits<double>::quiet_NaN();
      s.rel_ess = std::numeric_limits<double>::quiet_NaN();
    }
    if (!(s.cri_low <= s.mean && s.mean <= s.cri_high))
      log_warn("summary: mean of " + s.name + " outside its 95% interval");
    out.push_back(std::move(s));
  }
  return out;
}

void save_summary_csv(const std::vector<ParamSummary>& summaries,
                      const std::string& path) {
  CsvWriter w(path);
  w.row({"name", "mean", "sd", "cri_low", "cri_high", "rhat", "rel_ess"});
  for (const auto& s : summaries)
    w.row({s.name, format_full(s.mean), format_full(s.sd),
           format_full(s.cri_low), format_full(s.cri_high), format_full(s.rhat),
           format_full(s.rel_ess)});
}

std::vector<ParamSummary> load_summary_csv(const std::string& path) {
  CsvReader r(path);
  std::size_t c_name = r.col("name"), c_mean = r.col("mean"),
              c_sd = r.col("sd"), c_lo = r.col("cri_low"),
              c_hi = r.col("cri_high"), c_rhat = r.col("rhat"),
              c_ess = r.col("rel_ess");
  std::vector<ParamSummary> out;
  std::vector<std::string> f;
  while (r.next(f)) {
    ParamSummary s;
    s.name = f[c_name];
    s.mean = std::stod(f[c_mean]);
    s.sd = std::stod(f[c_sd]);
    s.cri_low = std::stod(f[c_lo]);
    s.cri_high = std::stod(f[c_hi]);
    s.rhat = std::stod(f[c_rhat]);
    s.rel_ess = std::stod(f[c_ess]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace panelvar
