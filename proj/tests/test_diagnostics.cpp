#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "panelvar/diagnostics.hpp"
#include "panelvar/stats.hpp"
#include "test_helpers.hpp"

using namespace panelvar;

namespace {

std::vector<double> gaussian_chain(int n, std::uint64_t seed, double mean = 0,
                                   double sd = 1) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = d(gen);
  return v;
}

std::vector<double> ar1_chain(int n, double coef, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0, 1);
  std::vector<double> v(static_cast<std::size_t>(n));
  double x = d(gen) / std::sqrt(1 - coef * coef);
  for (auto& out : v) {
    x = coef * x + d(gen);
    out = x;
  }
  return v;
}

// Independent reference: rank-normalize with explicit loops, then the
// classic split R-hat formula written out directly.
double reference_split_rhat(std::vector<std::vector<double>> chains) {
  std::vector<std::vector<double>> halves;
  for (auto& c : chains) {
    std::size_t h = c.size() / 2;
    halves.push_back({c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h)});
    halves.push_back({c.end() - static_cast<std::ptrdiff_t>(h), c.end()});
  }
  std::vector<double> pooled;
  for (auto& c : halves) pooled.insert(pooled.end(), c.begin(), c.end());
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  auto rank_of = [&](double x) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), x);
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), x);
    double first = static_cast<double>(lo - sorted.begin()) + 1;
    double last = static_cast<double>(hi - sorted.begin());
    return (first + last) / 2.0;
  };
  double s_total = static_cast<double>(pooled.size());
  for (auto& c : halves)
    for (auto& x : c)
      x = inv_normal_cdf((rank_of(x) - 0.375) / (s_total + 0.25));

  double m = static_cast<double>(halves.size());
  double n = static_cast<double>(halves[0].size());
  std::vector<double> means;
  double w = 0;
  for (auto& c : halves) {
    double mu = mean_of(c);
    means.push_back(mu);
    double s2 = 0;
    for (double x : c) s2 += (x - mu) * (x - mu);
    w += s2 / (n - 1);
  }
  w /= m;
  double grand = mean_of(means);
  double b = 0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1);
  double var_plus = (n - 1) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

}  // namespace

TEST_CASE("split R-hat on well-mixed and disjoint chains") {
  SUBCASE("two chains from the same Gaussian sit in [1, 1.01]") {
    std::vector<std::vector<double>> chains = {gaussian_chain(2000, 1),
                                               gaussian_chain(2000, 2)};
    double r = split_rhat(chains);
    CHECK(r >= 0.999);
    CHECK(r <= 1.01);
    CHECK(r == doctest::Approx(reference_split_rhat(chains)).epsilon(1e-12));
  }
  SUBCASE("chains with means 0 and 10 blow past 1.1") {
    std::vector<std::vector<double>> chains = {gaussian_chain(500, 3, 0.0),
                                               gaussian_chain(500, 4, 10.0)};
    CHECK(split_rhat(chains) > 1.1);
  }
  SUBCASE("identical draws give exactly 1") {
    std::vector<std::vector<double>> chains = {{2, 2, 2, 2, 2, 2, 2, 2},
                                               {2, 2, 2, 2, 2, 2, 2, 2}};
    CHECK(split_rhat(chains) == 1.0);
  }
  SUBCASE("a within-chain trend is caught by splitting") {
    std::vector<double> trending;
    for (int i = 0; i < 1000; ++i) trending.push_back(i * 0.01);
    CHECK(split_rhat({trending}) > 1.1);
  }
  SUBCASE("invariant under a common affine transform") {
    std::vector<std::vector<double>> chains = {gaussian_chain(600, 5),
                                               gaussian_chain(600, 6)};
    double base = split_rhat(chains);
    for (auto& c : chains)
      for (auto& x : c) x = 3.5 * x - 11.0;
    CHECK(split_rhat(chains) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("relative ESS") {
  SUBCASE("independent draws are near full efficiency") {
    std::vector<std::vector<double>> chains;
    for (int c = 0; c < 4; ++c) chains.push_back(gaussian_chain(1000, 10 + static_cast<unsigned>(c)));
    CHECK(std::abs(relative_ess(chains) - 1.0) < 0.15);
  }
  SUBCASE("AR(1) with coefficient 0.9 lands near the analytic value") {
    std::vector<std::vector<double>> chains;
    for (int c = 0; c < 4; ++c) chains.push_back(ar1_chain(2000, 0.9, 20 + static_cast<unsigned>(c)));
    double r = relative_ess(chains);
    double analytic = (1 - 0.9) / (1 + 0.9);
    CHECK(r > analytic / 2);
    CHECK(r < analytic * 2);
  }
  SUBCASE("constant draws give 0 by convention") {
    std::vector<std::vector<double>> chains = {{1, 1, 1, 1, 1, 1, 1, 1}};
    CHECK(relative_ess(chains) == 0.0);
  }
  SUBCASE("fewer than 8 draws is an error") {
    std::vector<std::vector<double>> chains = {{1, 2, 3, 4, 5, 6, 7}};
    CHECK_THROWS_AS(relative_ess(chains), DiagnosticError);
  }
  SUBCASE("bounded by full efficiency and monotone in correlation") {
    double prev = 2.0;
    for (double coef : {0.0, 0.5, 0.8}) {
      std::vector<std::vector<double>> chains;
      for (int c = 0; c < 4; ++c)
        chains.push_back(ar1_chain(4000, coef, 400 + static_cast<unsigned>(c)));
      double r = relative_ess(chains);
      CHECK(r > 0.0);
      CHECK(r <= 1.0);
      CHECK(r < prev);
      prev = r;
    }
  }
}

TEST_CASE("summarize") {
  SUBCASE("degenerate draws collapse") {
    PosteriorDraws d;
    d.names = {"a"};
    d.chains = {Eigen::MatrixXd::Constant(50, 1, 7.5),
                Eigen::MatrixXd::Constant(50, 1, 7.5)};
    d.stats.resize(2);
    auto s = summarize(d);
    REQUIRE(s.size() == 1);
    CHECK(s[0].mean == 7.5);
    CHECK(s[0].sd == 0.0);
    CHECK(s[0].cri_low == 7.5);
    CHECK(s[0].cri_high == 7.5);
    CHECK(s[0].rhat == 1.0);
    CHECK(s[0].rel_ess == 0.0);
  }
  SUBCASE("standard normal quantiles") {
    std::mt19937_64 gen(123);
    std::normal_distribution<double> n(0, 1);
    PosteriorDraws d;
    d.names = {"x"};
    Eigen::MatrixXd m(10000, 1);
    for (int i = 0; i < 10000; ++i) m(i, 0) = n(gen);
    d.chains = {m};
    d.stats.resize(1);
    auto s = summarize(d);
    CHECK(std::abs(s[0].cri_low + 1.96) < 0.08);
    CHECK(std::abs(s[0].cri_high - 1.96) < 0.08);
  }
  SUBCASE("names are preserved across parameters") {
    PosteriorDraws d;
    d.names = {"p1", "p2"};
    Eigen::MatrixXd m(100, 2);
    std::mt19937_64 gen(9);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 100; ++i) {
      m(i, 0) = n(gen);
      m(i, 1) = 5 + n(gen);
    }
    d.chains = {m};
    d.stats.resize(1);
    auto s = summarize(d);
    REQUIRE(s.size() == 2);
    CHECK(s[0].name == "p1");
    CHECK(s[1].name == "p2");
    CHECK(s[1].mean == doctest::Approx(5.0).epsilon(0.1));
  }
  SUBCASE("summary CSV round-trips") {
    testing::TempDir dir;
    PosteriorDraws d;
    d.names = {"alpha", "beta"};
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(64, 2);
    d.chains = {m};
    d.stats.resize(1);
    auto s = summarize(d);
    save_summary_csv(s, dir.file("summary.csv"));
    auto back = load_summary_csv(dir.file("summary.csv"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "alpha");
    CHECK(back[0].mean == s[0].mean);
    CHECK(back[1].cri_high == s[1].cri_high);
  }
}
