#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "panelvar/model.hpp"
#include "test_helpers.hpp"

using namespace panelvar;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PanelDataset zero_panel(int countries, int weeks) {
  PanelDataset p;
  ModelSpec spec;
  p.npi_ids = spec.npi_ids;
  for (int c = 0; c < countries; ++c) {
    PanelCountry pc;
    pc.country = "Z" + std::to_string(c);
    pc.week0 = 2600;
    pc.Y = MatrixXd::Zero(4, weeks);
    pc.x_level = MatrixXd::Zero(9, weeks);
    pc.x_change = MatrixXd::Zero(9, weeks);
    pc.variant = MatrixXd::Zero(4, weeks);
    pc.variant.row(0).setOnes();
    pc.vacc = VectorXd::Zero(weeks);
    p.countries.push_back(std::move(pc));
  }
  return p;
}

}  // namespace

TEST_CASE("constrain/unconstrain bijection round-trips") {
  ModelSpec spec;
  ParameterLayout layout(spec, {"AAA", "BBB", "CCC"});
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd u = testing::random_point(layout.unconstrained_dim(), 77 + rep, 1.0);
    ParameterVector theta = layout.unpack(u);
    VectorXd back = layout.pack(theta);
    REQUIRE((u - back).cwiseAbs().maxCoeff() < 1e-12);

    // Implied correlation matrix has unit diagonal and positive spectrum.
    MatrixXd omega = theta.corr_chol * theta.corr_chol.transpose();
    for (int i = 0; i < 4; ++i) CHECK(omega(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(omega);
    CHECK(es.eigenvalues().minCoeff() > 0);
  }
}

TEST_CASE("log posterior matches closed-form value on the zero panel") {
  const int C = 2, T = 8;
  PanelDataset panel = zero_panel(C, T);
  ModelSpec spec;
  PanelVarPosterior post(panel, spec);
  VectorXd u = VectorXd::Zero(post.dim());
  double lp = post.log_posterior(u);

  const double log2pi = std::log(2 * std::numbers::pi);
  const int n_obs = C * (T - 1);
  const int n_coef = 16 + 36 + 36 + 16 + 4;
  double expected = 0;
  expected += -n_obs * 2.0 * log2pi;          // likelihood at zero residuals
  expected += -n_coef * 0.5 * log2pi;         // coefficient priors at 0, tau=1
  expected += -4 * C * 0.5 * log2pi;          // intercept priors, sigma_mu=1
  expected += 5 * (std::log(2.0 / std::numbers::pi) - std::log(2.0) -
                   std::log(1.0 + 0.25));     // five half-Cauchy(0,2) at 1
  CHECK(lp == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("doubling tau shifts the prior by the normal-density identity") {
  PanelDataset panel = zero_panel(1, 8);
  ModelSpec spec;
  PanelVarPosterior post1(panel, spec);
  ModelSpec spec2 = spec;
  spec2.priors.tau = 2.0;
  PanelVarPosterior post2(panel, spec2);
  VectorXd u = VectorXd::Zero(post1.dim());
  const int n_coef = 16 + 36 + 36 + 16 + 4;
  CHECK(post2.log_posterior(u) - post1.log_posterior(u) ==
        doctest::Approx(-n_coef * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log posterior matches the independent naive oracle") {
  PanelDataset panel = testing::small_panel(2, 10);
  ModelSpec spec;
  PanelVarPosterior post(panel, spec);
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd u = testing::random_point(post.dim(), 900 + rep);
    double lib = post.log_posterior(u);
    double ora = oracle::naive_log_posterior(u, panel, spec);
    CHECK(std::abs(lib - ora) / std::max(1.0, std::abs(ora)) < 1e-8);
  }
}

TEST_CASE("oracle agreement holds under exclusions too") {
  PanelDataset panel = testing::small_panel(3, 12, 555);
  ModelSpec spec;
  spec.excluded_predictors = {0, 3};
  PanelVarPosterior post(panel, spec);
  for (int rep = 0; rep < 3; ++rep) {
    VectorXd u = testing::random_point(post.dim(), 4000 + rep);
    double lib = post.log_posterior(u);
    double ora = oracle::naive_log_posterior(u, panel, spec);
    CHECK(std::abs(lib - ora) / std::max(1.0, std::abs(ora)) < 1e-8);
  }
}

TEST_CASE("gradient matches central finite differences") {
  PanelDataset panel = testing::small_panel(2, 10);
  ModelSpec spec;
  PanelVarPosterior post(panel, spec);
  auto f = [&](const VectorXd& x) { return post.log_posterior(x); };
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd u = testing::random_point(post.dim(), 31 + rep);
    VectorXd g = post.grad_log_posterior(u);
    VectorXd fd = oracle::fd_gradient(f, u);
    double worst = 0;
    for (int i = 0; i < post.dim(); ++i) {
      double rel = std::abs(g(i) - fd(i)) /
                   std::max({1.0, std::abs(g(i)), std::abs(fd(i))});
      worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("coefficient-block gradient vanishes at the prior mode with zero data") {
  PanelDataset panel = zero_panel(2, 8);
  ModelSpec spec;
  PanelVarPosterior post(panel, spec);
  VectorXd g = post.grad_log_posterior(VectorXd::Zero(post.dim()));
  const int n_coef = post.layout().off_mu();
  for (int i = 0; i < n_coef; ++i) CHECK(g(i) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("intercept coordinates only see their own country") {
  PanelDataset a = testing::small_panel(2, 10, 42);
  PanelDataset b = a;
  b.countries[1].Y.array() += 0.5;  // perturb country 2 only
  ModelSpec spec;
  PanelVarPosterior pa(a, spec);
  PanelVarPosterior pb(b, spec);
  VectorXd u = testing::random_point(pa.dim(), 7);
  VectorXd ga = pa.grad_log_posterior(u);
  VectorXd gb = pb.grad_log_posterior(u);
  int mu0 = pa.layout().off_mu();
  for (int i = 0; i < 4; ++i) CHECK(ga(mu0 + i) == gb(mu0 + i));
  bool differs = false;
  for (int i = 4; i < 8; ++i)
    if (ga(mu0 + i) != gb(mu0 + i)) differs = true;
  CHECK(differs);
}

TEST_CASE("log posterior is invariant under country permutation") {
  PanelDataset panel = testing::small_panel(3, 12, 99);
  ModelSpec spec;
  PanelVarPosterior post(panel, spec);
  VectorXd u = testing::random_point(post.dim(), 13);

  PanelDataset permuted;
  permuted.npi_ids = panel.npi_ids;
  std::vector<int> order = {2, 0, 1};
  for (int c : order) permuted.countries.push_back(panel.countries[static_cast<std::size_t>(c)]);
  PanelVarPosterior post_p(permuted, spec);
  VectorXd up = u;
  int mu0 = post.layout().off_mu();
  for (std::size_t k = 0; k < order.size(); ++k)
    up.segment(mu0 + 4 * static_cast<int>(k), 4) =
        u.segment(mu0 + 4 * order[k], 4);
  CHECK(post.log_posterior(u) ==
        doctest::Approx(post_p.log_posterior(up)).epsilon(1e-12));
}

TEST_CASE("empty exclusion set reproduces the full model bit-for-bit") {
  PanelDataset panel = testing::small_panel(2, 10, 3);
  ModelSpec full;
  ModelSpec empty_excl;
  empty_excl.excluded_predictors = {};
  PanelVarPosterior pf(panel, full);
  PanelVarPosterior pe(panel, empty_excl);
  VectorXd u = testing::random_point(pf.dim(), 21);
  CHECK(pf.log_posterior(u) == pe.log_posterior(u));
}

TEST_CASE("linear predictor base cases") {
  PanelDataset panel = testing::small_panel(2, 10, 11);
  ModelSpec spec;
  ParameterVector theta = ParameterVector::zeros(spec, 2);
  theta.mu.col(0) << 0.1, -0.2, 0.3, -0.4;

  SUBCASE("only intercepts") {
    VectorXd m = linear_predictor(theta, panel, spec, 3, 0);
    // exogenous blocks are zero except the WT dummy, whose coefficient is 0
    CHECK((m - theta.mu.col(0)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identity dynamics return the lagged value") {
    theta.phi[0] = MatrixXd::Identity(4, 4);
    VectorXd m = linear_predictor(theta, panel, spec, 5, 1);
    VectorXd expected = theta.mu.col(1) + panel.countries[1].Y.col(4);
    CHECK((m - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("week at the panel start is an error") {
    CHECK_THROWS_AS(linear_predictor(theta, panel, spec, 0, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("exclusion zeroes cross columns but keeps the self lag") {
  PanelDataset panel = testing::small_panel(1, 10, 8);
  ModelSpec spec;
  spec.excluded_predictors = {response_index("log_r")};
  ParameterVector theta = ParameterVector::zeros(spec, 1);
  theta.phi[0].setConstant(0.5);

  MatrixXd a = coefficient_matrix(theta, spec);
  CHECK(a(0, 0) == 0.5);  // log_r keeps its own lag
  CHECK(a(1, 0) == 0.0);  // other equations lose the log_r column
  CHECK(a(2, 0) == 0.0);
  CHECK(a(3, 0) == 0.0);
  CHECK(a(1, 1) == 0.5);  // other columns untouched

  VectorXd y_lag = panel.countries[0].Y.col(4);
  VectorXd m = linear_predictor(theta, panel, spec, 5, 0);
  // The excluded variable's own equation keeps its full row.
  CHECK(m(0) == doctest::Approx(0.5 * y_lag.sum()).epsilon(1e-12));
  // The other equations lose the excluded column.
  double expect_other = 0.5 * (y_lag(1) + y_lag(2) + y_lag(3));
  CHECK(m(1) == doctest::Approx(expect_other).epsilon(1e-12));
}

TEST_CASE("dimension mismatch is rejected") {
  PanelDataset panel = testing::small_panel(1, 9, 2);
  ModelSpec spec;
  PanelVarPosterior post(panel, spec);
  CHECK_THROWS_AS(post.log_posterior(VectorXd::Zero(post.dim() + 1)),
                  std::invalid_argument);
}

TEST_CASE("model spec serialization round-trips") {
  ModelSpec s;
  s.excluded_predictors = {1, 2};
  s.priors.tau = 0.5;
  ModelSpec t = ModelSpec::from_json(s.to_json());
  CHECK(t.lag == s.lag);
  CHECK(t.npi_ids == s.npi_ids);
  CHECK(t.excluded_predictors == s.excluded_predictors);
  CHECK(t.priors.tau == doctest::Approx(0.5));
}
