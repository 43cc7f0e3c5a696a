#pragma once

// Independent, loop-based reference implementations used only by tests.
// These share no computational code with the library paths they check
// (densities from the textbook formulas, Jacobians by finite differences).

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>

#include "panelvar/dataset.hpp"
#include "panelvar/model.hpp"

namespace panelvar::oracle {

inline double normal_lpdf(double x, double mean, double sd) {
  double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
}

inline double half_cauchy_lpdf(double x, double scale) {
  return std::log(2.0) - std::log(std::numbers::pi) - std::log(scale) -
         std::log(1.0 + (x / scale) * (x / scale));
}

inline Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& u, double h = 1e-5) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Eigen::VectorXd up = u, dn = u;
    up(i) += h;
    dn(i) -= h;
    g(i) = (f(up) - f(dn)) / (2 * h);
  }
  return g;
}

// log |det| of the correlation-factor map z -> strictly-lower entries of L,
// by a finite-difference Jacobian.
inline double corr_map_log_jacobian(const Eigen::VectorXd& z, int n) {
  const int m = n * (n - 1) / 2;
  auto lower_entries = [&](const Eigen::VectorXd& zz) {
    Eigen::MatrixXd l = corr_chol_from_z(zz, n);
    Eigen::VectorXd out(m);
    int idx = 0;
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < i; ++j) out(idx++) = l(i, j);
    return out;
  };
  Eigen::MatrixXd jac(m, m);
  const double h = 1e-6;
  for (int k = 0; k < m; ++k) {
    Eigen::VectorXd up = z, dn = z;
    up(k) += h;
    dn(k) -= h;
    jac.col(k) = (lower_entries(up) - lower_entries(dn)) / (2 * h);
  }
  return std::log(std::abs(jac.determinant()));
}

// Naive reimplementation of the unnormalized posterior: explicit
// Sigma inverse/determinant, per-observation loops, textbook priors.
inline double naive_log_posterior(const Eigen::VectorXd& u,
                                  const PanelDataset& panel,
                                  const ModelSpec& spec) {
  std::vector<std::string> countries;
  for (const auto& c : panel.countries) countries.push_back(c.country);
  ParameterLayout layout(spec, countries);
  ParameterVector th = layout.unpack(u);
  const int N = kResponses;
  const int C = panel.n_countries();

  Eigen::MatrixXd sigma = th.sigma_u();
  Eigen::MatrixXd sinv = sigma.inverse();
  double logdet = std::log(sigma.determinant());

  double lp = 0;
  for (int c = 0; c < C; ++c) {
    const auto& pc = panel.countries[static_cast<std::size_t>(c)];
    for (int t = spec.lag; t < pc.weeks(); ++t) {
      Eigen::VectorXd m = th.mu.col(c);
      for (int k = 1; k <= spec.lag; ++k)
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j)
            if (spec.phi_entry_active(i, j))
              m(i) += th.phi[static_cast<std::size_t>(k - 1)](i, j) * pc.Y(j, t - k);
      for (int i = 0; i < N; ++i) {
        for (int k = 0; k < spec.n_levels(); ++k)
          m(i) += th.lambda(i, k) * pc.x_level(k, t);
        for (int k = 0; k < spec.n_changes(); ++k)
          m(i) += th.delta(i, k) * pc.x_change(k, t);
        for (int k = 0; k < 4; ++k) m(i) += th.nu(i, k) * pc.variant(k, t);
        m(i) += th.psi_vacc(i) * pc.vacc(t);
      }
      Eigen::VectorXd r = pc.Y.col(t) - m;
      lp += -0.5 * r.dot(sinv * r) - 0.5 * logdet -
            0.5 * N * std::log(2 * std::numbers::pi);
    }
  }

  for (int k = 0; k < spec.lag; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        if (spec.phi_entry_active(i, j))
          lp += normal_lpdf(th.phi[static_cast<std::size_t>(k)](i, j), 0, spec.priors.tau);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < spec.n_levels(); ++k)
      lp += normal_lpdf(th.lambda(i, k), 0, spec.priors.tau);
    for (int k = 0; k < spec.n_changes(); ++k)
      lp += normal_lpdf(th.delta(i, k), 0, spec.priors.tau);
    for (int k = 0; k < 4; ++k) lp += normal_lpdf(th.nu(i, k), 0, spec.priors.tau);
    lp += normal_lpdf(th.psi_vacc(i), 0, spec.priors.tau);
  }
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < N; ++i) lp += normal_lpdf(th.mu(i, c), 0, th.sigma_mu);

  lp += half_cauchy_lpdf(th.sigma_mu, spec.priors.sigma_scale);
  for (int i = 0; i < N; ++i)
    lp += half_cauchy_lpdf(th.resid_scales(i), spec.priors.sigma_scale);

  for (int k = 2; k <= N; ++k)
    lp += (N - k + 2 * spec.priors.lkj_xi - 2) * std::log(th.corr_chol(k - 1, k - 1));

  // Transform Jacobians: exp for the scales, finite differences for the
  // correlation-factor map.
  lp += std::log(th.sigma_mu);
  for (int i = 0; i < N; ++i) lp += std::log(th.resid_scales(i));
  lp += corr_map_log_jacobian(u.segment(layout.off_corr(), N * (N - 1) / 2), N);
  return lp;
}

}  // namespace panelvar::oracle
