#pragma once

#include <Eigen/Dense>
#include <set>
#include <string>
#include <vector>

#include "panelvar/dataset.hpp"
#include "panelvar/sampler.hpp"

namespace panelvar {

struct PriorConfig {
  double tau = 1.0;          // sd of the N(0, tau^2) coefficient priors
  double sigma_scale = 2.0;  // half-Cauchy scale for intercept/residual sds
  double lkj_xi = 2.0;       // LKJ concentration on the correlation matrix

  void validate() const;
};

struct ModelSpec {
  int lag = 1;  // p
  std::vector<std::string> npi_ids = default_npi_ids();
  bool include_levels = true;
  bool include_changes = true;
  std::set<int> excluded_predictors;  // response indices removed from all
                                      // equations except their own
  PriorConfig priors;

  int n_levels() const { return include_levels ? static_cast<int>(npi_ids.size()) : 0; }
  int n_changes() const { return include_changes ? static_cast<int>(npi_ids.size()) : 0; }
  void validate() const;

  // True when lagged response j enters equation i.
  bool phi_entry_active(int i, int j) const {
    return i == j || excluded_predictors.count(j) == 0;
  }

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
};

// Constrained-scale parameters of the model.
struct ParameterVector {
  std::vector<Eigen::MatrixXd> phi;  // lag matrices, each 4x4
  Eigen::MatrixXd lambda;            // 4 x n_levels
  Eigen::MatrixXd delta;             // 4 x n_changes
  Eigen::MatrixXd nu;                // 4 x 4 variant coefficients
  Eigen::VectorXd psi_vacc;          // 4 vaccination coefficients
  Eigen::MatrixXd mu;                // 4 x C country intercepts
  double sigma_mu = 1.0;             // intercept sd
  Eigen::VectorXd resid_scales;      // 4 residual sds (sigma_1..sigma_4)
  Eigen::MatrixXd corr_chol;         // 4x4 lower Cholesky factor of Omega,
                                     // unit-norm rows

  Eigen::MatrixXd sigma_chol() const {  // lower Cholesky factor of Sigma_u
    return resid_scales.asDiagonal() * corr_chol;
  }
  Eigen::MatrixXd sigma_u() const {
    Eigen::MatrixXd lc = sigma_chol();
    return lc * lc.transpose();
  }

  static ParameterVector zeros(const ModelSpec& spec, int n_countries);
};

// Index bookkeeping between the unconstrained sampling space, the
// ParameterVector struct, and the flat constrained vector used for draws.
// Positive scalars map through log; the correlation factor maps through the
// unit-row lower-triangular (tanh) construction.
class ParameterLayout {
 public:
  ParameterLayout(const ModelSpec& spec, std::vector<std::string> countries);

  int unconstrained_dim() const { return u_dim_; }
  int constrained_dim() const { return c_dim_; }
  const std::vector<std::string>& names() const { return names_; }
  int name_index(const std::string& name) const;
  const std::vector<std::string>& countries() const { return countries_; }
  const ModelSpec& spec() const { return spec_; }

  ParameterVector unpack(const Eigen::VectorXd& u) const;
  Eigen::VectorXd pack(const ParameterVector& theta) const;

  Eigen::VectorXd constrain(const Eigen::VectorXd& u) const;
  Eigen::VectorXd flatten(const ParameterVector& theta) const;
  ParameterVector unflatten(const Eigen::VectorXd& c) const;

  // Log absolute Jacobian determinant of the unconstraining transform,
  // included in the posterior density.
  double transform_log_jacobian(const Eigen::VectorXd& u) const;

  // Offsets into the unconstrained vector.
  int off_phi() const { return off_phi_; }
  int off_lambda() const { return off_lambda_; }
  int off_delta() const { return off_delta_; }
  int off_nu() const { return off_nu_; }
  int off_psi() const { return off_psi_; }
  int off_mu() const { return off_mu_; }
  int off_log_sigma_mu() const { return off_lsm_; }
  int off_log_scales() const { return off_ls_; }
  int off_corr() const { return off_corr_; }
  int n_phi_free() const { return n_phi_free_; }
  int n_countries() const { return static_cast<int>(countries_.size()); }

 private:
  ModelSpec spec_;
  std::vector<std::string> countries_;
  int u_dim_ = 0, c_dim_ = 0;
  int off_phi_ = 0, off_lambda_ = 0, off_delta_ = 0, off_nu_ = 0, off_psi_ = 0,
      off_mu_ = 0, off_lsm_ = 0, off_ls_ = 0, off_corr_ = 0;
  int n_phi_free_ = 0;
  std::vector<std::string> names_;
};

// Unit-row lower-triangular correlation factor construction shared by the
// layout and the posterior gradient.
Eigen::MatrixXd corr_chol_from_z(const Eigen::VectorXd& z_unconstrained, int n,
                                 double* log_jacobian = nullptr);
Eigen::VectorXd corr_z_from_chol(const Eigen::MatrixXd& corr_chol);

// Posterior of the partially pooled VAR: per-(week,country) multivariate
// normal likelihood plus the coefficient, intercept, scale and correlation
// priors, on the unconstrained scale (transform Jacobians included).
class PanelVarPosterior : public Target {
 public:
  PanelVarPosterior(const PanelDataset& panel, const ModelSpec& spec);

  int dim() const override { return layout_.unconstrained_dim(); }
  double logp_grad(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const override;
  int constrained_dim() const override { return layout_.constrained_dim(); }
  void constrain(const Eigen::VectorXd& u, Eigen::VectorXd& out) const override {
    out = layout_.constrain(u);
  }
  std::vector<std::string> param_names() const override { return layout_.names(); }

  // Op-level entry points; these throw on contract violations where the
  // sampler-facing logp_grad degrades to -inf.
  double log_posterior(const Eigen::VectorXd& u) const;
  Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& u) const;

  const ParameterLayout& layout() const { return layout_; }
  int n_observations() const { return n_obs_; }

  // Per-observation units in the fixed order: countries as in the panel,
  // weeks t = p..T_c-1 within each country.
  struct ObsRef {
    int country;
    int week;  // local index into the country's columns
  };
  const std::vector<ObsRef>& observations() const { return obs_; }

  // MVN log density of each observation under theta (used by the
  // evaluation module).
  Eigen::VectorXd pointwise_loglik(const ParameterVector& theta) const;

  // Conditional mean for observation (t, c) under theta.
  Eigen::VectorXd predict(const ParameterVector& theta, int country, int t) const;

  const PanelDataset& panel() const { return panel_; }

 private:
  struct Term {
    double value;
    const char* bad = nullptr;  // name of the first non-finite term
  };
  Term eval(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const;

  PanelDataset panel_;
  ModelSpec spec_;
  ParameterLayout layout_;
  // Per country: responses for t>=p and the regressor columns
  // [y_{t-1}..y_{t-p}; x_level; x_change; variant; vacc].
  std::vector<Eigen::MatrixXd> yobs_;
  std::vector<Eigen::MatrixXd> reg_;
  std::vector<ObsRef> obs_;
  int reg_rows_ = 0;
  int n_obs_ = 0;
};

// Mean of Eq-style linear predictor at (t, c); requires t >= lag.
Eigen::VectorXd linear_predictor(const ParameterVector& theta,
                                 const PanelDataset& panel,
                                 const ModelSpec& spec, int t, int country);

// Coefficient matrix [phi_1..phi_p | lambda | delta | nu | psi] with the
// exclusion mask applied.
Eigen::MatrixXd coefficient_matrix(const ParameterVector& theta,
                                   const ModelSpec& spec);

}  // namespace panelvar
