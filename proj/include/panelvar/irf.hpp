#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "panelvar/model.hpp"
#include "panelvar/sampler.hpp"

namespace panelvar {

enum class IrfKind { Oirf, Girf };

std::string irf_kind_name(IrfKind kind);
IrfKind irf_kind_from_name(const std::string& name);

// Pointwise-summarized impulse responses: cell (h, response i, shock j).
struct IrfResult {
  IrfKind kind = IrfKind::Oirf;
  int horizon = 0;
  std::vector<Eigen::MatrixXd> mean;      // per horizon, 4x4
  std::vector<Eigen::MatrixXd> cri_low;   // 2.5% quantile
  std::vector<Eigen::MatrixXd> cri_high;  // 97.5% quantile

  void save_csv(const std::string& path) const;
};

// Lower Cholesky factor of an SPD matrix; throws on non-SPD input.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& sigma);

// Orthogonalised responses Phi^h * L, L = chol(Sigma); horizon 0 is exactly
// lower triangular in the identification ordering.
std::vector<Eigen::MatrixXd> oirf(const Eigen::MatrixXd& phi,
                                  const Eigen::MatrixXd& sigma, int horizon);

// Generalised responses: shock-j column at horizon h is
// Phi^h Sigma e_j / sqrt(sigma_jj).
std::vector<Eigen::MatrixXd> girf(const Eigen::MatrixXd& phi,
                                  const Eigen::MatrixXd& sigma, int horizon);

// Spectral radius of the lag companion matrix; < 1 certifies stationarity.
double stability_check(const Eigen::MatrixXd& phi);
double stability_check(const std::vector<Eigen::MatrixXd>& phi_lags);

// Per-draw IRFs summarized pointwise (mean and 95% interval per cell).
// Exogenous covariates are held at zero during propagation.
IrfResult irf_posterior(const PosteriorDraws& draws, const ParameterLayout& layout,
                        IrfKind kind, int horizon);

}  // namespace panelvar
