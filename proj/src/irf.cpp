#include "panelvar/irf.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "panelvar/csv.hpp"
#include "panelvar/stats.hpp"

namespace panelvar {

using Eigen::MatrixXd;

std::string irf_kind_name(IrfKind kind) {
  return kind == IrfKind::Oirf ? "oirf" : "girf";
}

IrfKind irf_kind_from_name(const std::string& name) {
  if (name == "oirf") return IrfKind::Oirf;
  if (name == "girf") return IrfKind::Girf;
  throw ConfigError("unknown IRF kind '" + name + "' (expected oirf|girf)");
}

MatrixXd cholesky_lower(const MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols())
    throw std::invalid_argument("cholesky_lower: matrix not square");
  if (!sigma.isApprox(sigma.transpose(), 1e-10))
    throw std::invalid_argument("cholesky_lower: matrix not symmetric");
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("cholesky_lower: matrix not positive definite");
  MatrixXd l = MatrixXd::Zero(sigma.rows(), sigma.cols());
  l.triangularView<Eigen::Lower>() = llt.matrixL();
  return l;
}

std::vector<MatrixXd> oirf(const MatrixXd& phi, const MatrixXd& sigma,
                           int horizon) {
  if (horizon < 0) throw std::invalid_argument("oirf: horizon must be >= 0");
  MatrixXd l = cholesky_lower(sigma);
  std::vector<MatrixXd> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  out.push_back(l);
  for (int h = 1; h <= horizon; ++h) out.push_back(phi * out.back());
  return out;
}

std::vector<MatrixXd> girf(const MatrixXd& phi, const MatrixXd& sigma,
                           int horizon) {
  if (horizon < 0) throw std::invalid_argument("girf: horizon must be >= 0");
  const Eigen::Index n = sigma.rows();
  Eigen::VectorXd inv_sd(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(sigma(j, j) > 0))
      throw std::invalid_argument("girf: Sigma has a non-positive diagonal entry");
    inv_sd(j) = 1.0 / std::sqrt(sigma(j, j));
  }
  std::vector<MatrixXd> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  out.push_back(sigma * inv_sd.asDiagonal());
  for (int h = 1; h <= horizon; ++h) out.push_back(phi * out.back());
  return out;
}

double stability_check(const MatrixXd& phi) {
  if (phi.rows() != phi.cols())
    throw std::invalid_argument("stability_check: matrix not square");
  Eigen::EigenSolver<MatrixXd> es(phi, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double stability_check(const std::vector<MatrixXd>& phi_lags) {
  if (phi_lags.empty())
    throw std::invalid_argument("stability_check: no lag matrices");
  const Eigen::Index n = phi_lags[0].rows();
  const Eigen::Index p = static_cast<Eigen::Index>(phi_lags.size());
  if (p == 1) return stability_check(phi_lags[0]);
  MatrixXd companion = MatrixXd::Zero(n * p, n * p);
  for (Eigen::Index k = 0; k < p; ++k)
    companion.block(0, k * n, n, n) = phi_lags[static_cast<std::size_t>(k)];
  companion.block(n, 0, n * (p - 1), n * (p - 1)) =
      MatrixXd::Identity(n * (p - 1), n * (p - 1));
  return stability_check(companion);
}

IrfResult irf_posterior(const PosteriorDraws& draws, const ParameterLayout& layout,
                        IrfKind kind, int horizon) {
  if (draws.total_draws() == 0) throw DiagnosticError("irf_posterior: no draws");
  const int cells = (horizon + 1) * kResponses * kResponses;
  std::vector<std::vector<double>> per_cell(static_cast<std::size_t>(cells));
  for (auto& v : per_cell) v.reserve(static_cast<std::size_t>(draws.total_draws()));

  for (const auto& chain : draws.chains) {
    for (Eigen::Index it = 0; it < chain.rows(); ++it) {
      ParameterVector theta = layout.unflatten(chain.row(it).transpose());
      std::vector<MatrixXd> resp =
          kind == IrfKind::Oirf
              ? oirf(theta.phi[0], theta.sigma_u(), horizon)
              : girf(theta.phi[0], theta.sigma_u(), horizon);
      int idx = 0;
      for (int h = 0; h <= horizon; ++h)
        for (int i = 0; i < kResponses; ++i)
          for (int j = 0; j < kResponses; ++j)
            per_cell[static_cast<std::size_t>(idx++)].push_back(resp[static_cast<std::size_t>(h)](i, j));
    }
  }

  IrfResult r;
  r.kind = kind;
  r.horizon = horizon;
  r.mean.assign(static_cast<std::size_t>(horizon) + 1,
                MatrixXd::Zero(kResponses, kResponses));
  r.cri_low = r.mean;
  r.cri_high = r.mean;
  int idx = 0;
  for (int h = 0; h <= horizon; ++h)
    for (int i = 0; i < kResponses; ++i)
      for (int j = 0; j < kResponses; ++j) {
        auto& v = per_cell[static_cast<std::size_t>(idx++)];
        r.mean[static_cast<std::size_t>(h)](i, j) = mean_of(v);
        std::sort(v.begin(), v.end());
        r.cri_low[static_cast<std::size_t>(h)](i, j) = quantile_sorted(v, 0.025);
        r.cri_high[static_cast<std::size_t>(h)](i, j) = quantile_sorted(v, 0.975);
      }
  return r;
}

void IrfResult::save_csv(const std::string& path) const {
  CsvWriter w(path);
  w.row({"kind", "horizon", "response", "shock", "mean", "cri_low", "cri_high"});
  const auto& rn = response_names();
  for (int h = 0; h <= horizon; ++h)
    for (int i = 0; i < kResponses; ++i)
      for (int j = 0; j < kResponses; ++j)
        w.row({irf_kind_name(kind), std::to_string(h), rn[static_cast<std::size_t>(i)],
               rn[static_cast<std::size_t>(j)],
               format_full(mean[static_cast<std::size_t>(h)](i, j)),
               format_full(cri_low[static_cast<std::size_t>(h)](i, j)),
               format_full(cri_high[static_cast<std::size_t>(h)](i, j))});
}

}  // namespace panelvar
