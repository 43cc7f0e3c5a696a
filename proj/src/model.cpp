#include "panelvar/model.hpp"

#include <cmath>
#include <numbers>

#include "json.hpp"

namespace panelvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// log(1 + e^a) without overflow.
double softplus(double a) {
  return a > 35.0 ? a : std::log1p(std::exp(a));
}

double sigmoid(double a) {
  return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

// Half-Cauchy(0, scale) log density of x = exp(u), plus the exp-transform
// Jacobian. Returns d/du into *grad_u when non-null.
double half_cauchy_log(double u, double scale, double* grad_u) {
  double a = 2.0 * (u - std::log(scale));
  double value = std::log(2.0 / std::numbers::pi) - std::log(scale) -
                 softplus(a) + u;
  if (grad_u) *grad_u = 1.0 - 2.0 * sigmoid(a);
  return value;
}

}  // namespace

void PriorConfig::validate() const {
  if (!(tau > 0) || !(sigma_scale > 0) || !(lkj_xi >= 1))
    throw ConfigError("priors: need tau > 0, sigma_scale > 0, lkj_xi >= 1");
}

void ModelSpec::validate() const {
  if (lag < 1) throw ConfigError("model: lag must be >= 1");
  if (npi_ids.empty() && (include_levels || include_changes))
    throw ConfigError("model: NPI list empty but level/change columns requested");
  for (const auto& id : npi_ids) npi_info(id);  // throws on unknown id
  for (int j : excluded_predictors)
    if (j < 0 || j >= kResponses)
      throw ConfigError("model: excluded predictor index out of range");
  priors.validate();
}

std::string ModelSpec::to_json() const {
  json j;
  j["lag"] = lag;
  j["npi_ids"] = npi_ids;
  j["include_levels"] = include_levels;
  j["include_changes"] = include_changes;
  std::vector<std::string> excl;
  for (int e : excluded_predictors) excl.push_back(response_names()[e]);
  j["excluded_predictors"] = excl;
  j["priors"] = {{"tau", priors.tau},
                 {"sigma_scale", priors.sigma_scale},
                 {"lkj_xi", priors.lkj_xi}};
  return j.dump(1);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelSpec s;
  s.lag = j.value("lag", 1);
  if (j.contains("npi_ids")) s.npi_ids = j["npi_ids"].get<std::vector<std::string>>();
  s.include_levels = j.value("include_levels", true);
  s.include_changes = j.value("include_changes", true);
  if (j.contains("excluded_predictors"))
    for (const auto& name : j["excluded_predictors"])
      s.excluded_predictors.insert(response_index(name.get<std::string>()));
  if (j.contains("priors")) {
    const auto& p = j["priors"];
    s.priors.tau = p.value("tau", 1.0);
    s.priors.sigma_scale = p.value("sigma_scale", 2.0);
    s.priors.lkj_xi = p.value("lkj_xi", 2.0);
  }
  s.validate();
  return s;
}

ParameterVector ParameterVector::zeros(const ModelSpec& spec, int n_countries) {
  ParameterVector t;
  t.phi.assign(spec.lag, MatrixXd::Zero(kResponses, kResponses));
  t.lambda = MatrixXd::Zero(kResponses, spec.n_levels());
  t.delta = MatrixXd::Zero(kResponses, spec.n_changes());
  t.nu = MatrixXd::Zero(kResponses, 4);
  t.psi_vacc = VectorXd::Zero(kResponses);
  t.mu = MatrixXd::Zero(kResponses, n_countries);
  t.sigma_mu = 1.0;
  t.resid_scales = VectorXd::Ones(kResponses);
  t.corr_chol = MatrixXd::Identity(kResponses, kResponses);
  return t;
}

// --- correlation-factor transform ---------------------------------------

MatrixXd corr_chol_from_z(const VectorXd& z_unconstrained, int n,
                          double* log_jacobian) {
  MatrixXd L = MatrixXd::Zero(n, n);
  L(0, 0) = 1.0;
  double lj = 0.0;
  int idx = 0;
  for (int i = 1; i < n; ++i) {
    double c = 1.0;
    for (int j = 0; j < i; ++j) {
      double s = std::sqrt(c);
      double z = std::tanh(z_unconstrained(idx++));
      L(i, j) = z * s;
      c -= L(i, j) * L(i, j);
      lj += std::log1p(-z * z) + 0.5 * std::log(s * s);
    }
    L(i, i) = std::sqrt(c);
  }
  if (log_jacobian) *log_jacobian = lj;
  return L;
}

VectorXd corr_z_from_chol(const MatrixXd& L) {
  const int n = static_cast<int>(L.rows());
  VectorXd z(n * (n - 1) / 2);
  int idx = 0;
  for (int i = 1; i < n; ++i) {
    double c = 1.0;
    for (int j = 0; j < i; ++j) {
      double s = std::sqrt(c);
      double zij = L(i, j) / s;
      z(idx++) = std::atanh(zij);
      c -= L(i, j) * L(i, j);
    }
  }
  return z;
}

// --- layout --------------------------------------------------------------

ParameterLayout::ParameterLayout(const ModelSpec& spec,
                                 std::vector<std::string> countries)
    : spec_(spec), countries_(std::move(countries)) {
  spec_.validate();
  const int N = kResponses;
  const int Kl = spec_.n_levels(), Kc = spec_.n_changes();
  const int C = static_cast<int>(countries_.size());

  n_phi_free_ = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (spec_.phi_entry_active(i, j)) ++n_phi_free_;
  n_phi_free_ *= spec_.lag;

  off_phi_ = 0;
  off_lambda_ = off_phi_ + n_phi_free_;
  off_delta_ = off_lambda_ + N * Kl;
  off_nu_ = off_delta_ + N * Kc;
  off_psi_ = off_nu_ + N * 4;
  off_mu_ = off_psi_ + N;
  off_lsm_ = off_mu_ + N * C;
  off_ls_ = off_lsm_ + 1;
  off_corr_ = off_ls_ + N;
  u_dim_ = off_corr_ + N * (N - 1) / 2;

  c_dim_ = spec_.lag * N * N + N * Kl + N * Kc + N * 4 + N + N * C + 1 + N +
           N * (N + 1) / 2;

  const auto& rn = response_names();
  names_.reserve(static_cast<std::size_t>(c_dim_));
  for (int k = 0; k < spec_.lag; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        names_.push_back("phi." + rn[i] + "." + rn[j] + ".l" +
                         std::to_string(k + 1));
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < Kl; ++k)
      names_.push_back("lvl." + rn[i] + "." + spec_.npi_ids[k]);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < Kc; ++k)
      names_.push_back("chg." + rn[i] + "." + spec_.npi_ids[k]);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < 4; ++k)
      names_.push_back("variant." + rn[i] + "." + variant_names()[k]);
  for (int i = 0; i < N; ++i) names_.push_back("vacc." + rn[i]);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < N; ++i)
      names_.push_back("intercept." + rn[i] + "." + countries_[c]);
  names_.push_back("sigma_intercept");
  for (int i = 0; i < N; ++i) names_.push_back("sigma." + rn[i]);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j)
      names_.push_back("l_omega." + std::to_string(i + 1) + "." +
                       std::to_string(j + 1));
}

int ParameterLayout::name_index(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  throw ConfigError("unknown parameter name '" + name + "'");
}

ParameterVector ParameterLayout::unpack(const VectorXd& u) const {
  if (u.size() != u_dim_)
    throw std::invalid_argument("parameter vector has dimension " +
                                std::to_string(u.size()) + ", expected " +
                                std::to_string(u_dim_));
  const int N = kResponses;
  ParameterVector t = ParameterVector::zeros(spec_, n_countries());
  int idx = off_phi_;
  for (int k = 0; k < spec_.lag; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        if (spec_.phi_entry_active(i, j)) t.phi[k](i, j) = u(idx++);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_levels(); ++k) t.lambda(i, k) = u(idx++);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_changes(); ++k) t.delta(i, k) = u(idx++);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < 4; ++k) t.nu(i, k) = u(idx++);
  for (int i = 0; i < N; ++i) t.psi_vacc(i) = u(idx++);
  for (int c = 0; c < n_countries(); ++c)
    for (int i = 0; i < N; ++i) t.mu(i, c) = u(idx++);
  t.sigma_mu = std::exp(u(idx++));
  for (int i = 0; i < N; ++i) t.resid_scales(i) = std::exp(u(idx++));
  t.corr_chol = corr_chol_from_z(u.segment(off_corr_, N * (N - 1) / 2), N);
  return t;
}

VectorXd ParameterLayout::pack(const ParameterVector& t) const {
  const int N = kResponses;
  VectorXd u(u_dim_);
  int idx = off_phi_;
  for (int k = 0; k < spec_.lag; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        if (spec_.phi_entry_active(i, j)) u(idx++) = t.phi[k](i, j);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_levels(); ++k) u(idx++) = t.lambda(i, k);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_changes(); ++k) u(idx++) = t.delta(i, k);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < 4; ++k) u(idx++) = t.nu(i, k);
  for (int i = 0; i < N; ++i) u(idx++) = t.psi_vacc(i);
  for (int c = 0; c < n_countries(); ++c)
    for (int i = 0; i < N; ++i) u(idx++) = t.mu(i, c);
  u(idx++) = std::log(t.sigma_mu);
  for (int i = 0; i < N; ++i) u(idx++) = std::log(t.resid_scales(i));
  u.segment(off_corr_, N * (N - 1) / 2) = corr_z_from_chol(t.corr_chol);
  return u;
}

VectorXd ParameterLayout::flatten(const ParameterVector& t) const {
  const int N = kResponses;
  VectorXd c(c_dim_);
  int idx = 0;
  for (int k = 0; k < spec_.lag; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) c(idx++) = t.phi[k](i, j);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_levels(); ++k) c(idx++) = t.lambda(i, k);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_changes(); ++k) c(idx++) = t.delta(i, k);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < 4; ++k) c(idx++) = t.nu(i, k);
  for (int i = 0; i < N; ++i) c(idx++) = t.psi_vacc(i);
  for (int cc = 0; cc < n_countries(); ++cc)
    for (int i = 0; i < N; ++i) c(idx++) = t.mu(i, cc);
  c(idx++) = t.sigma_mu;
  for (int i = 0; i < N; ++i) c(idx++) = t.resid_scales(i);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j) c(idx++) = t.corr_chol(i, j);
  return c;
}

ParameterVector ParameterLayout::unflatten(const VectorXd& c) const {
  if (c.size() != c_dim_)
    throw std::invalid_argument("constrained vector has wrong dimension");
  const int N = kResponses;
  ParameterVector t = ParameterVector::zeros(spec_, n_countries());
  int idx = 0;
  for (int k = 0; k < spec_.lag; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) t.phi[k](i, j) = c(idx++);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_levels(); ++k) t.lambda(i, k) = c(idx++);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < spec_.n_changes(); ++k) t.delta(i, k) = c(idx++);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < 4; ++k) t.nu(i, k) = c(idx++);
  for (int i = 0; i < N; ++i) t.psi_vacc(i) = c(idx++);
  for (int cc = 0; cc < n_countries(); ++cc)
    for (int i = 0; i < N; ++i) t.mu(i, cc) = c(idx++);
  t.sigma_mu = c(idx++);
  for (int i = 0; i < N; ++i) t.resid_scales(i) = c(idx++);
  t.corr_chol.setZero(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j) t.corr_chol(i, j) = c(idx++);
  return t;
}

VectorXd ParameterLayout::constrain(const VectorXd& u) const {
  return flatten(unpack(u));
}

double ParameterLayout::transform_log_jacobian(const VectorXd& u) const {
  const int N = kResponses;
  double lj = u(off_lsm_);                       // sigma_mu = exp(u)
  lj += u.segment(off_ls_, N).sum();             // residual scales
  double corr_lj = 0;
  corr_chol_from_z(u.segment(off_corr_, N * (N - 1) / 2), N, &corr_lj);
  return lj + corr_lj;
}

// --- posterior -----------------------------------------------------------

PanelVarPosterior::PanelVarPosterior(const PanelDataset& panel,
                                     const ModelSpec& spec)
    : panel_(panel), spec_(spec), layout_(spec, [&] {
        std::vector<std::string> cs;
        for (const auto& c : panel.countries) cs.push_back(c.country);
        return cs;
      }()) {
  const int N = kResponses;
  const int p = spec_.lag;
  const int Kl = spec_.n_levels(), Kc = spec_.n_changes();
  reg_rows_ = N * p + Kl + Kc + 4 + 1;
  for (int c = 0; c < panel_.n_countries(); ++c) {
    const auto& pc = panel_.countries[static_cast<std::size_t>(c)];
    if (static_cast<int>(pc.x_level.rows()) != static_cast<int>(spec_.npi_ids.size()) ||
        pc.x_level.rows() != pc.x_change.rows())
      throw std::invalid_argument("panel NPI columns do not match the model spec");
    const int T = pc.weeks();
    if (T <= p)
      throw std::invalid_argument("country " + pc.country +
                                  " has too few weeks for lag " +
                                  std::to_string(p));
    const int n = T - p;
    MatrixXd yo(N, n), rg(reg_rows_, n);
    for (int t = p; t < T; ++t) {
      int col = t - p;
      yo.col(col) = pc.Y.col(t);
      int r = 0;
      for (int k = 1; k <= p; ++k) {
        rg.block(r, col, N, 1) = pc.Y.col(t - k);
        r += N;
      }
      if (Kl > 0) rg.block(r, col, Kl, 1) = pc.x_level.col(t);
      r += Kl;
      if (Kc > 0) rg.block(r, col, Kc, 1) = pc.x_change.col(t);
      r += Kc;
      rg.block(r, col, 4, 1) = pc.variant.col(t);
      r += 4;
      rg(r, col) = pc.vacc(t);
      obs_.push_back({c, t});
    }
    yobs_.push_back(std::move(yo));
    reg_.push_back(std::move(rg));
    n_obs_ += n;
  }
}

MatrixXd coefficient_matrix(const ParameterVector& t, const ModelSpec& spec) {
  const int N = kResponses;
  const int Kl = spec.n_levels(), Kc = spec.n_changes();
  MatrixXd A(N, N * spec.lag + Kl + Kc + 4 + 1);
  int col = 0;
  for (int k = 0; k < spec.lag; ++k) {
    MatrixXd masked = t.phi[static_cast<std::size_t>(k)];
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        if (!spec.phi_entry_active(i, j)) masked(i, j) = 0.0;
    A.block(0, col, N, N) = masked;
    col += N;
  }
  if (Kl > 0) A.block(0, col, N, Kl) = t.lambda;
  col += Kl;
  if (Kc > 0) A.block(0, col, N, Kc) = t.delta;
  col += Kc;
  A.block(0, col, N, 4) = t.nu;
  col += 4;
  A.col(col) = t.psi_vacc;
  return A;
}

PanelVarPosterior::Term PanelVarPosterior::eval(const VectorXd& u,
                                                VectorXd* grad) const {
  const int N = kResponses;
  const int C = layout_.n_countries();
  const double tau = spec_.priors.tau;
  const double s0 = spec_.priors.sigma_scale;
  const double xi = spec_.priors.lkj_xi;
  if (u.size() != layout_.unconstrained_dim())
    throw std::invalid_argument("log_posterior: dimension mismatch (got " +
                                std::to_string(u.size()) + ", expected " +
                                std::to_string(layout_.unconstrained_dim()) + ")");

  if (grad) grad->setZero(u.size());

  // Unpack, keeping correlation-transform intermediates for the reverse pass.
  ParameterVector theta = layout_.unpack(u);
  const MatrixXd& L = theta.corr_chol;
  const VectorXd& s = theta.resid_scales;
  const double sigma_mu = theta.sigma_mu;

  double corr_logjac = 0.0;
  {
    int idx = 0;
    for (int i = 1; i < N; ++i) {
      double c = 1.0;
      for (int j = 0; j < i; ++j) {
        double z = std::tanh(u(layout_.off_corr() + idx++));
        corr_logjac += std::log1p(-z * z) + 0.5 * std::log(c);
        c -= z * z * c;
      }
    }
  }

  VectorXd log_l_diag(N);
  for (int i = 0; i < N; ++i) log_l_diag(i) = std::log(L(i, i));

  // Likelihood.
  MatrixXd A = coefficient_matrix(theta, spec_);
  double loglik = 0.0;
  MatrixXd grad_A = MatrixXd::Zero(A.rows(), A.cols());
  MatrixXd grad_mu = MatrixXd::Zero(N, C);
  VectorXd grad_logs = VectorXd::Zero(N);
  MatrixXd s_qv = MatrixXd::Zero(N, N);

  const double const_per_obs =
      -(s.array().log().sum() + log_l_diag.sum() + 0.5 * N * kLog2Pi);
  for (int c = 0; c < C; ++c) {
    const MatrixXd& yo = yobs_[static_cast<std::size_t>(c)];
    const MatrixXd& rg = reg_[static_cast<std::size_t>(c)];
    const int n = static_cast<int>(yo.cols());
    MatrixXd resid = yo - A * rg;
    resid.colwise() -= theta.mu.col(c);
    MatrixXd w = resid.array().colwise() / s.array();
    MatrixXd v = L.triangularView<Eigen::Lower>().solve(w);
    loglik += -0.5 * v.squaredNorm() + n * const_per_obs;
    if (grad) {
      MatrixXd q = L.transpose().triangularView<Eigen::Upper>().solve(v);
      MatrixXd dinv_q = q.array().colwise() / s.array();
      grad_A.noalias() += dinv_q * rg.transpose();
      grad_mu.col(c) += dinv_q.rowwise().sum();
      grad_logs += (q.array() * w.array()).rowwise().sum().matrix();
      s_qv.noalias() += q * v.transpose();
    }
  }
  if (grad) grad_logs.array() -= static_cast<double>(n_obs_);
  if (std::isnan(loglik)) return {loglik, "likelihood"};

  // Coefficient priors: N(0, tau^2) on every free slope entry.
  const int n_coef = layout_.off_mu() - layout_.off_phi();
  double coef_prior = 0.0;
  for (int i = 0; i < n_coef; ++i) {
    double a = u(layout_.off_phi() + i);
    coef_prior += -0.5 * a * a / (tau * tau);
    if (grad) (*grad)(layout_.off_phi() + i) += -a / (tau * tau);
  }
  coef_prior += -n_coef * (std::log(tau) + 0.5 * kLog2Pi);
  if (std::isnan(coef_prior)) return {coef_prior, "coefficient prior"};

  // Country intercepts: N(0, sigma_mu^2), pooled across countries.
  double mu_prior = 0.0;
  double sum_mu_sq = theta.mu.squaredNorm();
  mu_prior += -0.5 * sum_mu_sq / (sigma_mu * sigma_mu) -
              N * C * (std::log(sigma_mu) + 0.5 * kLog2Pi);
  if (grad) {
    grad_mu -= theta.mu / (sigma_mu * sigma_mu);
    (*grad)(layout_.off_log_sigma_mu()) +=
        sum_mu_sq / (sigma_mu * sigma_mu) - N * C;
  }
  if (std::isnan(mu_prior)) return {mu_prior, "intercept prior"};

  // Half-Cauchy scales (with log-transform Jacobians).
  double scale_prior = 0.0;
  {
    double g = 0;
    scale_prior += half_cauchy_log(u(layout_.off_log_sigma_mu()), s0,
                                   grad ? &g : nullptr);
    if (grad) (*grad)(layout_.off_log_sigma_mu()) += g;
    for (int i = 0; i < N; ++i) {
      scale_prior +=
          half_cauchy_log(u(layout_.off_log_scales() + i), s0, grad ? &g : nullptr);
      if (grad) (*grad)(layout_.off_log_scales() + i) += g;
    }
  }
  if (std::isnan(scale_prior)) return {scale_prior, "scale prior"};

  // LKJ prior on the correlation Cholesky factor (unnormalized) plus the
  // transform Jacobian.
  double lkj = 0.0;
  for (int i = 1; i < N; ++i) lkj += (N - i + 2 * xi - 3) * log_l_diag(i);
  lkj += corr_logjac;
  if (std::isnan(lkj)) return {lkj, "correlation prior"};

  if (grad) {
    // Scatter the coefficient-block likelihood gradient into the layout
    // order (phi, lambda, delta, nu, psi, mu).
    const int Kl = spec_.n_levels(), Kc = spec_.n_changes();
    int idx = layout_.off_phi();
    for (int k = 0; k < spec_.lag; ++k)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
          if (spec_.phi_entry_active(i, j)) (*grad)(idx++) += grad_A(i, k * N + j);
    const int base = N * spec_.lag;
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < Kl; ++k)
        (*grad)(layout_.off_lambda() + i * Kl + k) += grad_A(i, base + k);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < Kc; ++k)
        (*grad)(layout_.off_delta() + i * Kc + k) += grad_A(i, base + Kl + k);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < 4; ++k)
        (*grad)(layout_.off_nu() + i * 4 + k) += grad_A(i, base + Kl + Kc + k);
    for (int i = 0; i < N; ++i)
      (*grad)(layout_.off_psi() + i) += grad_A(i, base + Kl + Kc + 4);
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < N; ++i)
        (*grad)(layout_.off_mu() + c * N + i) += grad_mu(i, c);

    // Residual scales: likelihood part (the normalizing -log s per
    // observation is already inside grad_logs).
    for (int i = 0; i < N; ++i) (*grad)(layout_.off_log_scales() + i) += grad_logs(i);

    // Gradient w.r.t. the lower-triangular factor entries, then reverse
    // through the unit-row construction (including its Jacobian terms).
    MatrixXd g_l = MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j <= i; ++j) g_l(i, j) = s_qv(i, j);
    for (int i = 0; i < N; ++i)
      g_l(i, i) += -static_cast<double>(n_obs_) / L(i, i);
    for (int i = 1; i < N; ++i) g_l(i, i) += (N - i + 2 * xi - 3) / L(i, i);

    int zidx = 0;
    for (int i = 1; i < N; ++i) {
      // Recompute the forward row intermediates.
      std::vector<double> zs(static_cast<std::size_t>(i)),
          cs(static_cast<std::size_t>(i) + 1);
      cs[0] = 1.0;
      for (int j = 0; j < i; ++j) {
        zs[static_cast<std::size_t>(j)] = std::tanh(u(layout_.off_corr() + zidx + j));
        double lij = zs[static_cast<std::size_t>(j)] * std::sqrt(cs[static_cast<std::size_t>(j)]);
        cs[static_cast<std::size_t>(j) + 1] = cs[static_cast<std::size_t>(j)] - lij * lij;
      }
      double cbar = g_l(i, i) * 0.5 / L(i, i);
      for (int j = i - 1; j >= 0; --j) {
        double sj = std::sqrt(cs[static_cast<std::size_t>(j)]);
        double zj = zs[static_cast<std::size_t>(j)];
        double lbar = g_l(i, j) - 2.0 * L(i, j) * cbar;
        // logjac contributes -2z/(1-z^2) via z and 0.5/c via c.
        (*grad)(layout_.off_corr() + zidx + j) +=
            lbar * sj * (1.0 - zj * zj) - 2.0 * zj;
        cbar += lbar * zj * 0.5 / sj + 0.5 / cs[static_cast<std::size_t>(j)];
      }
      zidx += i;
    }
  }

  double total = loglik + coef_prior + mu_prior + scale_prior + lkj;
  if (std::isnan(total)) return {total, "total"};
  return {total, nullptr};
}

double PanelVarPosterior::logp_grad(const VectorXd& u, VectorXd* grad) const {
  Term t = eval(u, grad);
  if (t.bad) return -std::numeric_limits<double>::infinity();
  return t.value;
}

double PanelVarPosterior::log_posterior(const VectorXd& u) const {
  Term t = eval(u, nullptr);
  if (t.bad)
    throw SamplerError(std::string("log_posterior: non-finite ") + t.bad +
                       " term");
  return t.value;
}

VectorXd PanelVarPosterior::grad_log_posterior(const VectorXd& u) const {
  VectorXd g(layout_.unconstrained_dim());
  Term t = eval(u, &g);
  if (t.bad)
    throw SamplerError(std::string("grad_log_posterior: non-finite ") + t.bad +
                       " term");
  return g;
}

VectorXd PanelVarPosterior::pointwise_loglik(const ParameterVector& theta) const {
  const int N = kResponses;
  MatrixXd A = coefficient_matrix(theta, spec_);
  MatrixXd lc = theta.sigma_chol();
  double logdet = 0;
  for (int i = 0; i < N; ++i) logdet += std::log(lc(i, i));
  VectorXd out(n_obs_);
  int pos = 0;
  for (std::size_t c = 0; c < yobs_.size(); ++c) {
    MatrixXd resid = yobs_[c] - A * reg_[c];
    resid.colwise() -= theta.mu.col(static_cast<int>(c));
    MatrixXd v = lc.triangularView<Eigen::Lower>().solve(resid);
    for (int t = 0; t < v.cols(); ++t)
      out(pos++) = -0.5 * v.col(t).squaredNorm() - logdet - 0.5 * N * kLog2Pi;
  }
  return out;
}

VectorXd PanelVarPosterior::predict(const ParameterVector& theta, int country,
                                    int t) const {
  return linear_predictor(theta, panel_, spec_, t, country);
}

VectorXd linear_predictor(const ParameterVector& theta,
                          const PanelDataset& panel, const ModelSpec& spec,
                          int t, int country) {
  const auto& pc = panel.countries.at(static_cast<std::size_t>(country));
  if (t < spec.lag || t >= pc.weeks())
    throw std::invalid_argument(
        "linear_predictor: week " + std::to_string(t) + " of " + pc.country +
        " has no lag-" + std::to_string(spec.lag) + " history");
  VectorXd m = theta.mu.col(country);
  for (int k = 1; k <= spec.lag; ++k) {
    const MatrixXd& phi = theta.phi[static_cast<std::size_t>(k - 1)];
    for (int i = 0; i < kResponses; ++i)
      for (int j = 0; j < kResponses; ++j)
        if (spec.phi_entry_active(i, j)) m(i) += phi(i, j) * pc.Y(j, t - k);
  }
  if (spec.include_levels) m += theta.lambda * pc.x_level.col(t);
  if (spec.include_changes) m += theta.delta * pc.x_change.col(t);
  m += theta.nu * pc.variant.col(t);
  m += theta.psi_vacc * pc.vacc(t);
  return m;
}

}  // namespace panelvar
