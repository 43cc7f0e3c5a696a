#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace panelvar {

// Log-density target for the sampler. The gradient call must be safe from
// multiple threads at once; non-finite densities are treated as divergent
// trajectory states, never as errors.
struct Target {
  virtual ~Target() = default;
  virtual int dim() const = 0;
  // Returns log density at u; fills *grad (same dimension) when non-null.
  virtual double logp_grad(const Eigen::VectorXd& u,
                           Eigen::VectorXd* grad) const = 0;

  // Reporting-scale transform; identity unless overridden.
  virtual int constrained_dim() const { return dim(); }
  virtual void constrain(const Eigen::VectorXd& u, Eigen::VectorXd& out) const {
    out = u;
  }
  virtual std::vector<std::string> param_names() const;
};

struct SamplerConfig {
  int chains = 4;
  int warmup = 2000;
  int iterations = 2000;
  double adapt_delta = 0.9;
  double init_step_size = 0.01;
  int max_treedepth = 10;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct ChainStats {
  int chain_id = 0;
  int divergences = 0;             // post-warmup
  std::vector<int> treedepth_hist; // post-warmup, index = depth
  double step_size = 0.0;          // adapted
  double mean_accept = 0.0;        // post-warmup mean acceptance statistic
};

struct ChainResult {
  Eigen::MatrixXd draws;  // iterations x constrained_dim
  ChainStats stats;
};

// Post-warmup draws on the constrained scale, all chains.
struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // each iterations x dim
  std::vector<ChainStats> stats;
  std::uint64_t seed = 0;

  int n_chains() const { return static_cast<int>(chains.size()); }
  int iterations() const {
    return chains.empty() ? 0 : static_cast<int>(chains[0].rows());
  }
  int dim() const { return static_cast<int>(names.size()); }
  int total_draws() const { return n_chains() * iterations(); }

  int name_index(const std::string& name) const;

  // Per-chain draw vectors for one parameter.
  std::vector<std::vector<double>> parameter_chains(int index) const;
  // All draws pooled (chain-major order).
  std::vector<double> parameter_draws(int index) const;

  void save_csv(const std::string& path) const;
  void save_telemetry(const std::string& path) const;
  static PosteriorDraws load_csv(const std::string& path);
};

// One NUTS chain: multinomial trajectory sampling with no-U-turn
// termination, dual-averaging step size adaptation toward adapt_delta, and
// diagonal mass-matrix estimation in expanding warmup windows.
ChainResult run_chain(const Target& target, const SamplerConfig& config,
                      int chain_id);

// All chains, concurrently; chain c uses the RNG substream (seed, c).
PosteriorDraws run_sampling(const Target& target, const SamplerConfig& config);

}  // namespace panelvar
