#include "panelvar/sampler.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "panelvar/common.hpp"
#include "panelvar/csv.hpp"
#include "panelvar/rng.hpp"

namespace panelvar {

using Eigen::VectorXd;

std::vector<std::string> Target::param_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < constrained_dim(); ++i)
    names.push_back("u" + std::to_string(i));
  return names;
}

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("sampler: chains must be >= 1");
  if (warmup < 1 || iterations < 1)
    throw ConfigError("sampler: warmup and iterations must be >= 1");
  if (!(adapt_delta > 0 && adapt_delta < 1))
    throw ConfigError("sampler: adapt_delta must be in (0,1)");
  if (!(init_step_size > 0))
    throw ConfigError("sampler: init_step_size must be > 0");
  if (max_treedepth < 1 || max_treedepth > 14)
    throw ConfigError("sampler: max_treedepth must be in [1,14]");
}

namespace {

constexpr double kDivergenceThreshold = 1000.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct PhasePoint {
  VectorXd q;     // position
  VectorXd p;     // momentum
  VectorXd grad;  // gradient of log density at q
  double logp = kNegInf;
};

// Dual averaging of log step size (Hoffman & Gelman 2014 defaults).
struct DualAveraging {
  double mu = 0, log_eps = 0, log_eps_bar = 0, h_bar = 0;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  int counter = 0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    log_eps = std::log(eps);
    log_eps_bar = std::log(eps);
    h_bar = 0;
    counter = 0;
  }

  double update(double accept_stat, double target) {
    ++counter;
    double eta = 1.0 / (counter + t0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_stat);
    log_eps = mu - std::sqrt(static_cast<double>(counter)) / gamma * h_bar;
    double w = std::pow(static_cast<double>(counter), -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    return std::exp(log_eps);
  }
};

// Welford accumulator for the diagonal mass-matrix windows.
struct VarianceAccumulator {
  VectorXd mean, m2;
  int n = 0;

  void reset(int dim) {
    mean.setZero(dim);
    m2.setZero(dim);
    n = 0;
  }
  void add(const VectorXd& x) {
    ++n;
    VectorXd d = x - mean;
    mean += d / n;
    m2 += d.cwiseProduct(x - mean).eval();
  }
  // Regularized sample variance, shrunk toward a small constant.
  VectorXd variance() const {
    VectorXd v = m2 / std::max(1, n - 1);
    double w = n / (n + 5.0);
    return (w * v.array() + 1e-3 * (1.0 - w)).matrix();
  }
};

class NutsChain {
 public:
  NutsChain(const Target& target, const SamplerConfig& cfg, int chain_id)
      : target_(target),
        cfg_(cfg),
        chain_id_(chain_id),
        rng_(Rng::substream(cfg.seed, static_cast<std::uint64_t>(chain_id))),
        dim_(target.dim()),
        inv_metric_(VectorXd::Ones(target.dim())) {}

  ChainResult run() {
    init_position();
    self_test_gradient();

    double eps = find_reasonable_step_size(cfg_.init_step_size);
    da_.restart(eps);

    // Warmup schedule: fast(step size) | expanding slow windows (metric) |
    // fast. Short warmups collapse to a single proportional split.
    int init_buf = 75, term_buf = 50, base_window = 25;
    if (init_buf + term_buf + base_window > cfg_.warmup) {
      init_buf = static_cast<int>(0.15 * cfg_.warmup);
      term_buf = static_cast<int>(0.10 * cfg_.warmup);
      base_window = cfg_.warmup - init_buf - term_buf;
    }
    int window_size = base_window;
    int window_end = init_buf + window_size;
    VarianceAccumulator acc;
    acc.reset(dim_);

    for (int m = 0; m < cfg_.warmup; ++m) {
      Transition tr = transition(eps);
      eps = da_.update(tr.accept_stat, cfg_.adapt_delta);
      bool slow = m >= init_buf && m < cfg_.warmup - term_buf;
      if (slow) {
        acc.add(position_);
        if (m + 1 == window_end) {
          inv_metric_ = acc.variance();
          acc.reset(dim_);
          window_size *= 2;
          window_end += window_size;
          if (window_end + 2 * window_size > cfg_.warmup - term_buf)
            window_end = cfg_.warmup - term_buf;
          // New metric changes the scale; re-tune the step size.
          eps = find_reasonable_step_size(std::exp(da_.log_eps_bar));
          da_.restart(eps);
        }
      }
    }
    eps = std::exp(da_.log_eps_bar);

    ChainResult result;
    result.stats.chain_id = chain_id_;
    result.stats.step_size = eps;
    result.stats.treedepth_hist.assign(
        static_cast<std::size_t>(cfg_.max_treedepth) + 1, 0);
    result.draws.resize(cfg_.iterations, target_.constrained_dim());
    VectorXd constrained;
    double accept_sum = 0;
    for (int m = 0; m < cfg_.iterations; ++m) {
      Transition tr = transition(eps);
      if (tr.divergent) ++result.stats.divergences;
      ++result.stats.treedepth_hist[static_cast<std::size_t>(tr.depth)];
      accept_sum += tr.accept_stat;
      target_.constrain(position_, constrained);
      result.draws.row(m) = constrained.transpose();
    }
    result.stats.mean_accept = accept_sum / cfg_.iterations;

    double div_rate =
        static_cast<double>(result.stats.divergences) / cfg_.iterations;
    if (div_rate > 0.25) {
      std::ostringstream os;
      os << "chain " << chain_id_ << ": " << result.stats.divergences << "/"
         << cfg_.iterations << " post-warmup transitions were divergent (>25%);"
         << " increase adapt_delta (current " << cfg_.adapt_delta << ")";
      throw SamplerError(os.str());
    }
    return result;
  }

 private:
  struct Transition {
    double accept_stat = 0;
    int depth = 0;
    bool divergent = false;
  };

  // Subtree state for the doubling procedure.
  struct Tree {
    PhasePoint minus, plus;  // trajectory ends
    VectorXd sample;         // selected position
    double sample_logp = kNegInf;
    VectorXd rho;            // momentum sum across the subtree
    double log_weight = kNegInf;
    double accept_sum = 0;
    int n_states = 0;
    bool divergent = false;
    bool uturn = false;
  };

  void init_position() {
    for (int attempt = 0; attempt < 100; ++attempt) {
      VectorXd q(dim_);
      for (int i = 0; i < dim_; ++i) q(i) = rng_.uniform(-0.1, 0.1);
      VectorXd g(dim_);
      double lp = target_.logp_grad(q, &g);
      if (std::isfinite(lp) && g.allFinite()) {
        position_ = q;
        return;
      }
    }
    throw SamplerError("chain " + std::to_string(chain_id_) +
                       ": could not find a finite initial density");
  }

  // Cheap spot check of the analytic gradient against central differences
  // at the initial point: first and last coordinates plus a random one.
  void self_test_gradient() {
    VectorXd g(dim_);
    double lp0 = target_.logp_grad(position_, &g);
    (void)lp0;
    const double h = 1e-5;
    std::vector<int> coords = {0, dim_ - 1,
                               static_cast<int>(rng_.integer(
                                   static_cast<std::uint64_t>(dim_)))};
    for (int i : coords) {
      VectorXd q = position_;
      q(i) += h;
      double up = target_.logp_grad(q, nullptr);
      q(i) -= 2 * h;
      double dn = target_.logp_grad(q, nullptr);
      double fd = (up - dn) / (2 * h);
      double scale = std::max({1.0, std::abs(fd), std::abs(g(i))});
      if (!std::isfinite(fd) || std::abs(fd - g(i)) / scale > 1e-3)
        throw SamplerError("chain " + std::to_string(chain_id_) +
                           ": gradient self-test failed at coordinate " +
                           std::to_string(i) + " (analytic " +
                           std::to_string(g(i)) + ", finite difference " +
                           std::to_string(fd) + ")");
    }
  }

  double hamiltonian(const PhasePoint& z) const {
    return -z.logp + 0.5 * z.p.dot(inv_metric_.cwiseProduct(z.p));
  }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    z.logp = target_.logp_grad(z.q, &z.grad);
    if (!std::isfinite(z.logp) || !z.grad.allFinite()) {
      z.logp = kNegInf;
      z.grad.setZero();
    }
    z.p += 0.5 * eps * z.grad;
  }

  VectorXd sample_momentum() {
    VectorXd p(dim_);
    for (int i = 0; i < dim_; ++i)
      p(i) = rng_.normal() / std::sqrt(inv_metric_(i));
    return p;
  }

  // One leapfrog step from an initial (q, fresh p): used to bracket a
  // step size with acceptance ratio near 1/2.
  double find_reasonable_step_size(double eps) {
    PhasePoint z;
    z.q = position_;
    z.grad.resize(dim_);
    z.logp = target_.logp_grad(z.q, &z.grad);
    z.p = sample_momentum();
    double h0 = hamiltonian(z);

    auto ratio = [&](double e) {
      PhasePoint zz = z;
      leapfrog(zz, e);
      double h1 = hamiltonian(zz);
      return std::isfinite(h1) ? std::exp(h0 - h1) : 0.0;
    };
    double r = ratio(eps);
    int dir = r > 0.5 ? 1 : -1;
    for (int it = 0; it < 50; ++it) {
      if (dir == 1 && !(r > 0.5)) break;
      if (dir == -1 && !(r < 0.5)) break;
      eps *= dir == 1 ? 2.0 : 0.5;
      if (eps > 1e7 || eps < 1e-17)
        throw SamplerError("chain " + std::to_string(chain_id_) +
                           ": step-size search diverged");
      r = ratio(eps);
    }
    return eps;
  }

  bool no_uturn(const VectorXd& rho, const PhasePoint& minus,
                const PhasePoint& plus) const {
    return rho.dot(inv_metric_.cwiseProduct(minus.p)) > 0 &&
           rho.dot(inv_metric_.cwiseProduct(plus.p)) > 0;
  }

  Tree build_tree(int depth, PhasePoint z, int direction, double h0,
                  double eps) {
    if (depth == 0) {
      leapfrog(z, direction * eps);
      double h = hamiltonian(z);
      double delta = std::isfinite(h) ? h0 - h : kNegInf;  // -(H - H0)
      Tree leaf;
      leaf.divergent = !(delta > -kDivergenceThreshold);
      leaf.minus = z;
      leaf.plus = z;
      leaf.sample = z.q;
      leaf.sample_logp = z.logp;
      leaf.rho = z.p;
      leaf.log_weight = delta;
      leaf.accept_sum = std::isfinite(delta) ? std::min(1.0, std::exp(delta)) : 0.0;
      leaf.n_states = 1;
      return leaf;
    }

    Tree first = build_tree(depth - 1, std::move(z), direction, h0, eps);
    if (first.divergent || first.uturn) return first;
    const PhasePoint& edge = direction == 1 ? first.plus : first.minus;
    Tree second = build_tree(depth - 1, edge, direction, h0, eps);

    Tree tree;
    tree.accept_sum = first.accept_sum + second.accept_sum;
    tree.n_states = first.n_states + second.n_states;
    tree.divergent = second.divergent;
    if (tree.divergent) return tree;

    tree.minus = direction == 1 ? std::move(first.minus) : std::move(second.minus);
    tree.plus = direction == 1 ? std::move(second.plus) : std::move(first.plus);
    tree.log_weight = log_sum_exp(first.log_weight, second.log_weight);
    // Multinomial sampling within the subtree.
    double p_second = std::exp(second.log_weight - tree.log_weight);
    if (rng_.uniform() < p_second) {
      tree.sample = std::move(second.sample);
      tree.sample_logp = second.sample_logp;
    } else {
      tree.sample = std::move(first.sample);
      tree.sample_logp = first.sample_logp;
    }
    tree.rho = first.rho + second.rho;
    tree.uturn = second.uturn || !no_uturn(tree.rho, tree.minus, tree.plus);
    return tree;
  }

  static double log_sum_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  Transition transition(double eps) {
    PhasePoint z;
    z.q = position_;
    z.grad.resize(dim_);
    z.logp = target_.logp_grad(z.q, &z.grad);
    z.p = sample_momentum();
    double h0 = hamiltonian(z);

    Tree trajectory;
    trajectory.minus = z;
    trajectory.plus = z;
    trajectory.sample = z.q;
    trajectory.sample_logp = z.logp;
    trajectory.rho = z.p;
    trajectory.log_weight = 0.0;
    trajectory.n_states = 0;

    Transition tr;
    double accept_sum = 0;
    int n_states = 0;
    for (int depth = 0; depth < cfg_.max_treedepth; ++depth) {
      int direction = rng_.uniform() < 0.5 ? 1 : -1;
      const PhasePoint& edge =
          direction == 1 ? trajectory.plus : trajectory.minus;
      Tree subtree = build_tree(depth, edge, direction, h0, eps);
      accept_sum += subtree.accept_sum;
      n_states += subtree.n_states;
      tr.depth = depth + 1;
      if (subtree.divergent) {
        tr.divergent = true;
        break;
      }
      if (subtree.uturn) break;
      // Biased progressive sampling toward the new subtree.
      double p_new = std::exp(subtree.log_weight - trajectory.log_weight);
      if (rng_.uniform() < p_new) {
        trajectory.sample = subtree.sample;
        trajectory.sample_logp = subtree.sample_logp;
      }
      trajectory.log_weight =
          log_sum_exp(trajectory.log_weight, subtree.log_weight);
      if (direction == 1)
        trajectory.plus = subtree.plus;
      else
        trajectory.minus = subtree.minus;
      trajectory.rho += subtree.rho;
      if (!no_uturn(trajectory.rho, trajectory.minus, trajectory.plus)) break;
    }
    position_ = trajectory.sample;
    tr.accept_stat = n_states > 0 ? accept_sum / n_states : 0.0;
    return tr;
  }

  const Target& target_;
  SamplerConfig cfg_;
  int chain_id_;
  Rng rng_;
  int dim_;
  VectorXd inv_metric_;
  VectorXd position_;
  DualAveraging da_;
};

}  // namespace

ChainResult run_chain(const Target& target, const SamplerConfig& config,
                      int chain_id) {
  config.validate();
  NutsChain chain(target, config, chain_id);
  return chain.run();
}

PosteriorDraws run_sampling(const Target& target, const SamplerConfig& config) {
  config.validate();
  PosteriorDraws out;
  out.names = target.param_names();
  out.seed = config.seed;
  out.chains.resize(static_cast<std::size_t>(config.chains));
  out.stats.resize(static_cast<std::size_t>(config.chains));

  int hw = static_cast<int>(std::thread::hardware_concurrency());
  int n_threads = config.threads > 0 ? config.threads : (hw > 0 ? hw : 1);
  n_threads = std::min(n_threads, config.chains);

  std::vector<std::string> errors(static_cast<std::size_t>(config.chains));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int c = next.fetch_add(1);
      if (c >= config.chains) return;
      try {
        ChainResult r = run_chain(target, config, c);
        out.chains[static_cast<std::size_t>(c)] = std::move(r.draws);
        out.stats[static_cast<std::size_t>(c)] = std::move(r.stats);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(c)] = e.what();
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (int c = 0; c < config.chains; ++c)
    if (!errors[static_cast<std::size_t>(c)].empty())
      throw SamplerError("chain " + std::to_string(c) + " failed: " +
                         errors[static_cast<std::size_t>(c)]);
  return out;
}

int PosteriorDraws::name_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw ConfigError("no parameter named '" + name + "' in draws");
}

std::vector<std::vector<double>> PosteriorDraws::parameter_chains(
    int index) const {
  std::vector<std::vector<double>> out;
  for (const auto& ch : chains) {
    std::vector<double> v(static_cast<std::size_t>(ch.rows()));
    for (Eigen::Index i = 0; i < ch.rows(); ++i)
      v[static_cast<std::size_t>(i)] = ch(i, index);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<double> PosteriorDraws::parameter_draws(int index) const {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(total_draws()));
  for (const auto& ch : chains)
    for (Eigen::Index i = 0; i < ch.rows(); ++i) v.push_back(ch(i, index));
  return v;
}

void PosteriorDraws::save_csv(const std::string& path) const {
  CsvWriter w(path);
  std::vector<std::string> row = {"chain", "iter"};
  row.insert(row.end(), names.begin(), names.end());
  w.row(row);
  for (int c = 0; c < n_chains(); ++c) {
    const auto& ch = chains[static_cast<std::size_t>(c)];
    for (Eigen::Index i = 0; i < ch.rows(); ++i) {
      row.clear();
      row.push_back(std::to_string(c));
      row.push_back(std::to_string(i));
      for (Eigen::Index k = 0; k < ch.cols(); ++k)
        row.push_back(format_full(ch(i, k)));
      w.row(row);
    }
  }
}

void PosteriorDraws::save_telemetry(const std::string& path) const {
  nlohmann::json j;
  j["seed"] = seed;
  j["chains"] = n_chains();
  j["iterations"] = iterations();
  nlohmann::json js = nlohmann::json::array();
  for (const auto& s : stats) {
    js.push_back({{"chain", s.chain_id},
                  {"divergences", s.divergences},
                  {"treedepth_hist", s.treedepth_hist},
                  {"step_size", s.step_size},
                  {"mean_accept", s.mean_accept}});
  }
  j["chain_stats"] = std::move(js);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1) << "\n";
}

PosteriorDraws PosteriorDraws::load_csv(const std::string& path) {
  CsvReader r(path);
  const auto& header = r.header();
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iter")
    throw DataError(path + ": not a draws file");
  PosteriorDraws out;
  out.names.assign(header.begin() + 2, header.end());
  std::vector<std::vector<VectorXd>> rows;
  std::vector<std::string> f;
  while (r.next(f)) {
    std::size_t chain = static_cast<std::size_t>(std::stol(f[0]));
    if (rows.size() <= chain) rows.resize(chain + 1);
    VectorXd v(static_cast<Eigen::Index>(out.names.size()));
    for (std::size_t k = 0; k < out.names.size(); ++k)
      v(static_cast<Eigen::Index>(k)) = r.to_double(f[k + 2], "draw");
    rows[chain].push_back(std::move(v));
  }
  for (auto& ch : rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ch.size()),
                      static_cast<Eigen::Index>(out.names.size()));
    for (std::size_t i = 0; i < ch.size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) = ch[i].transpose();
    out.chains.push_back(std::move(m));
  }
  out.stats.resize(out.chains.size());
  return out;
}

}  // namespace panelvar
