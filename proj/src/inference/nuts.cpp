#include "loid/inference/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <thread>

#include "loid/error.hpp"

namespace loid {

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("sampler.chains must be >= 1");
  if (warmup < 0) throw ConfigError("sampler.warmup must be >= 0");
  if (adapt && warmup < 100) throw ConfigError("sampler.warmup must be >= 100 when adaptation is enabled");
  if (draws < 1) throw ConfigError("sampler.draws must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("sampler.target_accept must be in (0, 1)");
  if (max_depth < 1 || max_depth > 30) throw ConfigError("sampler.max_depth must be in [1, 30]");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("sampler.step_size must be positive");
  if (!(max_energy_error > 0.0)) throw ConfigError("sampler.max_energy_error must be positive");
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
  SamplerConfig c;
  if (!j.is_object()) throw ConfigError("sampler config must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "chains") c.chains = v.get<int>();
    else if (key == "warmup") c.warmup = v.get<int>();
    else if (key == "draws") c.draws = v.get<int>();
    else if (key == "target_accept") c.target_accept = v.get<double>();
    else if (key == "max_depth") c.max_depth = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "step_size") c.step_size = v.get<double>();
    else if (key == "adapt") c.adapt = v.get<bool>();
    else if (key == "max_energy_error") c.max_energy_error = v.get<double>();
    else if (key == "parallel") c.parallel = v.get<bool>();
    else throw ConfigError("unknown sampler key '" + key + "'");
  }
  c.validate();
  return c;
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"chains", chains},
          {"warmup", warmup},
          {"draws", draws},
          {"target_accept", target_accept},
          {"max_depth", max_depth},
          {"seed", seed},
          {"step_size", step_size},
          {"adapt", adapt},
          {"max_energy_error", max_energy_error},
          {"parallel", parallel}};
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.logp + 0.5 * (z.p.array().square() * inv_metric.array()).sum();
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Non-finite positions or densities become -inf so the trajectory is
// flagged divergent instead of aborting the chain.
void evaluate(const DensityTarget& target, PhasePoint& z) {
  if (!z.q.allFinite()) {
    z.logp = kNegInf;
    z.grad.setZero(z.q.size());
    return;
  }
  z.logp = target.log_density_gradient(z.q, z.grad);
  if (std::isnan(z.logp) || !z.grad.allFinite()) z.logp = kNegInf;
}

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus, const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

// gamma = 0.1 rather than the customary 0.05: the smaller value lets the
// primal iterates swing widely, and exp(mean log step) then lands well
// below the step that realizes the target acceptance.
class DualAveraging {
 public:
  DualAveraging(double target, double gamma = 0.1, double t0 = 10.0, double kappa = 0.75)
      : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double eps) {
    mu_ = std::log(10.0 * eps);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / gamma_;
    const double x_eta = std::pow(static_cast<double>(counter_), -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  double target_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  long counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

struct TransitionInfo {
  double accept_stat = 0.0;
  int depth = 0;
  bool divergent = false;
  long n_leapfrog = 0;
};

class Chain {
 public:
  Chain(const DensityTarget& target, const SamplerConfig& cfg, std::mt19937_64 rng)
      : target_(target), cfg_(cfg), rng_(std::move(rng)), inv_metric_(Eigen::VectorXd::Ones(target.dim())) {}

  void initialize(const InitFn& init) {
    constexpr int kMaxInitAttempts = 100;
    for (int attempt = 0; attempt < kMaxInitAttempts; ++attempt) {
      z_.q = init(rng_);
      if (z_.q.size() != target_.dim()) throw NumericalError("sampler init returned wrong dimension");
      evaluate(target_, z_);
      if (std::isfinite(z_.logp)) {
        z_.p.setZero(target_.dim());
        return;
      }
    }
    throw NumericalError("sampler could not find an initial point with finite log density");
  }

  Eigen::MatrixXd run(const TransformFn& to_model, Eigen::Index model_dim, ChainStats& stats) {
    eps_ = cfg_.step_size;
    if (cfg_.adapt && cfg_.warmup > 0) warmup();
    else for (int i = 0; i < cfg_.warmup; ++i) transition();

    Eigen::MatrixXd draws(cfg_.draws, model_dim);
    double accept_sum = 0.0;
    double depth_sum = 0.0;
    for (int i = 0; i < cfg_.draws; ++i) {
      const TransitionInfo t = transition();
      accept_sum += t.accept_stat;
      depth_sum += t.depth;
      stats.divergences += t.divergent ? 1 : 0;
      stats.leapfrog_steps += t.n_leapfrog;
      draws.row(i) = to_model ? to_model(z_.q).transpose() : z_.q.transpose();
    }
    stats.step_size = eps_;
    stats.mean_accept = accept_sum / cfg_.draws;
    stats.mean_tree_depth = depth_sum / cfg_.draws;
    stats.inv_metric = inv_metric_;
    return draws;
  }

 private:
  // Step size adaptation throughout warmup. The metric is estimated from
  // the second half minus a terminal buffer, after which the step size is
  // re-initialized and adapted again on the new metric.
  void warmup() {
    const int w = cfg_.warmup;
    const int term = std::min(std::max(w / 10, 25), w / 4);
    const int metric_begin = w / 2;
    const int metric_end = w - term;
    const bool adapt_metric = metric_end - metric_begin >= 10;

    eps_ = find_reasonable_step(eps_);
    DualAveraging da(cfg_.target_accept);
    da.restart(eps_);

    const Eigen::Index n = target_.dim();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(n);
    long count = 0;

    for (int i = 0; i < w; ++i) {
      const TransitionInfo t = transition();
      eps_ = da.learn(t.accept_stat);
      if (!adapt_metric || i < metric_begin || i >= metric_end) continue;
      ++count;
      const Eigen::VectorXd delta = z_.q - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta.cwiseProduct(z_.q - mean);
      if (i == metric_end - 1) {
        const double c = static_cast<double>(count);
        const Eigen::VectorXd var = m2 / (c - 1.0);
        inv_metric_ = (c / (c + 5.0)) * var.array() + 1e-3 * (5.0 / (c + 5.0));
        eps_ = find_reasonable_step(eps_);
        da.restart(eps_);
      }
    }
    eps_ = da.final_step();
  }

  void sample_momentum(PhasePoint& z) {
    for (Eigen::Index k = 0; k < z.q.size(); ++k) z.p[k] = normal_(rng_) / std::sqrt(inv_metric_[k]);
  }

  double find_reasonable_step(double eps) {
    const PhasePoint start = z_;
    const double log_target = std::log(0.8);
    auto energy_change = [&](double step) {
      z_ = start;
      z_.p.resize(z_.q.size());
      sample_momentum(z_);
      const double h0 = hamiltonian(z_, inv_metric_);
      leapfrog(target_, z_, step, inv_metric_);
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      return h0 - h;
    };
    const int direction = energy_change(eps) > log_target ? 1 : -1;
    while (true) {
      const double delta = energy_change(eps);
      if (direction == 1 && !(delta > log_target)) break;
      if (direction == -1 && !(delta < log_target)) break;
      eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
      if (eps > 1e7) throw NumericalError("step size search diverged: posterior is improper or flat");
      if (eps == 0.0) throw NumericalError("step size search collapsed to zero");
    }
    z_ = start;
    return eps;
  }

  TransitionInfo transition() {
    TransitionInfo info;
    z_.p.resize(z_.q.size());
    sample_momentum(z_);

    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    const Eigen::VectorXd p_sharp0 = inv_metric_.cwiseProduct(z_.p);
    Eigen::VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    Eigen::VectorXd ps_fwd_fwd = p_sharp0, ps_fwd_bck = p_sharp0, ps_bck_fwd = p_sharp0, ps_bck_bck = p_sharp0;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_, inv_metric_);
    double sum_metro_prob = 0.0;
    divergent_ = false;

    const Eigen::Index n = z_.q.size();
    while (info.depth < cfg_.max_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(n);
      bool valid = false;
      double log_sum_weight_subtree = kNegInf;

      if (unit_(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        z_ = z_fwd;
        valid = build_tree(info.depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           info.n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        z_ = z_bck;
        valid = build_tree(info.depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                           info.n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid) break;
      ++info.depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (unit_(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && no_u_turn(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && no_u_turn(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }

    info.divergent = divergent_;
    info.accept_stat = info.n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(info.n_leapfrog) : 0.0;
    z_ = z_sample;
    return info;
  }

  // Extends the trajectory from z_ by 2^depth leapfrog steps in direction
  // `sign`, multinomially sampling a proposal. Returns false on divergence
  // or a U-turn inside the subtree.
  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  long& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(target_, z_, sign * eps_, inv_metric_);
      ++n_leapfrog;
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > cfg_.max_energy_error) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = inv_metric_.cwiseProduct(z_.p);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const Eigen::Index n = z_.q.size();
    double log_sum_weight_init = kNegInf;
    Eigen::VectorXd p_init_end(n), p_sharp_init_end(n);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = kNegInf;
    Eigen::VectorXd p_final_beg(n), p_sharp_final_beg(n);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, log_sum_weight_final, sum_metro_prob)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (unit_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  const DensityTarget& target_;
  const SamplerConfig& cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  Eigen::VectorXd inv_metric_;
  PhasePoint z_;
  double eps_ = 0.1;
  bool divergent_ = false;
};

}  // namespace

void leapfrog(const DensityTarget& target, PhasePoint& z, double eps, const Eigen::VectorXd& inv_metric) {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_metric.cwiseProduct(z.p);
  evaluate(target, z);
  z.p += 0.5 * eps * z.grad;
}

PosteriorDraws nuts_sample(const DensityTarget& target, const SamplerConfig& cfg, const InitFn& init,
                           const TransformFn& to_model, std::vector<std::string> names) {
  cfg.validate();
  const Eigen::Index model_dim = to_model ? to_model(Eigen::VectorXd::Zero(target.dim())).size() : target.dim();
  if (names.empty()) {
    for (Eigen::Index k = 0; k < model_dim; ++k) names.push_back("theta" + std::to_string(k));
  }
  if (static_cast<Eigen::Index>(names.size()) != model_dim) throw NumericalError("sampler: parameter name count mismatch");

  PosteriorDraws out;
  out.names = std::move(names);
  out.chains.resize(static_cast<std::size_t>(cfg.chains));
  out.stats.resize(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));

  auto run_chain = [&](int c) {
    const auto idx = static_cast<std::size_t>(c);
    try {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(c)};
      Chain chain(target, cfg, std::mt19937_64(seq));
      chain.initialize(init);
      out.chains[idx] = chain.run(to_model, model_dim, out.stats[idx]);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  };

  if (cfg.parallel && cfg.chains > 1) {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(cfg.chains));
    for (int c = 0; c < cfg.chains; ++c) threads.emplace_back(run_chain, c);
  } else {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

PosteriorDraws nuts_sample(const LogisticPosterior& posterior, const SamplerConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& p : posterior.priors().coefficients) names.push_back(p.feature);
  names.emplace_back("_intercept");
  return nuts_sample(
      posterior, cfg, [&](std::mt19937_64& rng) { return posterior.initial_point(rng); },
      [&](const Eigen::VectorXd& theta) { return posterior.constrain(theta); }, std::move(names));
}

Eigen::Index PosteriorDraws::total_draws() const {
  Eigen::Index n = 0;
  for (const auto& c : chains) n += c.rows();
  return n;
}

Eigen::MatrixXd PosteriorDraws::stacked() const {
  Eigen::MatrixXd all(total_draws(), dim());
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    all.middleRows(row, c.rows()) = c;
    row += c.rows();
  }
  return all;
}

Eigen::VectorXd PosteriorDraws::mean() const { return stacked().colwise().mean().transpose(); }

Eigen::VectorXd PosteriorDraws::stddev() const {
  const Eigen::MatrixXd all = stacked();
  const Eigen::RowVectorXd m = all.colwise().mean();
  const double n = static_cast<double>(all.rows());
  return ((all.rowwise() - m).array().square().colwise().sum() / (n - 1.0)).sqrt().transpose();
}

double PosteriorDraws::mean_accept() const {
  double s = 0.0;
  for (const auto& st : stats) s += st.mean_accept;
  return stats.empty() ? 0.0 : s / static_cast<double>(stats.size());
}

int PosteriorDraws::divergences() const {
  int s = 0;
  for (const auto& st : stats) s += st.divergences;
  return s;
}

namespace {

std::vector<Eigen::VectorXd> column_chains(const std::vector<Eigen::MatrixXd>& chains, Eigen::Index k) {
  std::vector<Eigen::VectorXd> cols;
  cols.reserve(chains.size());
  for (const auto& c : chains) cols.emplace_back(c.col(k));
  return cols;
}

double sample_variance(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

Eigen::VectorXd PosteriorDraws::ess() const {
  Eigen::VectorXd out(dim());
  for (Eigen::Index k = 0; k < dim(); ++k) out[k] = effective_sample_size(column_chains(chains, k));
  return out;
}

Eigen::VectorXd PosteriorDraws::rhat() const {
  Eigen::VectorXd out(dim());
  for (Eigen::Index k = 0; k < dim(); ++k) out[k] = split_rhat(column_chains(chains, k));
  return out;
}

nlohmann::ordered_json PosteriorDraws::diagnostics_json() const {
  nlohmann::ordered_json j;
  j["n_chains"] = chains.size();
  j["draws_per_chain"] = chains.empty() ? 0 : chains.front().rows();
  j["mean_accept"] = mean_accept();
  j["divergences"] = divergences();
  nlohmann::ordered_json per_chain = nlohmann::ordered_json::array();
  for (const auto& st : stats) {
    per_chain.push_back({{"step_size", st.step_size},
                         {"mean_accept", st.mean_accept},
                         {"divergences", st.divergences},
                         {"mean_tree_depth", st.mean_tree_depth},
                         {"leapfrog_steps", st.leapfrog_steps}});
  }
  j["chains"] = per_chain;
  const Eigen::VectorXd e = ess();
  const Eigen::VectorXd r = rhat();
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (Eigen::Index k = 0; k < dim(); ++k) {
    const auto& name = names[static_cast<std::size_t>(k)];
    params[name] = {{"ess", std::isfinite(e[k]) ? nlohmann::ordered_json(e[k]) : nlohmann::ordered_json(nullptr)},
                    {"rhat", std::isfinite(r[k]) ? nlohmann::ordered_json(r[k]) : nlohmann::ordered_json(nullptr)}};
  }
  j["parameters"] = params;
  return j;
}

void PosteriorDraws::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write draws to " + path);
  out << "chain,draw";
  for (const auto& n : names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (Eigen::Index i = 0; i < chains[c].rows(); ++i) {
      out << c << ',' << i;
      for (Eigen::Index k = 0; k < chains[c].cols(); ++k) out << ',' << chains[c](i, k);
      out << '\n';
    }
  }
}

void PosteriorDraws::write_diagnostics(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write diagnostics to " + path);
  out << diagnostics_json().dump(2) << '\n';
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw NumericalError("ess: chains differ in length");
  }
  if (n < 4) return std::numeric_limits<double>::quiet_NaN();
  const auto m = static_cast<double>(chains.size());

  std::vector<Eigen::VectorXd> centered;
  Eigen::VectorXd chain_mean(chains.size()), chain_var(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    chain_mean[static_cast<Eigen::Index>(c)] = chains[c].mean();
    centered.emplace_back(chains[c].array() - chains[c].mean());
    chain_var[static_cast<Eigen::Index>(c)] = sample_variance(chains[c]);
  }
  // Biased autocovariance at `lag`, averaged across chains.
  auto mean_acov = [&](Eigen::Index lag) {
    double s = 0.0;
    for (const auto& x : centered) s += x.head(n - lag).dot(x.tail(n - lag)) / static_cast<double>(n);
    return s / m;
  };

  const double mean_var = chain_var.mean();
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (chains.size() > 1) var_plus += sample_variance(chain_mean);
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  auto rho_at = [&](Eigen::Index lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  Eigen::Index t = 1;
  while (t < n - 5 && rho_even + rho_odd > 0.0) {
    rho_even = rho_at(t + 1);
    rho_odd = rho_at(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[static_cast<std::size_t>(t + 1)] = rho_even;
      rho[static_cast<std::size_t>(t + 2)] = rho_odd;
    }
    t += 2;
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0.0) rho[static_cast<std::size_t>(max_t + 1)] = rho_even;

  // Initial monotone sequence.
  for (Eigen::Index s = 1; s <= max_t - 2; s += 2) {
    const auto i = static_cast<std::size_t>(s);
    if (rho[i + 1] + rho[i + 2] > rho[i - 1] + rho[i]) {
      rho[i + 1] = (rho[i - 1] + rho[i]) / 2.0;
      rho[i + 2] = rho[i + 1];
    }
  }
  double sum = 0.0;
  for (Eigen::Index s = 0; s <= max_t; ++s) sum += rho[static_cast<std::size_t>(s)];
  const double total = m * static_cast<double>(n);
  double tau = -1.0 + 2.0 * sum + rho[static_cast<std::size_t>(max_t + 1)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    if (half < 2) return std::numeric_limits<double>::quiet_NaN();
    halves.emplace_back(c.head(half));
    halves.emplace_back(c.tail(half));
  }
  const Eigen::Index n = halves.front().size();
  for (const auto& h : halves) {
    if (h.size() != n) throw NumericalError("rhat: chains differ in length");
  }
  Eigen::VectorXd means(static_cast<Eigen::Index>(halves.size())), vars(static_cast<Eigen::Index>(halves.size()));
  for (std::size_t j = 0; j < halves.size(); ++j) {
    means[static_cast<Eigen::Index>(j)] = halves[j].mean();
    vars[static_cast<Eigen::Index>(j)] = sample_variance(halves[j]);
  }
  const double within = vars.mean();
  const double between = static_cast<double>(n) * sample_variance(means);
  if (!(within > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * within + between / static_cast<double>(n);
  return std::sqrt(var_plus / within);
}

}  // namespace loid
