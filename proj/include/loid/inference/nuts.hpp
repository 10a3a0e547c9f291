#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "loid/inference/logistic.hpp"

namespace loid {

struct SamplerConfig {
  int chains = 4;
  int warmup = 500;
  int draws = 1000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 0;
  // Step size used as-is when adaptation is off, and as the starting guess otherwise.
  double step_size = 0.1;
  bool adapt = true;
  // Energy error above which a trajectory is flagged divergent.
  double max_energy_error = 1000.0;
  bool parallel = true;

  void validate() const;
  static SamplerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ChainStats {
  double step_size = 0.0;
  double mean_accept = 0.0;
  int divergences = 0;
  double mean_tree_depth = 0.0;
  long long leapfrog_steps = 0;
  Eigen::VectorXd inv_metric;
};

// Post-warmup draws in model space, one (draws x dim) matrix per chain.
struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;
  std::vector<ChainStats> stats;

  Eigen::Index dim() const { return chains.empty() ? 0 : chains.front().cols(); }
  Eigen::Index total_draws() const;
  Eigen::MatrixXd stacked() const;
  Eigen::VectorXd mean() const;
  Eigen::VectorXd stddev() const;
  double mean_accept() const;
  int divergences() const;

  // Per-parameter effective sample size and split R-hat.
  Eigen::VectorXd ess() const;
  Eigen::VectorXd rhat() const;

  nlohmann::ordered_json diagnostics_json() const;
  // CSV with columns chain,draw,<names...>; diagnostics go to a JSON sidecar.
  void write_csv(const std::string& path) const;
  void write_diagnostics(const std::string& path) const;
};

// Position/momentum state with cached log density and gradient.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);
void leapfrog(const DensityTarget& target, PhasePoint& z, double eps, const Eigen::VectorXd& inv_metric);

using InitFn = std::function<Eigen::VectorXd(std::mt19937_64&)>;
using TransformFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// No-U-Turn sampler with multinomial trajectory sampling, diagonal metric
// and dual-averaging step-size adaptation. Chains use independent streams
// derived from (seed, chain index), so results do not depend on threading.
PosteriorDraws nuts_sample(const DensityTarget& target, const SamplerConfig& cfg, const InitFn& init,
                           const TransformFn& to_model = {}, std::vector<std::string> names = {});

// Convenience overload for the logistic posterior: prior-based init,
// draws reported as (beta..., intercept).
PosteriorDraws nuts_sample(const LogisticPosterior& posterior, const SamplerConfig& cfg);

// Multi-chain effective sample size (Geyer initial monotone sequence) and
// split R-hat for one parameter; each vector holds one chain.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);
double split_rhat(const std::vector<Eigen::VectorXd>& chains);

}  // namespace loid
