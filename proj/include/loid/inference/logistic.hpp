#pragma once

#include <Eigen/Dense>
#include <random>

#include "loid/dataset.hpp"
#include "loid/priors.hpp"

namespace loid {

double sigmoid(double z);
// log(sigmoid(z)) without overflow for large |z|.
double log_sigmoid(double z);

struct Coefficients {
  Eigen::VectorXd beta;
  double intercept = 0.0;

  Eigen::Index d() const { return beta.size(); }
  // (beta_1, ..., beta_d, intercept)
  Eigen::VectorXd packed() const;
  static Coefficients from_packed(const Eigen::VectorXd& v);
};

// Anything the sampler can explore: a log density with gradient over R^n.
class DensityTarget {
 public:
  virtual ~DensityTarget() = default;
  virtual Eigen::Index dim() const = 0;
  // Returns log p(theta) and writes its gradient. Must be safe to call
  // concurrently from several threads.
  virtual double log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const = 0;
};

// Bayesian logistic regression posterior over theta = (beta, intercept).
// Coordinates with Normal priors are sampled directly. Coordinates with
// Uniform(a, b) priors live on the real line as u with
// beta = a + (b - a) * sigmoid(u); the log-Jacobian is part of the density.
class LogisticPosterior : public DensityTarget {
 public:
  // `priors` is positional: one per column of x, plus the intercept.
  LogisticPosterior(Eigen::MatrixXd x, Eigen::VectorXd y, PriorSet priors);
  LogisticPosterior(const TabularDataset& train, const PriorSet& priors);

  Eigen::Index dim() const override { return x_.cols() + 1; }
  double log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const override;
  double log_density(const Eigen::VectorXd& theta) const;

  double log_likelihood(const Eigen::VectorXd& coef) const;
  // Unconstrained theta -> model coefficients (beta, intercept).
  Eigen::VectorXd constrain(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd unconstrain(const Eigen::VectorXd& coef) const;
  // Prior draw with a uniform +-0.1 jitter, returned in unconstrained space.
  Eigen::VectorXd initial_point(std::mt19937_64& rng) const;

  const PriorSet& priors() const { return priors_; }
  const FeaturePrior& prior(Eigen::Index k) const;

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  PriorSet priors_;
};

// Log posterior at `c` (uniform-prior coordinates given in unconstrained
// form), including normalizing constants of the Normal priors.
double log_posterior(const Coefficients& c, const TabularDataset& train, const PriorSet& priors);
Eigen::VectorXd grad_log_posterior(const Coefficients& c, const TabularDataset& train, const PriorSet& priors);

}  // namespace loid
