#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "loid/dataset.hpp"
#include "loid/inference/logistic.hpp"
#include "loid/priors.hpp"

namespace loid {

struct NewtonOptions {
  int max_iterations = 100;
  // Converged once the gradient max-norm falls below this.
  double grad_tol = 1e-8;
  int max_halvings = 50;
};

// Gaussian approximation at the posterior mode. Requires Normal priors.
struct LaplaceFit {
  Coefficients mode;
  // Inverse of the negative log-posterior Hessian at the mode, over
  // (beta..., intercept).
  Eigen::MatrixXd covariance;
  int iterations = 0;
  double log_posterior = 0.0;
};

LaplaceFit laplace_fit(const TabularDataset& train, const PriorSet& priors, const NewtonOptions& opts = {});

// Penalized maximum likelihood: ridge on the coefficients only, intercept
// unpenalized.
Coefficients mle_fit(const TabularDataset& train, double ridge = 1e-6, const NewtonOptions& opts = {});

}  // namespace loid
