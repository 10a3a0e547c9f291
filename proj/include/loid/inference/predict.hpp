#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "loid/inference/laplace.hpp"
#include "loid/inference/logistic.hpp"
#include "loid/inference/nuts.hpp"

namespace loid {

Eigen::VectorXd predict_proba(const Coefficients& c, const Eigen::MatrixXd& x);
// Posterior predictive mean: sigmoid averaged over every retained draw.
Eigen::VectorXd predict_proba(const PosteriorDraws& draws, const Eigen::MatrixXd& x);
// Monte Carlo average over `samples` Gaussian draws from the Laplace fit.
Eigen::VectorXd predict_proba(const LaplaceFit& fit, const Eigen::MatrixXd& x, std::uint64_t seed,
                              int samples = 1000);

}  // namespace loid
