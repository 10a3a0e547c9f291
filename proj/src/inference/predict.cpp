#include "loid/inference/predict.hpp"

#include <algorithm>
#include <random>

#include "loid/error.hpp"

namespace loid {

namespace {

// Accumulates sigmoid(x * beta + intercept) over rows of `coefs`
// (beta..., intercept), in blocks to bound memory on large datasets.
Eigen::VectorXd mean_probability(const Eigen::MatrixXd& coefs, const Eigen::MatrixXd& x) {
  const Eigen::Index d = x.cols();
  if (coefs.cols() != d + 1) throw NumericalError("predict: coefficient dimension does not match features");
  if (coefs.rows() == 0) throw NumericalError("predict: no coefficient draws");
  constexpr Eigen::Index kBlock = 256;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.rows());
  for (Eigen::Index s = 0; s < coefs.rows(); s += kBlock) {
    const Eigen::Index b = std::min(kBlock, coefs.rows() - s);
    Eigen::MatrixXd z = x * coefs.block(s, 0, b, d).transpose();
    z.rowwise() += coefs.col(d).segment(s, b).transpose();
    acc += z.unaryExpr([](double v) { return sigmoid(v); }).rowwise().sum();
  }
  return acc / static_cast<double>(coefs.rows());
}

}  // namespace

Eigen::VectorXd predict_proba(const Coefficients& c, const Eigen::MatrixXd& x) {
  return mean_probability(c.packed().transpose(), x);
}

Eigen::VectorXd predict_proba(const PosteriorDraws& draws, const Eigen::MatrixXd& x) {
  return mean_probability(draws.stacked(), x);
}

Eigen::VectorXd predict_proba(const LaplaceFit& fit, const Eigen::MatrixXd& x, std::uint64_t seed, int samples) {
  if (samples < 1) throw ConfigError("predictive sample count must be >= 1");
  const Eigen::LLT<Eigen::MatrixXd> llt(fit.covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("Laplace covariance is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  const Eigen::VectorXd mode = fit.mode.packed();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd coefs(samples, mode.size());
  Eigen::VectorXd z(mode.size());
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
    coefs.row(s) = (mode + lower * z).transpose();
  }
  return mean_probability(coefs, x);
}

}  // namespace loid
