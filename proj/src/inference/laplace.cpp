#include "loid/inference/laplace.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "loid/error.hpp"

namespace loid {

namespace {

// Gaussian penalty 0.5 * precision_k * (theta_k - center_k)^2 on (beta..., intercept).
struct Penalty {
  Eigen::VectorXd precision;
  Eigen::VectorXd center;
};

Eigen::MatrixXd with_intercept_column(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  return a;
}

double objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Penalty& pen, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd z = a * theta;
  double f = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) f += y[i] > 0.5 ? log_sigmoid(z[i]) : log_sigmoid(-z[i]);
  return f - 0.5 * (pen.precision.array() * (theta - pen.center).array().square()).sum();
}

std::string describe_min_eigenvalue(const Eigen::MatrixXd& h) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
  std::ostringstream os;
  os << "Hessian is not positive definite (smallest eigenvalue " << eig.eigenvalues().minCoeff() << ")";
  return os.str();
}

struct NewtonResult {
  Eigen::VectorXd theta;
  Eigen::MatrixXd neg_hessian;
  int iterations = 0;
};

// Damped Newton ascent on the penalized log-likelihood.
NewtonResult newton(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Penalty& pen, const NewtonOptions& opts) {
  if (x.rows() != y.size()) throw NumericalError("fit: row count differs from label count");
  if (!x.allFinite()) throw NumericalError("fit: design matrix has non-finite entries");
  const Eigen::MatrixXd a = with_intercept_column(x);

  NewtonResult r;
  r.theta = pen.center;
  double f = objective(a, y, pen, r.theta);
  for (int it = 0; it <= opts.max_iterations; ++it) {
    const Eigen::VectorXd z = a * r.theta;
    Eigen::VectorXd resid(z.size()), w(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double p = sigmoid(z[i]);
      resid[i] = (y[i] > 0.5 ? 1.0 : 0.0) - p;
      w[i] = p * (1.0 - p);
    }
    const Eigen::VectorXd grad = a.transpose() * resid - pen.precision.cwiseProduct(r.theta - pen.center);
    r.neg_hessian = a.transpose() * w.asDiagonal() * a;
    r.neg_hessian.diagonal() += pen.precision;
    r.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) return r;
    if (it == opts.max_iterations) break;

    const Eigen::LLT<Eigen::MatrixXd> llt(r.neg_hessian);
    if (llt.info() != Eigen::Success) throw NumericalError(describe_min_eigenvalue(r.neg_hessian));
    const Eigen::VectorXd step = llt.solve(grad);

    // Near the optimum the predicted gain drops below the rounding noise
    // of f, so accept changes within that noise.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = r.theta + t * step;
      if (cand == r.theta) break;
      const double f_cand = objective(a, y, pen, cand);
      if (std::isfinite(f_cand) && f_cand >= f - slack) {
        r.theta = cand;
        f = f_cand;
        improved = true;
        break;
      }
    }
    if (!improved) {
      // Accept a stationary point whose Newton decrement is at rounding level.
      if (grad.dot(step) <= 1e-14 * (1.0 + std::abs(f))) return r;
      throw NumericalError("Newton line search failed after " + std::to_string(opts.max_halvings) + " halvings");
    }
  }
  throw NumericalError("Newton did not converge in " + std::to_string(opts.max_iterations) + " iterations");
}

}  // namespace

LaplaceFit laplace_fit(const TabularDataset& train, const PriorSet& priors, const NewtonOptions& opts) {
  if (static_cast<Eigen::Index>(priors.d()) != train.d()) {
    throw NumericalError("laplace: " + std::to_string(priors.d()) + " priors for " + std::to_string(train.d()) +
                         " features");
  }
  if (!priors.all_normal()) throw ConfigError("laplace approximation requires Normal priors on every coefficient");
  const Eigen::Index k = train.d() + 1;
  Penalty pen{Eigen::VectorXd(k), Eigen::VectorXd(k)};
  for (Eigen::Index j = 0; j < k; ++j) {
    const FeaturePrior& p = j < train.d() ? priors.coefficients[static_cast<std::size_t>(j)] : priors.intercept;
    p.validate();
    pen.precision[j] = 1.0 / (p.sigma * p.sigma);
    pen.center[j] = p.mu;
  }
  const NewtonResult r = newton(train.x, train.y, pen, opts);
  const Eigen::LLT<Eigen::MatrixXd> llt(r.neg_hessian);
  if (llt.info() != Eigen::Success) throw NumericalError(describe_min_eigenvalue(r.neg_hessian));

  LaplaceFit fit;
  fit.mode = Coefficients::from_packed(r.theta);
  fit.covariance = llt.solve(Eigen::MatrixXd::Identity(k, k));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  fit.iterations = r.iterations;
  fit.log_posterior = LogisticPosterior(train, priors).log_density(r.theta);
  return fit;
}

Coefficients mle_fit(const TabularDataset& train, double ridge, const NewtonOptions& opts) {
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be non-negative");
  if (!train.has_both_classes()) throw NumericalError("mle: training data contains a single class");
  const Eigen::Index k = train.d() + 1;
  Penalty pen{Eigen::VectorXd::Constant(k, ridge), Eigen::VectorXd::Zero(k)};
  pen.precision[k - 1] = 0.0;
  return Coefficients::from_packed(newton(train.x, train.y, pen, opts).theta);
}

}  // namespace loid
