#include "loid/inference/logistic.hpp"

#include <cmath>
#include <numbers>

#include "loid/error.hpp"

namespace loid {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

Eigen::VectorXd Coefficients::packed() const {
  Eigen::VectorXd v(beta.size() + 1);
  v.head(beta.size()) = beta;
  v[beta.size()] = intercept;
  return v;
}

Coefficients Coefficients::from_packed(const Eigen::VectorXd& v) {
  if (v.size() < 1) throw NumericalError("packed coefficient vector is empty");
  return {v.head(v.size() - 1), v[v.size() - 1]};
}

namespace {

// Largest initial spread used for very wide priors.
constexpr double kMaxInitScale = 2.0;

}  // namespace

LogisticPosterior::LogisticPosterior(Eigen::MatrixXd x, Eigen::VectorXd y, PriorSet priors)
    : x_(std::move(x)), y_(std::move(y)), priors_(std::move(priors)) {
  if (x_.rows() != y_.size()) throw NumericalError("posterior: row count differs from label count");
  if (static_cast<Eigen::Index>(priors_.d()) != x_.cols()) {
    throw NumericalError("posterior: " + std::to_string(priors_.d()) + " coefficient priors for " +
                         std::to_string(x_.cols()) + " features");
  }
  for (const auto& p : priors_.coefficients) p.validate();
  priors_.intercept.validate();
  if (!x_.allFinite()) throw NumericalError("posterior: design matrix has non-finite entries");
}

LogisticPosterior::LogisticPosterior(const TabularDataset& train, const PriorSet& priors)
    : LogisticPosterior(train.x, train.y, priors) {}

const FeaturePrior& LogisticPosterior::prior(Eigen::Index k) const {
  return k == x_.cols() ? priors_.intercept : priors_.coefficients[static_cast<std::size_t>(k)];
}

Eigen::VectorXd LogisticPosterior::constrain(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd coef = theta;
  for (Eigen::Index k = 0; k < dim(); ++k) {
    const auto& p = prior(k);
    if (p.family == PriorFamily::uniform) coef[k] = p.lower + (p.upper - p.lower) * sigmoid(theta[k]);
  }
  return coef;
}

Eigen::VectorXd LogisticPosterior::unconstrain(const Eigen::VectorXd& coef) const {
  Eigen::VectorXd theta = coef;
  for (Eigen::Index k = 0; k < dim(); ++k) {
    const auto& p = prior(k);
    if (p.family == PriorFamily::uniform) {
      const double s = (coef[k] - p.lower) / (p.upper - p.lower);
      if (!(s > 0.0 && s < 1.0)) throw NumericalError("coefficient outside its uniform prior support");
      theta[k] = logit(s);
    }
  }
  return theta;
}

Eigen::VectorXd LogisticPosterior::initial_point(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  Eigen::VectorXd theta(dim());
  for (Eigen::Index k = 0; k < dim(); ++k) {
    const auto& p = prior(k);
    if (p.family == PriorFamily::normal) {
      theta[k] = p.mu + std::min(p.sigma, kMaxInitScale) * normal(rng);
    } else {
      // Uniform draw on the support, mapped to the unconstrained line.
      const double s = std::clamp(unit(rng), 1e-6, 1.0 - 1e-6);
      theta[k] = logit(s);
    }
    theta[k] += jitter(rng);
  }
  return theta;
}

double LogisticPosterior::log_likelihood(const Eigen::VectorXd& coef) const {
  const Eigen::Index d = x_.cols();
  const Eigen::VectorXd z = (x_ * coef.head(d)).array() + coef[d];
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    ll += y_[i] > 0.5 ? log_sigmoid(z[i]) : log_sigmoid(-z[i]);
  }
  return ll;
}

double LogisticPosterior::log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  if (theta.size() != dim()) throw NumericalError("posterior: parameter dimension mismatch");
  if (!theta.allFinite()) throw NumericalError("posterior: non-finite coefficients");
  const Eigen::Index d = x_.cols();
  const Eigen::VectorXd coef = constrain(theta);
  const Eigen::VectorXd z = (x_ * coef.head(d)).array() + coef[d];

  double lp = 0.0;
  Eigen::VectorXd resid(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const bool pos = y_[i] > 0.5;
    lp += pos ? log_sigmoid(z[i]) : log_sigmoid(-z[i]);
    resid[i] = (pos ? 1.0 : 0.0) - sigmoid(z[i]);
  }
  grad.resize(dim());
  grad.head(d) = x_.transpose() * resid;
  grad[d] = resid.sum();

  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index k = 0; k < dim(); ++k) {
    const auto& p = prior(k);
    if (p.family == PriorFamily::normal) {
      const double r = (coef[k] - p.mu) / p.sigma;
      lp += -0.5 * r * r - std::log(p.sigma) - kHalfLog2Pi;
      grad[k] -= r / p.sigma;
    } else {
      // Uniform density and Jacobian combine to log s + log(1 - s).
      const double u = theta[k];
      const double s = sigmoid(u);
      lp += log_sigmoid(u) + log_sigmoid(-u);
      grad[k] = grad[k] * (p.upper - p.lower) * s * (1.0 - s) + (1.0 - 2.0 * s);
    }
  }
  return lp;
}

double LogisticPosterior::log_density(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd g;
  return log_density_gradient(theta, g);
}

double log_posterior(const Coefficients& c, const TabularDataset& train, const PriorSet& priors) {
  if (c.d() != train.d()) throw NumericalError("log_posterior: coefficient dimension mismatch");
  return LogisticPosterior(train, priors).log_density(c.packed());
}

Eigen::VectorXd grad_log_posterior(const Coefficients& c, const TabularDataset& train, const PriorSet& priors) {
  if (c.d() != train.d()) throw NumericalError("grad_log_posterior: coefficient dimension mismatch");
  Eigen::VectorXd g;
  LogisticPosterior(train, priors).log_density_gradient(c.packed(), g);
  return g;
}

}  // namespace loid
