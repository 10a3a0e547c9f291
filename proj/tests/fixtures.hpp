#pragma once

// Small datasets and independent numerical oracles shared by the unit tests
// and the acceptance runner. Oracles deliberately avoid library code paths.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>
#include <json.hpp>

#include "loid/dataset.hpp"
#include "loid/priors.hpp"

namespace loid::testing {

// Fresh directory under the system temp dir, unique per call within a process.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("loid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream(path, std::ios::binary) << content;
  return path.string();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline TabularDataset make_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::string& name = "fixture") {
  TabularDataset ds;
  ds.name = name;
  ds.x = x;
  ds.y = y;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    FeatureMeta f;
    f.name = "x" + std::to_string(j);
    f.source_column = f.name;
    ds.features.push_back(f);
  }
  ds.target_description = "outcome";
  return ds;
}

// Rows ~ N(0, 1), labels from a logistic model with coefficients `beta` and
// intercept `b0`.
inline TabularDataset random_logistic(Eigen::Index n, const Eigen::VectorXd& beta, double b0, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd x(n, beta.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < beta.size(); ++j) x(i, j) = normal(rng);
    const double z = x.row(i).dot(beta) + b0;
    y[i] = unit(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1.0 : 0.0;
  }
  return make_dataset(x, y);
}

inline PriorSet normal_priors(Eigen::Index d, double mu, double sigma, double intercept_sigma = 1.0) {
  PriorSet ps;
  for (Eigen::Index j = 0; j < d; ++j) ps.coefficients.push_back(FeaturePrior::normal("x" + std::to_string(j), mu, sigma));
  ps.intercept = FeaturePrior::normal("_intercept", mu, intercept_sigma);
  return ps;
}

// Term-by-term log posterior for Normal priors, written without the
// vectorized path: y log p + (1 - y) log(1 - p) using log1p(exp) forms.
inline double direct_log_posterior(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                   double b0, const PriorSet& priors) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double z = b0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) z += x(i, j) * beta[j];
    // log sigma(z) = -log(1 + e^-z); log(1 - sigma(z)) = -log(1 + e^z)
    const double log_p = z > 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
    const double log_q = z > 0 ? -z - std::log1p(std::exp(-z)) : -std::log1p(std::exp(z));
    total += y[i] * log_p + (1.0 - y[i]) * log_q;
  }
  auto log_normal = [](double v, double mu, double sigma) {
    const double r = (v - mu) / sigma;
    return -0.5 * r * r - std::log(sigma) - 0.5 * std::log(2.0 * 3.14159265358979323846);
  };
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const auto& p = priors.coefficients[static_cast<std::size_t>(j)];
    total += log_normal(beta[j], p.mu, p.sigma);
  }
  total += log_normal(b0, priors.intercept.mu, priors.intercept.sigma);
  return total;
}

struct GridSlopeSummary {
  double mean = 0.0;
  double mode = 0.0;
};

// Posterior mean and mode of the slope for a 1-feature model with
// intercept, by midpoint quadrature over (beta, intercept) in [-10, 10]^2.
inline GridSlopeSummary grid_posterior_slope(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PriorSet& priors,
                                             int cells = 801) {
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / cells;
  std::vector<double> logw;
  std::vector<double> slope;
  logw.reserve(static_cast<std::size_t>(cells) * cells);
  double max_logw = -INFINITY;
  GridSlopeSummary out;
  for (int a = 0; a < cells; ++a) {
    const double b = lo + (a + 0.5) * h;
    for (int c = 0; c < cells; ++c) {
      const double b0 = lo + (c + 0.5) * h;
      const double lw = direct_log_posterior(x, y, Eigen::VectorXd::Constant(1, b), b0, priors);
      logw.push_back(lw);
      slope.push_back(b);
      if (lw > max_logw) {
        max_logw = lw;
        out.mode = b;
      }
    }
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    const double w = std::exp(logw[i] - max_logw);
    num += w * slope[i];
    den += w;
  }
  out.mean = num / den;
  return out;
}

// Golden-section maximization of a unimodal function on [lo, hi].
inline double golden_section_max(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - g * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + g * (b - a); fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Central finite-difference gradient.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& at, double h = 1e-5) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    Eigen::VectorXd up = at, down = at;
    up[k] += h;
    down[k] -= h;
    g[k] = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor so near-zero components compare sanely.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

// Brute-force AUC: fraction of (positive, negative) pairs ranked correctly,
// ties counted as half. Returned as (twice the concordant count, pairs).
inline std::pair<long long, long long> brute_force_auc_counts(const Eigen::VectorXd& score, const Eigen::VectorXd& y) {
  long long twice = 0, pairs = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] < 0.5) continue;
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      if (y[j] > 0.5) continue;
      ++pairs;
      if (score[i] > score[j]) twice += 2;
      else if (score[i] == score[j]) twice += 1;
    }
  }
  return {twice, pairs};
}

// Kolmogorov-Smirnov distance between a sample and Uniform(lo, hi).
inline double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double cdf = std::clamp((v[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}


// Synthetic covariate-shift benchmark written to disk. The outcome depends
// on `shift` only above its median, so a model trained on the lower half
// (tail_0_50) misses that effect while a full-data fit sees it.
struct ShiftFixture {
  std::string csv_path;
  std::string dataset_config_path;
  std::string mock_fixture_path;
  nlohmann::json mock_fixture;
};

inline ShiftFixture write_shift_fixture(const std::filesystem::path& dir, int n = 400, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::string csv = "signal,shift,noise,label\n";
  char buf[160];
  for (int i = 0; i < n; ++i) {
    const double signal = normal(rng), shift = normal(rng), noise = normal(rng);
    const double z = 1.2 * signal + 3.0 * std::max(0.0, shift) - 0.8;
    const int label = unit(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0;
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%s\n", signal, shift, noise, label ? "yes" : "no");
    csv += buf;
  }
  ShiftFixture f;
  f.csv_path = write_file(dir / "shift.csv", csv);
  const nlohmann::json dataset = {{"name", "shift"},
                                  {"csv", "shift.csv"},
                                  {"label_column", "label"},
                                  {"label_mapping", {{"yes", 1}, {"no", 0}}},
                                  {"target_description", "the outcome"},
                                  {"columns", {{"signal", {{"description", "signal strength"}}}}}};
  f.dataset_config_path = write_file(dir / "shift.json", dataset.dump(2));
  // The first template ("The impact of ...") answers differently from the
  // rest, so elicited spreads are nonzero.
  f.mock_fixture = {{"model_id", "mock-lm"},
                    {"entries",
                     {{{"match", {"signal strength", "impact"}}, {"positive", 0.6}, {"negative", 0.2}},
                      {{"match", "signal strength"}, {"positive", 0.5}, {"negative", 0.25}},
                      {{"match", "shift"}, {"positive", 0.45}, {"negative", 0.3}},
                      {{"match", "noise"}, {"positive", 0.3}, {"negative", 0.3}}}}};
  f.mock_fixture_path = write_file(dir / "mock.json", f.mock_fixture.dump(2));
  return f;
}

}  // namespace loid::testing
