#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "loid/error.hpp"
#include "loid/inference/laplace.hpp"
#include "loid/inference/nuts.hpp"

using namespace loid;
using namespace loid::testing;

namespace {

// Independent Gaussian with mean 0 and the given variances.
class DiagonalGaussian : public DensityTarget {
 public:
  explicit DiagonalGaussian(Eigen::VectorXd var) : var_(std::move(var)) {}
  Eigen::Index dim() const override { return var_.size(); }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g = -q.cwiseQuotient(var_);
    return -0.5 * q.cwiseProduct(q).cwiseQuotient(var_).sum();
  }

 private:
  Eigen::VectorXd var_;
};

InitFn zero_init(Eigen::Index d) {
  return [d](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd q(d);
    for (Eigen::Index k = 0; k < d; ++k) q[k] = u(rng);
    return q;
  };
}

SamplerConfig default_config(std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Leapfrog, EnergyErrorIsThirdOrderPerStep) {
  const DiagonalGaussian target(Eigen::Vector2d(1.0, 4.0));
  const Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(2);
  auto energy_error = [&](double h) {
    PhasePoint z;
    z.q = Eigen::Vector2d(0.7, -1.3);
    z.p = Eigen::Vector2d(0.4, 0.9);
    z.logp = target.log_density_gradient(z.q, z.grad);
    const double h0 = hamiltonian(z, inv_metric);
    leapfrog(target, z, h, inv_metric);
    return std::abs(hamiltonian(z, inv_metric) - h0);
  };
  for (double h : {0.2, 0.1, 0.05}) EXPECT_GE(energy_error(h) / energy_error(h / 2.0), 4.0) << "h = " << h;
}

TEST(Nuts, StandardNormalMoments) {
  const DiagonalGaussian target(Eigen::VectorXd::Ones(1));
  const PosteriorDraws draws = nuts_sample(target, default_config(1), zero_init(1));
  ASSERT_EQ(draws.total_draws(), 4000);
  const double mean = draws.mean()[0];
  const double sd = draws.stddev()[0];
  const double mcse = sd / std::sqrt(draws.ess()[0]);
  EXPECT_LT(std::abs(mean), 3.0 * mcse);
  EXPECT_NEAR(sd * sd, 1.0, 0.1);
  EXPECT_NEAR(draws.mean_accept(), 0.8, 0.1);
  EXPECT_EQ(draws.divergences(), 0);
  EXPECT_LT(draws.rhat()[0], 1.01);
}

TEST(Nuts, AnisotropicGaussianVariances) {
  const DiagonalGaussian target(Eigen::Vector2d(1.0, 10.0));
  const PosteriorDraws draws = nuts_sample(target, default_config(2), zero_init(2));
  const Eigen::VectorXd sd = draws.stddev();
  EXPECT_NEAR(sd[0] * sd[0], 1.0, 0.15);
  EXPECT_NEAR(sd[1] * sd[1] / 10.0, 1.0, 0.15);
  // Metric adaptation should recover roughly the target scales.
  EXPECT_GT(draws.stats[0].inv_metric[1], 3.0 * draws.stats[0].inv_metric[0]);
}

TEST(Nuts, BitIdenticalAcrossRunsAndThreading) {
  const DiagonalGaussian target(Eigen::Vector2d(1.0, 2.0));
  SamplerConfig cfg = default_config(99);
  cfg.warmup = 200;
  cfg.draws = 200;
  const PosteriorDraws a = nuts_sample(target, cfg, zero_init(2));
  const PosteriorDraws b = nuts_sample(target, cfg, zero_init(2));
  cfg.parallel = false;
  const PosteriorDraws c = nuts_sample(target, cfg, zero_init(2));
  for (std::size_t k = 0; k < a.chains.size(); ++k) {
    EXPECT_EQ(a.chains[k], b.chains[k]);
    EXPECT_EQ(a.chains[k], c.chains[k]);
  }
  EXPECT_NE(a.chains[0], a.chains[1]);
}

TEST(Nuts, LogisticPosteriorMatchesGridQuadrature) {
  std::mt19937_64 rng(20);
  const auto ds = random_logistic(20, Eigen::VectorXd::Constant(1, 1.0), 0.0, rng);
  const PriorSet priors = normal_priors(1, 0.0, 1.0);
  const GridSlopeSummary oracle = grid_posterior_slope(ds.x, ds.y, priors, 401);
  const PosteriorDraws draws = nuts_sample(LogisticPosterior(ds, priors), default_config(5));
  EXPECT_NEAR(draws.mean()[0], oracle.mean, 0.05);
  EXPECT_NEAR(laplace_fit(ds, priors).mode.beta[0], oracle.mode, 0.05);
  EXPECT_EQ(draws.names.back(), "_intercept");
}

TEST(Nuts, LaplaceModeAgreesWithPosteriorMean) {
  // Weak effects under N(0, 0.5) keep the posterior close to Gaussian, so
  // mode and mean should nearly coincide.
  std::mt19937_64 rng(50);
  const auto ds = random_logistic(50, (Eigen::VectorXd(2) << 0.3, -0.2).finished(), 0.0, rng);
  const PriorSet priors = normal_priors(2, 0.0, 0.5);
  const PosteriorDraws draws = nuts_sample(LogisticPosterior(ds, priors), default_config(6));
  const LaplaceFit fit = laplace_fit(ds, priors);
  EXPECT_LT((draws.mean() - fit.mode.packed()).lpNorm<Eigen::Infinity>(), 0.05);
}

TEST(Nuts, TightPriorPinsPosteriorMean) {
  std::mt19937_64 rng(8);
  const auto ds = random_logistic(60, Eigen::VectorXd::Constant(2, 2.0), 0.0, rng);
  PriorSet priors = normal_priors(2, 0.3, 1e-4, 1e-4);
  const PosteriorDraws draws = nuts_sample(LogisticPosterior(ds, priors), default_config(4));
  EXPECT_LT((draws.mean().array() - 0.3).abs().maxCoeff(), 1e-3);
}

TEST(Nuts, UniformPriorOnlyRecoversUniformMarginals) {
  PriorSet priors;
  priors.coefficients = {FeaturePrior::uniform("x0", -1.0, 1.0), FeaturePrior::uniform("x1", -1.0, 1.0)};
  const LogisticPosterior post(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), priors);
  const PosteriorDraws draws = nuts_sample(post, default_config(12));
  const Eigen::MatrixXd all = draws.stacked();
  for (Eigen::Index k = 0; k < 2; ++k) {
    std::vector<double> v(all.col(k).data(), all.col(k).data() + all.rows());
    EXPECT_LT(ks_uniform(v, -1.0, 1.0), 0.05);
  }
}

TEST(Nuts, DivergencesAreRecordedNotFatal) {
  // A funnel-like target with a huge fixed step forces energy blowups.
  const DiagonalGaussian target(Eigen::Vector2d(1e-4, 1.0));
  SamplerConfig cfg = default_config(3);
  cfg.adapt = false;
  cfg.warmup = 0;
  cfg.draws = 50;
  cfg.step_size = 5.0;
  const PosteriorDraws draws = nuts_sample(target, cfg, zero_init(2));
  EXPECT_GT(draws.divergences(), 0);
  EXPECT_EQ(draws.total_draws(), 200);
}

TEST(Nuts, NonFiniteInitialDensityIsFatal) {
  const DiagonalGaussian target(Eigen::VectorXd::Ones(1));
  const InitFn bad = [](std::mt19937_64&) { return Eigen::VectorXd::Constant(1, NAN); };
  EXPECT_THROW(nuts_sample(target, default_config(0), bad), NumericalError);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig cfg;
  cfg.warmup = 50;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.adapt = false;
  EXPECT_NO_THROW(cfg.validate());
  cfg.chains = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(SamplerConfig::from_json({{"chain", 2}}), ConfigError);
  EXPECT_EQ(SamplerConfig::from_json(default_config(5).to_json()).to_json(), default_config(5).to_json());
}

TEST(Diagnostics, IndependentDrawsHaveFullEssAndUnitRhat) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> chains(4, Eigen::VectorXd(1000));
  for (auto& c : chains)
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = normal(rng);
  EXPECT_NEAR(effective_sample_size(chains) / 4000.0, 1.0, 0.15);
  EXPECT_NEAR(split_rhat(chains), 1.0, 0.01);
}

TEST(Diagnostics, AutocorrelatedChainsLoseEssAndShiftedChainsRaiseRhat) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> chains(4, Eigen::VectorXd(2000));
  const double phi = 0.9;
  for (auto& c : chains) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = v = phi * v + normal(rng);
  }
  // AR(1) integrated autocorrelation time (1 + phi) / (1 - phi) = 19.
  EXPECT_NEAR(effective_sample_size(chains), 8000.0 / 19.0, 8000.0 / 19.0 * 0.3);
  chains[0].array() += 5.0;
  EXPECT_GT(split_rhat(chains), 1.1);
}

TEST(PosteriorDraws, CsvAndSidecar) {
  const DiagonalGaussian target(Eigen::VectorXd::Ones(1));
  SamplerConfig cfg = default_config(1);
  cfg.warmup = 100;
  cfg.draws = 10;
  cfg.chains = 2;
  const PosteriorDraws draws = nuts_sample(target, cfg, zero_init(1), {}, {"theta"});
  const std::string dir = ::testing::TempDir();
  draws.write_csv(dir + "/draws.csv");
  draws.write_diagnostics(dir + "/draws.json");
  std::ifstream in(dir + "/draws.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "chain,draw,theta");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 20);
  const auto j = nlohmann::json::parse(std::ifstream(dir + "/draws.json"));
  EXPECT_EQ(j.at("n_chains"), 2);
  EXPECT_TRUE(j.at("parameters").contains("theta"));
}
