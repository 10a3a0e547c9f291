#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "loid/dataset.hpp"
#include "loid/probe.hpp"

namespace loid {

enum class PriorFamily { normal, uniform };

struct FeaturePrior {
  std::string feature;
  PriorFamily family = PriorFamily::normal;
  double mu = 0.0;
  double sigma = 1.0;
  double lower = -1.0;
  double upper = 1.0;

  static FeaturePrior normal(std::string feature, double mu, double sigma);
  static FeaturePrior uniform(std::string feature, double lower, double upper);

  // normal: sigma finite and > 0; uniform: lower < upper.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static FeaturePrior from_json(const std::string& feature, const nlohmann::ordered_json& j);
  bool operator==(const FeaturePrior&) const = default;
};

enum class SpreadInterpretation { stddev, variance };
enum class ElicitationMethod { logit_variance, entropy };

std::string to_string(SpreadInterpretation v);
std::string to_string(ElicitationMethod m);

struct ElicitationConfig {
  double alpha = 0.2;
  double gamma = 2.0;
  // stddev: sigma = alpha + gamma * spread; variance: sigma^2 = alpha + gamma * spread.
  SpreadInterpretation interpretation = SpreadInterpretation::stddev;
  ElicitationMethod method = ElicitationMethod::logit_variance;
  double entropy_scale = 0.65;
  double sigma_min = 0.01;
  std::size_t n_sent = 10;
  // Prompts use feature descriptions when the dataset config provides them.
  bool use_descriptions = true;
  FeaturePrior intercept = FeaturePrior::normal("_intercept", 0.0, 1.0);

  void validate() const;
  static ElicitationConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Coefficient priors in dataset column order plus the intercept prior.
struct PriorSet {
  std::vector<FeaturePrior> coefficients;
  FeaturePrior intercept = FeaturePrior::normal("_intercept", 0.0, 1.0);
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  std::size_t d() const { return coefficients.size(); }
  bool all_normal() const;
  // Reorders coefficients to match `features`; throws if one is missing.
  PriorSet aligned_to(const std::vector<FeatureMeta>& features) const;

  nlohmann::ordered_json to_json() const;
  static PriorSet from_json(const nlohmann::ordered_json& j);
  void save(const std::string& path) const;
  static PriorSet load(const std::string& path);
};

double binary_entropy(double q);

// Mean and population standard deviation of the measurement scores,
// computed over the sorted scores so the result ignores input order.
std::pair<double, double> score_moments(const std::vector<ProbeMeasurement>& ms);

// Keeps the first n_sent templates (by template index).
std::vector<ProbeMeasurement> truncate_measurements(std::vector<ProbeMeasurement> ms, std::size_t n_sent);

FeaturePrior elicit_prior(const std::vector<ProbeMeasurement>& ms, const ElicitationConfig& cfg);
FeaturePrior elicit_prior_entropy(const std::vector<ProbeMeasurement>& ms, const ElicitationConfig& cfg);

// Applies cfg.method to every feature in order, truncating to cfg.n_sent.
PriorSet elicit_prior_set(const std::vector<FeatureMeta>& features,
                          const std::map<std::string, std::vector<ProbeMeasurement>>& measurements,
                          const ElicitationConfig& cfg, const std::string& model_id);

enum class BaselinePrior { normal_0_1, normal_0_045, uniform_m1_1 };

std::string to_string(BaselinePrior b);
BaselinePrior baseline_prior_from_string(const std::string& s);

PriorSet baseline_priors(BaselinePrior kind, const std::vector<std::string>& feature_names,
                         const FeaturePrior& intercept = FeaturePrior::normal("_intercept", 0.0, 1.0));
PriorSet baseline_priors(BaselinePrior kind, std::size_t d);

}  // namespace loid
