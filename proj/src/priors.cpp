#include "loid/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "loid/error.hpp"

namespace loid {

FeaturePrior FeaturePrior::normal(std::string feature, double mu, double sigma) {
  FeaturePrior p;
  p.feature = std::move(feature);
  p.family = PriorFamily::normal;
  p.mu = mu;
  p.sigma = sigma;
  p.validate();
  return p;
}

FeaturePrior FeaturePrior::uniform(std::string feature, double lower, double upper) {
  FeaturePrior p;
  p.feature = std::move(feature);
  p.family = PriorFamily::uniform;
  p.mu = 0.0;
  p.sigma = 0.0;
  p.lower = lower;
  p.upper = upper;
  p.validate();
  return p;
}

void FeaturePrior::validate() const {
  if (family == PriorFamily::normal) {
    if (!std::isfinite(mu)) throw NumericalError("prior for '" + feature + "': mean is not finite");
    if (!(std::isfinite(sigma) && sigma > 0.0)) {
      throw NumericalError("prior for '" + feature + "': sigma must be finite and positive");
    }
  } else if (!(std::isfinite(lower) && std::isfinite(upper) && lower < upper)) {
    throw NumericalError("prior for '" + feature + "': uniform bounds must satisfy lower < upper");
  }
}

nlohmann::ordered_json FeaturePrior::to_json() const {
  nlohmann::ordered_json j;
  if (family == PriorFamily::normal) {
    j["family"] = "normal";
    j["mu"] = mu;
    j["sigma"] = sigma;
  } else {
    j["family"] = "uniform";
    j["lower"] = lower;
    j["upper"] = upper;
  }
  return j;
}

FeaturePrior FeaturePrior::from_json(const std::string& feature, const nlohmann::ordered_json& j) {
  try {
    const std::string family = j.at("family").get<std::string>();
    if (family == "normal") return normal(feature, j.at("mu").get<double>(), j.at("sigma").get<double>());
    if (family == "uniform") return uniform(feature, j.at("lower").get<double>(), j.at("upper").get<double>());
    throw ConfigError("prior for '" + feature + "': unknown family '" + family + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("prior for '" + feature + "': " + e.what());
  }
}

std::string to_string(SpreadInterpretation v) { return v == SpreadInterpretation::stddev ? "stddev" : "variance"; }
std::string to_string(ElicitationMethod m) { return m == ElicitationMethod::logit_variance ? "logit_variance" : "entropy"; }

void ElicitationConfig::validate() const {
  if (!(alpha >= 0.0 && gamma >= 0.0)) throw ConfigError("elicitation: alpha and gamma must be nonnegative");
  if (method == ElicitationMethod::logit_variance && !(alpha + gamma > 0.0)) {
    throw ConfigError("elicitation: alpha + gamma must be positive");
  }
  if (!(entropy_scale > 0.0)) throw ConfigError("elicitation: entropy_scale must be positive");
  if (!(sigma_min > 0.0)) throw ConfigError("elicitation: sigma_min must be positive");
  if (n_sent == 0) throw ConfigError("elicitation: n_sent must be positive");
  intercept.validate();
}

ElicitationConfig ElicitationConfig::from_json(const nlohmann::json& j) {
  ElicitationConfig cfg;
  try {
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.gamma = j.value("gamma", cfg.gamma);
    if (j.contains("interpretation")) {
      const auto s = j.at("interpretation").get<std::string>();
      if (s == "stddev") {
        cfg.interpretation = SpreadInterpretation::stddev;
      } else if (s == "variance") {
        cfg.interpretation = SpreadInterpretation::variance;
      } else {
        throw ConfigError("elicitation: unknown interpretation '" + s + "'");
      }
    }
    if (j.contains("method")) {
      const auto s = j.at("method").get<std::string>();
      if (s == "logit_variance") {
        cfg.method = ElicitationMethod::logit_variance;
      } else if (s == "entropy") {
        cfg.method = ElicitationMethod::entropy;
      } else {
        throw ConfigError("elicitation: unknown method '" + s + "'");
      }
    }
    cfg.entropy_scale = j.value("entropy_scale", cfg.entropy_scale);
    cfg.sigma_min = j.value("sigma_min", cfg.sigma_min);
    cfg.n_sent = j.value("n_sent", cfg.n_sent);
    cfg.use_descriptions = j.value("use_descriptions", cfg.use_descriptions);
    if (j.contains("intercept")) cfg.intercept = FeaturePrior::from_json("_intercept", nlohmann::ordered_json(j.at("intercept")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("elicitation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json ElicitationConfig::to_json() const {
  return {{"alpha", alpha},
          {"gamma", gamma},
          {"interpretation", to_string(interpretation)},
          {"method", to_string(method)},
          {"entropy_scale", entropy_scale},
          {"sigma_min", sigma_min},
          {"n_sent", n_sent},
          {"use_descriptions", use_descriptions},
          {"intercept", intercept.to_json()}};
}

bool PriorSet::all_normal() const {
  if (intercept.family != PriorFamily::normal) return false;
  return std::all_of(coefficients.begin(), coefficients.end(),
                     [](const FeaturePrior& p) { return p.family == PriorFamily::normal; });
}

PriorSet PriorSet::aligned_to(const std::vector<FeatureMeta>& features) const {
  PriorSet out;
  out.intercept = intercept;
  out.meta = meta;
  for (const auto& f : features) {
    auto it = std::find_if(coefficients.begin(), coefficients.end(),
                           [&](const FeaturePrior& p) { return p.feature == f.name; });
    if (it == coefficients.end()) throw ConfigError("prior set has no prior for feature '" + f.name + "'");
    out.coefficients.push_back(*it);
  }
  return out;
}

nlohmann::ordered_json PriorSet::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& p : coefficients) j[p.feature] = p.to_json();
  j["_intercept"] = intercept.to_json();
  j["meta"] = meta;
  return j;
}

PriorSet PriorSet::from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("prior set must be a JSON object");
  PriorSet ps;
  for (const auto& [k, v] : j.items()) {
    if (k == "meta") {
      ps.meta = v;
    } else if (k == "_intercept") {
      ps.intercept = FeaturePrior::from_json("_intercept", v);
    } else {
      ps.coefficients.push_back(FeaturePrior::from_json(k, v));
    }
  }
  return ps;
}

void PriorSet::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write prior set " + path);
  out << to_json().dump(2) << '\n';
}

PriorSet PriorSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prior set " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("prior set " + path + ": " + e.what());
  }
  return from_json(j);
}

double binary_entropy(double q) {
  double h = 0.0;
  if (q > 0.0) h -= q * std::log(q);
  if (q < 1.0) h -= (1.0 - q) * std::log1p(-q);
  return h;
}

namespace {

void check_measurements(const std::vector<ProbeMeasurement>& ms) {
  if (ms.empty()) throw ConfigError("elicitation: empty measurement list");
  for (const auto& m : ms) {
    if (m.feature != ms.front().feature) {
      throw ConfigError("elicitation: measurements mix features '" + ms.front().feature + "' and '" + m.feature + "'");
    }
  }
}

}  // namespace

std::pair<double, double> score_moments(const std::vector<ProbeMeasurement>& ms) {
  std::vector<double> scores;
  scores.reserve(ms.size());
  for (const auto& m : ms) scores.push_back(m.score);
  std::sort(scores.begin(), scores.end());
  // Identical scores have zero spread exactly; summation rounding would not.
  if (scores.front() == scores.back()) return {scores.front(), 0.0};
  double sum = 0.0;
  for (double s : scores) sum += s;
  const double mean = sum / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / static_cast<double>(scores.size()))};
}

std::vector<ProbeMeasurement> truncate_measurements(std::vector<ProbeMeasurement> ms, std::size_t n_sent) {
  std::sort(ms.begin(), ms.end(),
            [](const ProbeMeasurement& a, const ProbeMeasurement& b) { return a.template_index < b.template_index; });
  if (ms.size() < n_sent) {
    throw ConfigError("feature '" + (ms.empty() ? std::string("?") : ms.front().feature) + "' has " +
                      std::to_string(ms.size()) + " measurements, need " + std::to_string(n_sent));
  }
  ms.resize(n_sent);
  return ms;
}

FeaturePrior elicit_prior(const std::vector<ProbeMeasurement>& ms, const ElicitationConfig& cfg) {
  check_measurements(ms);
  const auto [mean, spread] = score_moments(ms);
  const double raw = cfg.alpha + cfg.gamma * spread;
  const double sigma = cfg.interpretation == SpreadInterpretation::stddev ? raw : std::sqrt(raw);
  return FeaturePrior::normal(ms.front().feature, mean, sigma);
}

FeaturePrior elicit_prior_entropy(const std::vector<ProbeMeasurement>& ms, const ElicitationConfig& cfg) {
  check_measurements(ms);
  const double mean = score_moments(ms).first;
  double total = 0.0;
  for (const auto& m : ms) {
    const double pos = std::max(m.p_positive, kProbabilityFloor);
    const double neg = std::max(m.p_negative, kProbabilityFloor);
    total += binary_entropy(pos / (pos + neg));
  }
  const double sigma = std::max(cfg.entropy_scale * total / static_cast<double>(ms.size()), cfg.sigma_min);
  return FeaturePrior::normal(ms.front().feature, mean, sigma);
}

PriorSet elicit_prior_set(const std::vector<FeatureMeta>& features,
                          const std::map<std::string, std::vector<ProbeMeasurement>>& measurements,
                          const ElicitationConfig& cfg, const std::string& model_id) {
  cfg.validate();
  PriorSet ps;
  ps.intercept = cfg.intercept;
  for (const auto& f : features) {
    auto it = measurements.find(f.name);
    if (it == measurements.end()) throw ConfigError("no probe measurements for feature '" + f.name + "'");
    const auto ms = truncate_measurements(it->second, cfg.n_sent);
    ps.coefficients.push_back(cfg.method == ElicitationMethod::logit_variance ? elicit_prior(ms, cfg)
                                                                              : elicit_prior_entropy(ms, cfg));
  }
  ps.meta["alpha"] = cfg.alpha;
  ps.meta["gamma"] = cfg.gamma;
  ps.meta["method"] = to_string(cfg.method);
  ps.meta["interpretation"] = to_string(cfg.interpretation);
  ps.meta["n_sent"] = cfg.n_sent;
  if (cfg.method == ElicitationMethod::entropy) ps.meta["entropy_scale"] = cfg.entropy_scale;
  ps.meta["model_id"] = model_id;
  return ps;
}

std::string to_string(BaselinePrior b) {
  switch (b) {
    case BaselinePrior::normal_0_1: return "normal_0_1";
    case BaselinePrior::normal_0_045: return "normal_0_045";
    case BaselinePrior::uniform_m1_1: return "uniform_m1_1";
  }
  return "normal_0_1";
}

BaselinePrior baseline_prior_from_string(const std::string& s) {
  if (s == "normal_0_1") return BaselinePrior::normal_0_1;
  if (s == "normal_0_045") return BaselinePrior::normal_0_045;
  if (s == "uniform_m1_1") return BaselinePrior::uniform_m1_1;
  throw ConfigError("unknown baseline prior '" + s + "'");
}

PriorSet baseline_priors(BaselinePrior kind, const std::vector<std::string>& feature_names,
                         const FeaturePrior& intercept) {
  if (feature_names.empty()) throw ConfigError("baseline priors need at least one feature");
  PriorSet ps;
  ps.intercept = intercept;
  for (const auto& name : feature_names) {
    switch (kind) {
      case BaselinePrior::normal_0_1: ps.coefficients.push_back(FeaturePrior::normal(name, 0.0, 1.0)); break;
      case BaselinePrior::normal_0_045: ps.coefficients.push_back(FeaturePrior::normal(name, 0.0, 0.45)); break;
      case BaselinePrior::uniform_m1_1: ps.coefficients.push_back(FeaturePrior::uniform(name, -1.0, 1.0)); break;
    }
  }
  ps.meta["baseline"] = to_string(kind);
  return ps;
}

PriorSet baseline_priors(BaselinePrior kind, std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return baseline_priors(kind, names);
}

}  // namespace loid
