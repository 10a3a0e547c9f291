#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loid/dataset.hpp"

namespace loid {

// Probabilities are floored here before forming ratios.
inline constexpr double kProbabilityFloor = 1e-12;

double logit(double p);

// ln(P+ / P-), computed as a difference of logs so that swapping the
// arguments negates the result exactly.
double preference_score(double p_positive, double p_negative);

// The same quantity written as logit(P+ / (P+ + P-)).
double preference_score_logit_form(double p_positive, double p_negative);

class TemplateSet {
 public:
  // Each template must contain exactly two "{}" placeholders: the feature
  // first, then the target. Rendering stops where the sentiment token goes.
  explicit TemplateSet(std::vector<std::string> templates);

  static TemplateSet defaults();
  // One template per line; blank lines are skipped, trailing spaces kept.
  static TemplateSet from_file(const std::string& path);

  std::size_t size() const { return templates_.size(); }
  const std::vector<std::string>& templates() const { return templates_; }
  TemplateSet prefix(std::size_t n_sent) const;
  std::string render(std::size_t index, const std::string& feature, const std::string& target) const;

 private:
  std::vector<std::string> templates_;
};

std::vector<std::string> render_prompts(const std::string& feature_desc, const std::string& target_desc,
                                        const TemplateSet& ts);

struct ProbeMeasurement {
  std::string feature;
  std::size_t template_index = 0;
  std::string prompt;
  double p_positive = 0.0;
  double p_negative = 0.0;
  double score = 0.0;

  nlohmann::json to_json() const;
  static ProbeMeasurement from_json(const nlohmann::json& j);
  bool operator==(const ProbeMeasurement&) const = default;
};

struct TokenVariants {
  std::vector<std::string> positive{" positive", "positive", " Positive"};
  std::vector<std::string> negative{" negative", "negative", " Negative"};
};

// Answers "probability that token t immediately follows prompt s".
class ProbeBackend {
 public:
  virtual ~ProbeBackend() = default;
  virtual std::string model_id() const = 0;
  // Tokens missing from the returned map carry zero probability.
  virtual std::map<std::string, double> score(const std::string& prompt, const std::vector<std::string>& tokens) = 0;
};

// Serves probabilities from a JSON fixture whose entries match prompts by
// substring. See README for the fixture layout.
class MockBackend : public ProbeBackend {
 public:
  explicit MockBackend(const nlohmann::json& fixture);
  static MockBackend from_file(const std::string& path);

  std::string model_id() const override { return model_id_; }
  std::map<std::string, double> score(const std::string& prompt, const std::vector<std::string>& tokens) override;
  std::size_t requests() const { return requests_.load(); }

 private:
  struct Entry {
    std::vector<std::string> match;
    std::optional<std::pair<double, double>> polarity;
    std::map<std::string, double> tokens;
  };
  std::map<std::string, double> answer(const Entry& e, const std::vector<std::string>& tokens) const;

  std::string model_id_;
  std::vector<Entry> entries_;
  std::optional<Entry> default_;
  std::atomic<std::size_t> requests_{0};
};

struct HttpBackendOptions {
  std::string url;
  std::string model_id = "http";
  double timeout_seconds = 30.0;
  int max_retries = 3;
};

// POST {"prompt": s, "tokens": [t...]} -> {"logprobs": {t: logp}}.
class HttpBackend : public ProbeBackend {
 public:
  explicit HttpBackend(HttpBackendOptions opts);
  std::string model_id() const override { return opts_.model_id; }
  std::map<std::string, double> score(const std::string& prompt, const std::vector<std::string>& tokens) override;

 private:
  HttpBackendOptions opts_;
  std::string origin_;
  std::string path_;
};

std::string prompt_hash(const std::string& prompt);

// Append-only JSON-lines store of (model, prompt, token) -> probability.
class ProbeCache {
 public:
  ProbeCache() = default;
  // Loads existing records from `path` and appends new ones to it.
  explicit ProbeCache(std::string path);

  std::optional<double> get(const std::string& model, const std::string& prompt, const std::string& token) const;
  void put(const std::string& model, const std::string& prompt, const std::string& token, double prob);
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::string path_;
  mutable std::mutex mu_;
  std::map<Key, double> entries_;
};

struct ProbeOptions {
  TokenVariants tokens;
  std::size_t max_in_flight = 4;
  bool use_descriptions = true;
};

class Prober {
 public:
  // `backend` may be null, in which case every answer must come from the
  // cache and `model_id` names the cached model.
  Prober(ProbeBackend* backend, ProbeCache& cache, ProbeOptions opts = {}, std::string model_id = "");

  // (P+, P-) summed over the token variants of each polarity.
  std::pair<double, double> score_tokens(const std::string& prompt);

  std::vector<ProbeMeasurement> probe_feature(const FeatureMeta& feature, const std::string& target_desc,
                                              const TemplateSet& ts);

  std::size_t backend_calls() const { return backend_calls_.load(); }
  const std::string& model_id() const { return model_id_; }
  const ProbeOptions& options() const { return opts_; }

 private:
  std::vector<std::string> all_tokens() const;
  std::map<std::string, double> fetch(const std::string& prompt, bool& fetched);
  void persist(const std::string& prompt, const std::map<std::string, double>& probs);
  std::pair<double, double> polarity_mass(const std::map<std::string, double>& probs) const;

  ProbeBackend* backend_;
  ProbeCache& cache_;
  ProbeOptions opts_;
  std::string model_id_;
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace loid
