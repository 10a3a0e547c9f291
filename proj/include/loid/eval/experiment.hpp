#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "loid/dataset.hpp"
#include "loid/inference/nuts.hpp"
#include "loid/priors.hpp"
#include "loid/probe.hpp"
#include "loid/splits.hpp"

namespace loid {

enum class Condition { ood_lr, loid, normal_0_1, normal_0_045, uniform_m1_1, cap };
inline constexpr std::array<Condition, 6> kAllConditions{Condition::ood_lr,       Condition::normal_0_1,
                                                         Condition::loid,         Condition::normal_0_045,
                                                         Condition::uniform_m1_1, Condition::cap};
std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

enum class Engine { nuts, laplace, mle };
std::string to_string(Engine e);
Engine engine_from_string(const std::string& s);

// Stage-tagged log sink; stage is a short word such as "probe" or "fit".
using LogFn = std::function<void(const std::string& stage, const std::string& message)>;

struct SplitSelection {
  std::string feature;
  SplitStrategy strategy = SplitStrategy::moderate_20_80;
};

struct DatasetEntry {
  DatasetConfig dataset;
  // Empty selects every admissible split.
  std::vector<SplitSelection> splits;
};

struct ProbeSettings {
  // One template per line; the built-in set when absent.
  std::optional<std::string> templates_path;
  // JSON-lines probe cache; in-memory only when empty.
  std::string cache_path;
  // Names the cached model when no backend is attached.
  std::string model_id;
  std::size_t max_in_flight = 4;

  TemplateSet templates() const;
};

struct ExperimentConfig {
  std::vector<DatasetEntry> datasets;
  std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
  // Engine for prior-based conditions; uniform_m1_1 always samples with NUTS.
  Engine engine = Engine::nuts;
  SamplerConfig sampler;
  ElicitationConfig elicitation;
  SplitOptions split_options;
  // Per-dataset cap on enumerated splits; 0 keeps all.
  std::size_t max_splits = 0;
  ProbeSettings probe;
  double mle_ridge = 1e-6;
  int laplace_samples = 1000;
  // Replaces the coefficient sigma of a Normal baseline condition.
  std::map<Condition, double> baseline_sigma;
  std::uint64_t seed = 0;

  void validate() const;
  // Dataset entries are inline objects or paths to dataset config files,
  // resolved against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  // Fully resolved form with every default filled in.
  nlohmann::json to_json() const;
  std::string hash() const;
};

struct SplitSummary {
  std::string label;
  std::string feature;
  SplitStrategy strategy = SplitStrategy::moderate_20_80;
  double lower_q = 0.0;
  double upper_q = 1.0;
  std::size_t train_size = 0;
  std::size_t eval_size = 0;
  EvalMode eval = EvalMode::entire;
};

struct EvalResult {
  std::string dataset;
  SplitSummary split;
  Condition condition = Condition::ood_lr;
  Engine engine = Engine::mle;
  double auc = 0.5;
  std::optional<double> gap_closed_pct;
  // Wall clock of fit plus predict. Not serialized into results records.
  double runtime_seconds = 0.0;
  std::uint64_t seed = 0;
  // Sampler health for NUTS cells, empty otherwise.
  nlohmann::ordered_json diagnostics = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
  static EvalResult from_json(const nlohmann::json& j);
};

struct ExperimentReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EvalResult> results;
  // Probe wall clock per dataset, reported apart from fit time.
  std::map<std::string, double> probe_seconds;
};

// Fits every condition on every selected split and scores the evaluation
// rows. `backend` may be null when the probe cache already holds every
// prompt the loid condition needs.
ExperimentReport run_experiment(const ExperimentConfig& cfg, ProbeBackend* backend, const LogFn& log = {});

// One record per line, each tagged with the config hash and master seed.
void write_results_jsonl(const std::string& path, const ExperimentReport& report);
void write_timings_jsonl(const std::string& path, const ExperimentReport& report);
ExperimentReport load_results_jsonl(const std::string& path);

// One row per (dataset, split) with an AUC column per condition and the
// gap closed by loid.
std::string render_summary_csv(const ExperimentReport& report);
// Fixed-width text version of the same table.
std::string render_summary_table(const ExperimentReport& report);

// Shared plumbing, exposed for the CLI's single-step subcommands.
struct PreparedDataset {
  TabularDataset encoded;
  std::vector<SplitSpec> splits;
  std::vector<std::string> warnings;
};
PreparedDataset prepare_dataset(const DatasetEntry& entry, const SplitOptions& opts, std::size_t max_splits);

// Probes every feature of `features` with the first `n_templates`
// templates. Throws ConfigError when the template set is shorter.
std::map<std::string, std::vector<ProbeMeasurement>> probe_features(const std::vector<FeatureMeta>& features,
                                                                    const std::string& target_description,
                                                                    const ProbeSettings& settings,
                                                                    const ElicitationConfig& elicitation,
                                                                    std::size_t n_templates, ProbeBackend* backend);

// Scores `eval_x` after fitting `priors` (or the MLE when priors is empty).
struct FitOutcome {
  Eigen::VectorXd probabilities;
  Engine engine = Engine::mle;
  nlohmann::ordered_json diagnostics = nlohmann::ordered_json::object();
};
FitOutcome fit_and_predict(const TabularDataset& train, const Eigen::MatrixXd& eval_x,
                           const std::optional<PriorSet>& priors, Engine engine, const ExperimentConfig& cfg,
                           std::uint64_t seed);

std::uint64_t cell_seed(std::uint64_t master, const std::string& dataset, const std::string& split_label,
                        Condition condition);

}  // namespace loid
