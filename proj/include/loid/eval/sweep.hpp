#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "loid/eval/experiment.hpp"

namespace loid {

struct SweepGrid {
  std::vector<double> alphas{0.1, 0.2, 0.3, 0.5};
  std::vector<double> gammas{1.0, 2.0, 3.0, 4.0};
  std::vector<std::size_t> n_sents{5, 10, 15, 20};

  std::size_t max_n_sent() const;
  std::size_t cells() const { return alphas.size() * gammas.size() * n_sents.size(); }
  void validate() const;
  static SweepGrid from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SweepCell {
  double alpha = 0.0;
  double gamma = 0.0;
  std::size_t n_sent = 0;
  bool operator==(const SweepCell&) const = default;
};

struct SweepRow {
  std::string dataset;
  std::string split;
  SweepCell cell;
  double auc = 0.5;
  std::uint64_t seed = 0;
};

struct SweepBest {
  SweepCell cell;
  double mean_auc = 0.0;
};

struct SweepResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  SweepGrid grid;
  std::vector<SweepRow> rows;
  // Per dataset, the cell with the highest AUC averaged over its splits.
  std::map<std::string, SweepBest> dataset_best;
  // Cell maximizing the unweighted mean of per-dataset AUCs.
  SweepBest average_best;
  // The operating point used by default elicitation (0.2, 2.0, 10), if in the grid.
  std::optional<SweepBest> default_cell;
};

// Elicits loid priors for every grid cell and scores them on each selected
// split. Probing happens once per dataset with max(n_sents) templates;
// smaller n_sent values reuse a prefix of those measurements. Every cell of
// a split shares the seed run_experiment uses for its loid condition.
SweepResult sweep(const SweepGrid& grid, const ExperimentConfig& base, ProbeBackend* backend, const LogFn& log = {});

// One row per (dataset, split, cell) with best/default flags.
std::string render_sweep_csv(const SweepResult& result);
// Long form for plotting: each cell appears once per hyperparameter as x.
std::string render_sweep_plot_csv(const SweepResult& result);
nlohmann::ordered_json sweep_summary_json(const SweepResult& result);

}  // namespace loid
