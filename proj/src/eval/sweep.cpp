#include "loid/eval/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "loid/error.hpp"
#include "loid/config.hpp"
#include "loid/eval/metrics.hpp"

namespace loid {

std::size_t SweepGrid::max_n_sent() const {
  return n_sents.empty() ? 0 : *std::max_element(n_sents.begin(), n_sents.end());
}

void SweepGrid::validate() const {
  if (alphas.empty() || gammas.empty() || n_sents.empty()) throw ConfigError("sweep grid sets must be non-empty");
  for (double a : alphas) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("sweep alpha must be finite and nonnegative");
  }
  for (double g : gammas) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("sweep gamma must be finite and nonnegative");
  }
  for (std::size_t n : n_sents) {
    if (n == 0) throw ConfigError("sweep n_sent must be positive");
  }
}

SweepGrid SweepGrid::from_json(const nlohmann::json& j) {
  SweepGrid g;
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "alphas" && key != "gammas" && key != "n_sents") throw ConfigError("sweep grid: unknown key '" + key + "'");
    }
    if (j.contains("alphas")) g.alphas = j.at("alphas").get<std::vector<double>>();
    if (j.contains("gammas")) g.gammas = j.at("gammas").get<std::vector<double>>();
    if (j.contains("n_sents")) g.n_sents = j.at("n_sents").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep grid: ") + e.what());
  }
  g.validate();
  return g;
}

nlohmann::json SweepGrid::to_json() const { return {{"alphas", alphas}, {"gammas", gammas}, {"n_sents", n_sents}}; }

namespace {

std::vector<SweepCell> grid_cells(const SweepGrid& grid) {
  std::vector<SweepCell> cells;
  for (double a : grid.alphas) {
    for (double g : grid.gammas) {
      for (std::size_t n : grid.n_sents) cells.push_back({a, g, n});
    }
  }
  return cells;
}

const SweepCell kDefaultCell{0.2, 2.0, 10};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

SweepResult sweep(const SweepGrid& grid, const ExperimentConfig& base, ProbeBackend* backend, const LogFn& log_fn) {
  grid.validate();
  base.validate();
  const LogFn log = log_fn ? log_fn : [](const std::string&, const std::string&) {};
  SweepResult result;
  result.grid = grid;
  nlohmann::json hashed = base.to_json();
  hashed["sweep_grid"] = grid.to_json();
  result.config_hash = config_hash(hashed);
  result.seed = base.seed;
  const auto cells = grid_cells(grid);

  // dataset -> per-cell AUC sums over splits
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> per_dataset;
  std::vector<std::string> dataset_order;
  for (const auto& entry : base.datasets) {
    const PreparedDataset prepared = prepare_dataset(entry, base.split_options, base.max_splits);
    const TabularDataset& encoded = prepared.encoded;
    const auto ms = probe_features(encoded.features, encoded.target_description, base.probe, base.elicitation,
                                   grid.max_n_sent(), backend);
    const std::string model = backend ? backend->model_id() : base.probe.model_id;
    log("probe", encoded.name + ": " + std::to_string(encoded.d()) + " feature(s) x " +
                     std::to_string(grid.max_n_sent()) + " template(s)");

    auto& [sums, n_splits] = per_dataset[encoded.name];
    if (sums.empty()) {
      sums.assign(cells.size(), 0.0);
      dataset_order.push_back(encoded.name);
    }
    for (const auto& spec : prepared.splits) {
      const TabularDataset scaled = preprocess(encoded, {.standardize = true, .fit_mask = spec.train_mask}).data;
      const auto [train, eval] = apply_split(scaled, spec);
      const std::uint64_t seed = cell_seed(base.seed, encoded.name, spec.label(), Condition::loid);
      for (std::size_t k = 0; k < cells.size(); ++k) {
        ElicitationConfig ec = base.elicitation;
        ec.alpha = cells[k].alpha;
        ec.gamma = cells[k].gamma;
        ec.n_sent = cells[k].n_sent;
        ec.validate();
        const PriorSet priors = elicit_prior_set(encoded.features, ms, ec, model);
        const FitOutcome fit = fit_and_predict(train, eval.x, priors, base.engine, base, seed);
        const double a = auc(fit.probabilities, eval.y);
        result.rows.push_back({encoded.name, spec.label(), cells[k], a, seed});
        sums[k] += a;
      }
      ++n_splits;
      log("sweep", encoded.name + " " + spec.label() + ": " + std::to_string(cells.size()) + " cell(s)");
    }
  }

  std::vector<double> average(cells.size(), 0.0);
  for (const auto& name : dataset_order) {
    const auto& [sums, n_splits] = per_dataset.at(name);
    SweepBest best{cells[0], -1.0};
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const double m = sums[k] / static_cast<double>(n_splits);
      average[k] += m / static_cast<double>(dataset_order.size());
      // Strict comparison keeps the first cell in grid order on ties.
      if (m > best.mean_auc) best = {cells[k], m};
    }
    result.dataset_best[name] = best;
  }
  result.average_best = {cells[0], -1.0};
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (average[k] > result.average_best.mean_auc) result.average_best = {cells[k], average[k]};
    if (cells[k] == kDefaultCell) result.default_cell = SweepBest{cells[k], average[k]};
  }
  return result;
}

std::string render_sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "dataset,split,alpha,gamma,n_sent,auc,is_default,is_dataset_best,is_average_best,seed,config_hash,master_seed\n";
  for (const auto& r : result.rows) {
    const auto it = result.dataset_best.find(r.dataset);
    out << r.dataset << ',' << r.split << ',' << fmt("%g", r.cell.alpha) << ',' << fmt("%g", r.cell.gamma) << ','
        << r.cell.n_sent << ',' << fmt("%.6f", r.auc) << ',' << (r.cell == kDefaultCell) << ','
        << (it != result.dataset_best.end() && it->second.cell == r.cell) << ','
        << (result.average_best.cell == r.cell) << ',' << r.seed << ',' << result.config_hash << ','
        << result.seed << '\n';
  }
  return out.str();
}

std::string render_sweep_plot_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "dataset,split,hyperparameter,x,auc,alpha,gamma,n_sent\n";
  for (const char* param : {"alpha", "gamma", "n_sent"}) {
    for (const auto& r : result.rows) {
      const std::string p = param;
      const double x = p == "alpha" ? r.cell.alpha : p == "gamma" ? r.cell.gamma : static_cast<double>(r.cell.n_sent);
      out << r.dataset << ',' << r.split << ',' << p << ',' << fmt("%g", x) << ',' << fmt("%.6f", r.auc) << ','
          << fmt("%g", r.cell.alpha) << ',' << fmt("%g", r.cell.gamma) << ',' << r.cell.n_sent << '\n';
    }
  }
  return out.str();
}

nlohmann::ordered_json sweep_summary_json(const SweepResult& result) {
  auto cell_json = [](const SweepBest& b) {
    return nlohmann::ordered_json{
        {"alpha", b.cell.alpha}, {"gamma", b.cell.gamma}, {"n_sent", b.cell.n_sent}, {"mean_auc", b.mean_auc}};
  };
  nlohmann::ordered_json j;
  j["config_hash"] = result.config_hash;
  j["master_seed"] = result.seed;
  j["grid"] = result.grid.to_json();
  j["dataset_best"] = nlohmann::ordered_json::object();
  for (const auto& [name, best] : result.dataset_best) j["dataset_best"][name] = cell_json(best);
  j["average_best"] = cell_json(result.average_best);
  j["default"] = result.default_cell ? cell_json(*result.default_cell) : nlohmann::ordered_json();
  return j;
}

}  // namespace loid
