// Command-line entry point: split, probe, elicit, fit, eval, sweep, report.
//
// Log lines go to stderr as "[stage] message". Exit codes: 0 success,
// 2 configuration or data error, 3 probe backend error, 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loid/config.hpp"
#include "loid/error.hpp"
#include "loid/eval/experiment.hpp"
#include "loid/eval/metrics.hpp"
#include "loid/eval/sweep.hpp"
#include "loid/inference/laplace.hpp"
#include "loid/inference/predict.hpp"

namespace fs = std::filesystem;
using namespace loid;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitNumerical = 4;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string backend_url;
  std::string mock_fixture;
  std::vector<std::string> overrides;
  bool verbose = false;
  // report
  std::string results_path;
  // fit
  std::string dataset;
  std::string split;
  std::string condition = "loid";
  std::string priors_path;
};

class Logger {
 public:
  explicit Logger(bool verbose) : verbose_(verbose) {}
  void operator()(const std::string& stage, const std::string& message) const {
    std::cerr << '[' << stage << "] " << message << '\n';
  }
  LogFn fn() const {
    return [this](const std::string& stage, const std::string& message) {
      // Per-cell progress is verbose-only; data warnings always show.
      if (stage == "data" || verbose_) (*this)(stage, message);
    };
  }

 private:
  bool verbose_;
};

struct Loaded {
  ExperimentConfig cfg;
  std::optional<SweepGrid> grid;
  std::string hash;
};

Loaded load_config(const Options& opt) {
  if (opt.config_path.empty()) throw ConfigError("--config is required for this subcommand");
  nlohmann::json j = read_json_file(opt.config_path);
  // Precedence: flags and overrides, then environment, then the file.
  if (const char* cache_dir = std::getenv("LOID_CACHE_DIR"); cache_dir && *cache_dir) {
    j["probe"]["cache"] = (fs::absolute(cache_dir) / "probe_cache.jsonl").string();
  }
  for (const auto& o : opt.overrides) apply_override(j, o);
  if (opt.seed) j["seed"] = *opt.seed;

  Loaded out;
  if (j.contains("sweep")) {
    out.grid = SweepGrid::from_json(j.at("sweep"));
    j.erase("sweep");
  }
  out.cfg = ExperimentConfig::from_json(j, fs::path(opt.config_path).parent_path().string());
  nlohmann::json resolved = out.cfg.to_json();
  if (out.grid) resolved["sweep"] = out.grid->to_json();
  out.hash = config_hash(resolved);
  return out;
}

fs::path prepare_out_dir(const Options& opt) {
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

// Artifacts carry the config hash and master seed.
nlohmann::ordered_json stamped(const Loaded& l) {
  return {{"config_hash", l.hash}, {"master_seed", l.cfg.seed}};
}

void write_resolved_config(const fs::path& dir, const Loaded& l, const Logger& log) {
  nlohmann::ordered_json j = stamped(l);
  nlohmann::json resolved = l.cfg.to_json();
  if (l.grid) resolved["sweep"] = l.grid->to_json();
  j["config"] = resolved;
  write_json(dir / "resolved_config.json", j);
  log("config", "hash " + l.hash + " seed " + std::to_string(l.cfg.seed) + " -> " +
                    (dir / "resolved_config.json").string());
}

std::unique_ptr<ProbeBackend> make_backend(const Options& opt, const ExperimentConfig& cfg, const Logger& log) {
  if (!opt.mock_fixture.empty()) {
    log("backend", "mock fixture " + opt.mock_fixture);
    return std::make_unique<MockBackend>(read_json_file(opt.mock_fixture));
  }
  std::string url = opt.backend_url;
  if (url.empty()) {
    if (const char* env = std::getenv("LOID_BACKEND_URL"); env && *env) url = env;
  }
  if (url.empty()) {
    log("backend", "none; probe answers must come from the cache");
    return nullptr;
  }
  HttpBackendOptions ho;
  ho.url = url;
  if (!cfg.probe.model_id.empty()) ho.model_id = cfg.probe.model_id;
  log("backend", "http " + url);
  return std::make_unique<HttpBackend>(ho);
}

std::string model_name(const ProbeBackend* backend, const ExperimentConfig& cfg) {
  return backend ? backend->model_id() : cfg.probe.model_id;
}

const DatasetEntry& select_dataset(const ExperimentConfig& cfg, const std::string& name) {
  if (name.empty()) return cfg.datasets.front();
  for (const auto& e : cfg.datasets) {
    if (e.dataset.name == name) return e;
  }
  throw ConfigError("no dataset named '" + name + "' in the config");
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_split(const Options& opt, const Logger& log) {
  const Loaded l = load_config(opt);
  const fs::path dir = prepare_out_dir(opt);
  write_resolved_config(dir, l, log);
  for (const auto& entry : l.cfg.datasets) {
    const PreparedDataset p = prepare_dataset(entry, l.cfg.split_options, l.cfg.max_splits);
    nlohmann::ordered_json j = stamped(l);
    j["dataset"] = p.encoded.name;
    j["splits"] = nlohmann::ordered_json::array();
    for (const auto& s : p.splits) j["splits"].push_back(nlohmann::ordered_json(s.to_json()));
    const fs::path path = dir / ("splits_" + p.encoded.name + ".json");
    write_json(path, j);
    log("split", p.encoded.name + ": " + std::to_string(p.splits.size()) + " split(s) -> " + path.string());
  }
}

std::map<std::string, std::vector<ProbeMeasurement>> probe_dataset(const Loaded& l, const PreparedDataset& p,
                                                                   ProbeBackend* backend, std::size_t n_templates) {
  return probe_features(p.encoded.features, p.encoded.target_description, l.cfg.probe, l.cfg.elicitation,
                        n_templates, backend);
}

std::size_t templates_needed(const Loaded& l) {
  return l.grid ? std::max(l.grid->max_n_sent(), l.cfg.elicitation.n_sent) : l.cfg.elicitation.n_sent;
}

void cmd_probe(const Options& opt, const Logger& log) {
  const Loaded l = load_config(opt);
  const fs::path dir = prepare_out_dir(opt);
  write_resolved_config(dir, l, log);
  const auto backend = make_backend(opt, l.cfg, log);
  for (const auto& entry : l.cfg.datasets) {
    const PreparedDataset p = prepare_dataset(entry, l.cfg.split_options, l.cfg.max_splits);
    const auto ms = probe_dataset(l, p, backend.get(), templates_needed(l));
    nlohmann::ordered_json j = stamped(l);
    j["dataset"] = p.encoded.name;
    j["model_id"] = model_name(backend.get(), l.cfg);
    j["measurements"] = nlohmann::ordered_json::object();
    for (const auto& [feature, list] : ms) {
      auto& arr = j["measurements"][feature] = nlohmann::ordered_json::array();
      for (const auto& m : list) arr.push_back(nlohmann::ordered_json(m.to_json()));
    }
    const fs::path path = dir / ("probe_" + p.encoded.name + ".json");
    write_json(path, j);
    log("probe", p.encoded.name + ": " + std::to_string(ms.size()) + " feature(s) -> " + path.string());
  }
  if (!l.cfg.probe.cache_path.empty()) log("probe", "cache " + l.cfg.probe.cache_path);
}

void cmd_elicit(const Options& opt, const Logger& log) {
  const Loaded l = load_config(opt);
  const fs::path dir = prepare_out_dir(opt);
  write_resolved_config(dir, l, log);
  const auto backend = make_backend(opt, l.cfg, log);
  for (const auto& entry : l.cfg.datasets) {
    const PreparedDataset p = prepare_dataset(entry, l.cfg.split_options, l.cfg.max_splits);
    const auto ms = probe_dataset(l, p, backend.get(), l.cfg.elicitation.n_sent);
    PriorSet ps = elicit_prior_set(p.encoded.features, ms, l.cfg.elicitation, model_name(backend.get(), l.cfg));
    ps.meta["config_hash"] = l.hash;
    ps.meta["master_seed"] = l.cfg.seed;
    const fs::path path = dir / ("priors_" + p.encoded.name + ".json");
    ps.save(path.string());
    log("elicit", p.encoded.name + ": " + std::to_string(ps.d()) + " prior(s) -> " + path.string());
  }
}

void cmd_fit(const Options& opt, const Logger& log) {
  const Loaded l = load_config(opt);
  const fs::path dir = prepare_out_dir(opt);
  write_resolved_config(dir, l, log);
  const DatasetEntry& entry = select_dataset(l.cfg, opt.dataset);
  const PreparedDataset p = prepare_dataset(entry, l.cfg.split_options, 0);
  const SplitSpec* spec = &p.splits.front();
  if (!opt.split.empty()) {
    spec = nullptr;
    for (const auto& s : p.splits) {
      if (s.label() == opt.split) spec = &s;
    }
    if (!spec) throw ConfigError("split '" + opt.split + "' is not admissible for " + p.encoded.name);
  }
  const TabularDataset scaled = preprocess(p.encoded, {.standardize = true, .fit_mask = spec->train_mask}).data;
  const auto [train, eval] = apply_split(scaled, *spec);
  const Condition condition = condition_from_string(opt.condition);
  const std::uint64_t seed = cell_seed(l.cfg.seed, p.encoded.name, spec->label(), condition);

  std::optional<PriorSet> priors;
  if (!opt.priors_path.empty()) {
    priors = PriorSet::load(opt.priors_path).aligned_to(scaled.features);
  } else if (condition == Condition::loid) {
    const auto backend = make_backend(opt, l.cfg, log);
    const auto ms = probe_dataset(l, p, backend.get(), l.cfg.elicitation.n_sent);
    priors = elicit_prior_set(p.encoded.features, ms, l.cfg.elicitation, model_name(backend.get(), l.cfg));
  } else if (condition == Condition::normal_0_1 || condition == Condition::normal_0_045 ||
             condition == Condition::uniform_m1_1) {
    std::vector<std::string> names;
    for (const auto& f : scaled.features) names.push_back(f.name);
    priors = baseline_priors(baseline_prior_from_string(opt.condition), names, l.cfg.elicitation.intercept);
    if (const auto it = l.cfg.baseline_sigma.find(condition); it != l.cfg.baseline_sigma.end()) {
      for (auto& pr : priors->coefficients) pr.sigma = it->second;
    }
  }
  const TabularDataset& fit_rows = condition == Condition::cap ? scaled : train;
  const std::string stem = p.encoded.name + "_" + opt.condition;
  nlohmann::ordered_json summary = stamped(l);
  summary["dataset"] = p.encoded.name;
  summary["split"] = spec->label();
  summary["condition"] = opt.condition;
  summary["seed"] = seed;

  Eigen::VectorXd prob;
  const Engine engine = !priors ? Engine::mle : priors->all_normal() ? l.cfg.engine : Engine::nuts;
  summary["engine"] = to_string(engine);
  std::vector<std::string> names;
  for (const auto& f : scaled.features) names.push_back(f.name);
  names.push_back("_intercept");
  if (engine == Engine::nuts) {
    SamplerConfig sc = l.cfg.sampler;
    sc.seed = seed;
    const PosteriorDraws draws = nuts_sample(LogisticPosterior(fit_rows, *priors), sc);
    draws.write_csv((dir / (stem + "_draws.csv")).string());
    draws.write_diagnostics((dir / (stem + "_draws.diagnostics.json")).string());
    prob = predict_proba(draws, eval.x);
    summary["draws"] = stem + "_draws.csv";
    summary["divergences"] = draws.divergences();
  } else {
    nlohmann::ordered_json coef = nlohmann::ordered_json::object();
    Coefficients c;
    if (engine == Engine::laplace) {
      const LaplaceFit fit = laplace_fit(fit_rows, *priors);
      prob = predict_proba(fit, eval.x, seed, l.cfg.laplace_samples);
      c = fit.mode;
      nlohmann::ordered_json cov = nlohmann::ordered_json::array();
      for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
        std::vector<double> row(fit.covariance.cols());
        for (Eigen::Index k = 0; k < fit.covariance.cols(); ++k) row[k] = fit.covariance(r, k);
        cov.push_back(row);
      }
      summary["covariance"] = cov;
    } else {
      c = mle_fit(fit_rows, l.cfg.mle_ridge);
      prob = predict_proba(c, eval.x);
    }
    const Eigen::VectorXd packed = c.packed();
    for (std::size_t k = 0; k < names.size(); ++k) coef[names[k]] = packed[static_cast<Eigen::Index>(k)];
    summary[engine == Engine::laplace ? "map" : "coefficients"] = coef;
  }
  summary["auc"] = auc(prob, eval.y);
  const fs::path path = dir / (stem + "_fit.json");
  write_json(path, summary);
  log("fit", stem + " " + to_string(engine) + " auc " + std::to_string(summary["auc"].get<double>()) + " -> " +
                 path.string());
}

void cmd_eval(const Options& opt, const Logger& log) {
  const Loaded l = load_config(opt);
  const fs::path dir = prepare_out_dir(opt);
  write_resolved_config(dir, l, log);
  const bool wants_loid =
      std::find(l.cfg.conditions.begin(), l.cfg.conditions.end(), Condition::loid) != l.cfg.conditions.end();
  const auto backend = wants_loid ? make_backend(opt, l.cfg, log) : nullptr;
  const ExperimentReport report = run_experiment(l.cfg, backend.get(), log.fn());
  write_results_jsonl((dir / "results.jsonl").string(), report);
  write_timings_jsonl((dir / "timings.jsonl").string(), report);
  write_text(dir / "summary.csv", render_summary_csv(report));
  log("eval", std::to_string(report.results.size()) + " result(s) -> " + (dir / "results.jsonl").string());
  std::cout << render_summary_table(report);
}

void cmd_sweep(const Options& opt, const Logger& log) {
  Loaded l = load_config(opt);
  if (!l.grid) l.grid = SweepGrid{};
  const fs::path dir = prepare_out_dir(opt);
  write_resolved_config(dir, l, log);
  const auto backend = make_backend(opt, l.cfg, log);
  const SweepResult result = sweep(*l.grid, l.cfg, backend.get(), log.fn());
  write_text(dir / "sweep.csv", render_sweep_csv(result));
  write_text(dir / "sweep_plot.csv", render_sweep_plot_csv(result));
  write_json(dir / "sweep_summary.json", sweep_summary_json(result));
  const auto& best = result.average_best;
  log("sweep", std::to_string(result.rows.size()) + " row(s); average best alpha=" + std::to_string(best.cell.alpha) +
                   " gamma=" + std::to_string(best.cell.gamma) + " n_sent=" + std::to_string(best.cell.n_sent) +
                   " -> " + (dir / "sweep.csv").string());
}

void cmd_report(const Options& opt, const Logger& log) {
  const std::string path = opt.results_path.empty() ? (fs::path(opt.out_dir) / "results.jsonl").string()
                                                    : opt.results_path;
  const ExperimentReport report = load_results_jsonl(path);
  const fs::path dir = prepare_out_dir(opt);
  write_text(dir / "summary.csv", render_summary_csv(report));
  log("report", std::to_string(report.results.size()) + " result(s) from " + path + " -> " +
                    (dir / "summary.csv").string());
  std::cout << render_summary_table(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-model prior elicitation for Bayesian logistic regression"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config_path, "experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed; overrides the config");
  app.add_option("--out-dir", opt.out_dir, "output directory")->capture_default_str();
  app.add_option("--backend-url", opt.backend_url, "HTTP scoring backend (else LOID_BACKEND_URL)");
  app.add_option("--mock-fixture", opt.mock_fixture, "serve probe answers from a JSON fixture");
  app.add_option("--override", opt.overrides, "dotted-path override key=value (repeatable)");
  app.add_flag("--verbose,-v", opt.verbose, "log per-cell progress");

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const Options&, const Logger&);
  };
  const std::vector<Sub> subs{
      {"split", "write admissible splits per dataset", cmd_split},
      {"probe", "populate the probe cache and write measurements", cmd_probe},
      {"elicit", "write an elicited prior set per dataset", cmd_elicit},
      {"fit", "fit one engine on one dataset/split and persist draws or MAP", cmd_fit},
      {"eval", "run the experiment and write results.jsonl and summary.csv", cmd_eval},
      {"sweep", "hyperparameter sweep over alpha, gamma, n_sent", cmd_sweep},
      {"report", "render summary.csv and the gap-closed table from results.jsonl", cmd_report},
  };
  std::vector<CLI::App*> handles;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->fallthrough();
    handles.push_back(sub);
  }
  handles[3]->add_option("--dataset", opt.dataset, "dataset name (default: first)");
  handles[3]->add_option("--split", opt.split, "split label feature:strategy (default: first admissible)");
  handles[3]->add_option("--condition", opt.condition, "ood_lr, loid, normal_0_1, normal_0_045, uniform_m1_1, cap")
      ->capture_default_str();
  handles[3]->add_option("--priors", opt.priors_path, "prior set JSON instead of the condition's priors");
  handles[6]->add_option("--results", opt.results_path, "results.jsonl (default: <out-dir>/results.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (*seed_opt) opt.seed = seed;

  const Logger log(opt.verbose);
  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (handles[i]->parsed()) subs[i].run(opt, log);
    }
  } catch (const NumericalError& e) {
    log("error", std::string("numerical: ") + e.what());
    try {
      const fs::path dir = prepare_out_dir(opt);
      write_json(dir / "error.json", {{"category", "numerical"}, {"message", e.what()}});
      log("error", "diagnostics " + (dir / "error.json").string());
    } catch (const std::exception&) {
    }
    return kExitNumerical;
  } catch (const BackendError& e) {
    log("error", std::string("backend: ") + e.what());
    return kExitBackend;
  } catch (const ConfigError& e) {
    log("error", std::string("config: ") + e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log("error", e.what());
    return 1;
  }
  return 0;
}
