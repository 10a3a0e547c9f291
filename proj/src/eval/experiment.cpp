#include "loid/eval/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loid/config.hpp"
#include "loid/error.hpp"
#include "loid/eval/metrics.hpp"
#include "loid/inference/laplace.hpp"
#include "loid/inference/predict.hpp"

namespace loid {

std::string to_string(Condition c) {
  switch (c) {
    case Condition::ood_lr: return "ood_lr";
    case Condition::loid: return "loid";
    case Condition::normal_0_1: return "normal_0_1";
    case Condition::normal_0_045: return "normal_0_045";
    case Condition::uniform_m1_1: return "uniform_m1_1";
    case Condition::cap: return "cap";
  }
  return "?";
}

Condition condition_from_string(const std::string& s) {
  for (Condition c : kAllConditions) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown condition '" + s + "'");
}

std::string to_string(Engine e) {
  switch (e) {
    case Engine::nuts: return "nuts";
    case Engine::laplace: return "laplace";
    case Engine::mle: return "mle";
  }
  return "?";
}

Engine engine_from_string(const std::string& s) {
  if (s == "nuts") return Engine::nuts;
  if (s == "laplace") return Engine::laplace;
  if (s == "mle") return Engine::mle;
  throw ConfigError("unknown engine '" + s + "'");
}

TemplateSet ProbeSettings::templates() const {
  return templates_path ? TemplateSet::from_file(*templates_path) : TemplateSet::defaults();
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

DatasetEntry entry_from_json(const nlohmann::json& j, const std::string& base_dir) {
  DatasetEntry entry;
  auto dataset_from = [&](const nlohmann::json& c) {
    if (c.is_string()) return DatasetConfig::from_file(resolve_path(c.get<std::string>(), base_dir));
    return DatasetConfig::from_json(c, base_dir);
  };
  if (j.is_string()) {
    entry.dataset = dataset_from(j);
    return entry;
  }
  if (!j.is_object() || !j.contains("config")) throw ConfigError("dataset entry needs a 'config' path or object");
  reject_unknown_keys(j, {"config", "splits"}, "dataset entry");
  entry.dataset = dataset_from(j.at("config"));
  for (const auto& s : j.value("splits", nlohmann::json::array())) {
    entry.splits.push_back({s.at("feature").get<std::string>(), split_strategy_from_string(s.at("strategy"))});
  }
  return entry;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("experiment lists no datasets");
  if (conditions.empty()) throw ConfigError("experiment lists no conditions");
  if (engine == Engine::mle) throw ConfigError("engine must be nuts or laplace; mle is implied by ood_lr and cap");
  if (!(mle_ridge >= 0.0)) throw ConfigError("mle_ridge must be nonnegative");
  if (laplace_samples < 1) throw ConfigError("laplace_samples must be positive");
  for (const auto& [c, sigma] : baseline_sigma) {
    if (c != Condition::normal_0_1 && c != Condition::normal_0_045) {
      throw ConfigError("baseline_sigma applies to normal baselines only, not " + to_string(c));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("baseline_sigma must be finite and positive");
  }
  sampler.validate();
  elicitation.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  reject_unknown_keys(j,
                      {"datasets", "conditions", "engine", "sampler", "elicitation", "splits", "max_splits", "probe",
                       "mle_ridge", "laplace_samples", "baseline_sigma", "seed"},
                      "experiment config");
  ExperimentConfig cfg;
  try {
    for (const auto& d : j.at("datasets")) cfg.datasets.push_back(entry_from_json(d, base_dir));
    if (j.contains("conditions")) {
      cfg.conditions.clear();
      for (const auto& c : j.at("conditions")) cfg.conditions.push_back(condition_from_string(c));
    }
    cfg.engine = engine_from_string(j.value("engine", std::string("nuts")));
    if (j.contains("sampler")) cfg.sampler = SamplerConfig::from_json(j.at("sampler"));
    if (j.contains("elicitation")) cfg.elicitation = ElicitationConfig::from_json(j.at("elicitation"));
    if (j.contains("splits")) cfg.split_options = SplitOptions::from_json(j.at("splits"));
    cfg.max_splits = j.value("max_splits", cfg.max_splits);
    if (j.contains("probe")) {
      const auto& p = j.at("probe");
      reject_unknown_keys(p, {"templates", "cache", "model_id", "max_in_flight"}, "probe");
      if (p.contains("templates") && !p.at("templates").is_null()) {
        cfg.probe.templates_path = resolve_path(p.at("templates").get<std::string>(), base_dir);
      }
      cfg.probe.cache_path = resolve_path(p.value("cache", std::string()), base_dir);
      cfg.probe.model_id = p.value("model_id", std::string());
      cfg.probe.max_in_flight = p.value("max_in_flight", cfg.probe.max_in_flight);
    }
    cfg.mle_ridge = j.value("mle_ridge", cfg.mle_ridge);
    cfg.laplace_samples = j.value("laplace_samples", cfg.laplace_samples);
    const nlohmann::json sigmas = j.value("baseline_sigma", nlohmann::json::object());
    for (const auto& [name, sigma] : sigmas.items()) {
      cfg.baseline_sigma[condition_from_string(name)] = sigma.get<double>();
    }
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["datasets"] = nlohmann::json::array();
  for (const auto& e : datasets) {
    nlohmann::json splits = nlohmann::json::array();
    for (const auto& s : e.splits) splits.push_back({{"feature", s.feature}, {"strategy", to_string(s.strategy)}});
    j["datasets"].push_back({{"config", e.dataset.to_json()}, {"splits", splits}});
  }
  j["conditions"] = nlohmann::json::array();
  for (Condition c : conditions) j["conditions"].push_back(to_string(c));
  j["engine"] = to_string(engine);
  j["sampler"] = sampler.to_json();
  j["elicitation"] = elicitation.to_json();
  j["splits"] = split_options.to_json();
  j["max_splits"] = max_splits;
  j["probe"] = {{"templates", probe.templates_path ? nlohmann::json(*probe.templates_path) : nlohmann::json()},
                {"cache", probe.cache_path},
                {"model_id", probe.model_id},
                {"max_in_flight", probe.max_in_flight}};
  j["mle_ridge"] = mle_ridge;
  j["laplace_samples"] = laplace_samples;
  j["baseline_sigma"] = nlohmann::json::object();
  for (const auto& [c, sigma] : baseline_sigma) j["baseline_sigma"][to_string(c)] = sigma;
  j["seed"] = seed;
  return j;
}

std::string ExperimentConfig::hash() const { return config_hash(to_json()); }

// ---------------------------------------------------------------------------
// Records

nlohmann::ordered_json EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["split"] = {{"label", split.label},
                {"feature", split.feature},
                {"strategy", to_string(split.strategy)},
                {"lower_q", split.lower_q},
                {"upper_q", split.upper_q},
                {"train_size", split.train_size},
                {"eval_size", split.eval_size},
                {"eval", to_string(split.eval)}};
  j["condition"] = to_string(condition);
  j["engine"] = to_string(engine);
  j["auc"] = auc;
  j["gap_closed_pct"] = gap_closed_pct ? nlohmann::ordered_json(*gap_closed_pct) : nlohmann::ordered_json();
  j["seed"] = seed;
  j["diagnostics"] = diagnostics;
  return j;
}

EvalResult EvalResult::from_json(const nlohmann::json& j) {
  EvalResult r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    const auto& s = j.at("split");
    r.split.label = s.at("label").get<std::string>();
    r.split.feature = s.value("feature", std::string());
    r.split.strategy = split_strategy_from_string(s.value("strategy", std::string("moderate_20_80")));
    r.split.lower_q = s.value("lower_q", 0.0);
    r.split.upper_q = s.value("upper_q", 1.0);
    r.split.train_size = s.value("train_size", std::size_t{0});
    r.split.eval_size = s.value("eval_size", std::size_t{0});
    r.split.eval = eval_mode_from_string(s.value("eval", std::string("entire")));
    r.condition = condition_from_string(j.at("condition"));
    r.engine = engine_from_string(j.value("engine", std::string("mle")));
    r.auc = j.at("auc").get<double>();
    if (j.contains("gap_closed_pct") && !j.at("gap_closed_pct").is_null()) r.gap_closed_pct = j.at("gap_closed_pct");
    r.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("diagnostics")) r.diagnostics = j.at("diagnostics");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("result record: ") + e.what());
  }
  if (!(r.auc >= 0.0 && r.auc <= 1.0)) throw ConfigError("result record: auc outside [0, 1]");
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline pieces

std::uint64_t cell_seed(std::uint64_t master, const std::string& dataset, const std::string& split_label,
                        Condition condition) {
  return derive_seed(master, dataset + "\x1f" + split_label + "\x1f" + to_string(condition));
}

PreparedDataset prepare_dataset(const DatasetEntry& entry, const SplitOptions& opts, std::size_t max_splits) {
  PreparedDataset out;
  const TabularDataset raw = load_dataset(entry.dataset);
  // Encode only; scaling waits for the split so it uses training rows alone.
  PreprocessResult encoded = preprocess(raw, {.standardize = false, .fit_mask = std::nullopt});
  out.encoded = std::move(encoded.data);
  out.warnings = std::move(encoded.warnings);
  if (entry.splits.empty()) {
    out.splits = enumerate_splits(out.encoded, opts);
  } else {
    for (const auto& sel : entry.splits) {
      SplitSpec spec = make_split(out.encoded, sel.feature, sel.strategy, opts);
      if (!split_is_admissible(out.encoded, spec, opts.min_samples)) {
        throw DataError("degenerate split " + spec.label() + " on " + out.encoded.name + ": " +
                        std::to_string(spec.train_size()) + " training rows or a single class");
      }
      out.splits.push_back(std::move(spec));
    }
  }
  if (max_splits > 0 && out.splits.size() > max_splits) out.splits.resize(max_splits);
  if (out.splits.empty()) throw DataError("dataset " + out.encoded.name + " has no admissible split");
  return out;
}

std::map<std::string, std::vector<ProbeMeasurement>> probe_features(const std::vector<FeatureMeta>& features,
                                                                    const std::string& target_description,
                                                                    const ProbeSettings& settings,
                                                                    const ElicitationConfig& elicitation,
                                                                    std::size_t n_templates, ProbeBackend* backend) {
  const TemplateSet all = settings.templates();
  if (all.size() < n_templates) {
    throw ConfigError("need " + std::to_string(n_templates) + " templates per feature, template set has " +
                      std::to_string(all.size()));
  }
  const TemplateSet ts = all.prefix(n_templates);
  ProbeCache cache = settings.cache_path.empty() ? ProbeCache() : ProbeCache(settings.cache_path);
  ProbeOptions opts;
  opts.max_in_flight = settings.max_in_flight;
  opts.use_descriptions = elicitation.use_descriptions;
  Prober prober(backend, cache, opts, backend ? std::string() : settings.model_id);
  std::map<std::string, std::vector<ProbeMeasurement>> out;
  for (const auto& f : features) out[f.name] = prober.probe_feature(f, target_description, ts);
  return out;
}

FitOutcome fit_and_predict(const TabularDataset& train, const Eigen::MatrixXd& eval_x,
                           const std::optional<PriorSet>& priors, Engine engine, const ExperimentConfig& cfg,
                           std::uint64_t seed) {
  FitOutcome out;
  if (!priors) {
    out.engine = Engine::mle;
    out.probabilities = predict_proba(mle_fit(train, cfg.mle_ridge), eval_x);
    return out;
  }
  // The Laplace approximation has no Uniform prior form.
  out.engine = priors->all_normal() ? engine : Engine::nuts;
  if (out.engine == Engine::laplace) {
    const LaplaceFit fit = laplace_fit(train, *priors);
    out.probabilities = predict_proba(fit, eval_x, seed, cfg.laplace_samples);
    out.diagnostics = {{"newton_iterations", fit.iterations}};
    return out;
  }
  SamplerConfig sc = cfg.sampler;
  sc.seed = seed;
  const PosteriorDraws draws = nuts_sample(LogisticPosterior(train, *priors), sc);
  out.probabilities = predict_proba(draws, eval_x);
  out.diagnostics = {{"divergences", draws.divergences()},
                     {"mean_accept", draws.mean_accept()},
                     {"max_rhat", draws.rhat().maxCoeff()},
                     {"min_ess", draws.ess().minCoeff()}};
  return out;
}

namespace {

std::optional<PriorSet> priors_for(Condition c, const std::vector<FeatureMeta>& features, const PriorSet* elicited,
                                   const ExperimentConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  auto baseline = [&](BaselinePrior kind) {
    PriorSet ps = baseline_priors(kind, names, cfg.elicitation.intercept);
    if (const auto it = cfg.baseline_sigma.find(c); it != cfg.baseline_sigma.end()) {
      for (auto& p : ps.coefficients) p.sigma = it->second;
      ps.meta["sigma_override"] = it->second;
    }
    return ps;
  };
  switch (c) {
    case Condition::ood_lr:
    case Condition::cap: return std::nullopt;
    case Condition::loid: return elicited->aligned_to(features);
    case Condition::normal_0_1: return baseline(BaselinePrior::normal_0_1);
    case Condition::normal_0_045: return baseline(BaselinePrior::normal_0_045);
    case Condition::uniform_m1_1: return baseline(BaselinePrior::uniform_m1_1);
  }
  return std::nullopt;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, ProbeBackend* backend, const LogFn& log_fn) {
  cfg.validate();
  const LogFn log = log_fn ? log_fn : [](const std::string&, const std::string&) {};
  ExperimentReport report;
  report.config_hash = cfg.hash();
  report.seed = cfg.seed;
  const bool wants_loid =
      std::find(cfg.conditions.begin(), cfg.conditions.end(), Condition::loid) != cfg.conditions.end();

  for (const auto& entry : cfg.datasets) {
    const PreparedDataset prepared = prepare_dataset(entry, cfg.split_options, cfg.max_splits);
    const TabularDataset& encoded = prepared.encoded;
    for (const auto& w : prepared.warnings) log("data", encoded.name + ": " + w);
    log("split", encoded.name + ": " + std::to_string(prepared.splits.size()) + " split(s)");

    std::optional<PriorSet> elicited;
    if (wants_loid) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto ms = probe_features(encoded.features, encoded.target_description, cfg.probe, cfg.elicitation,
                                     cfg.elicitation.n_sent, backend);
      const std::string model = backend ? backend->model_id() : cfg.probe.model_id;
      elicited = elicit_prior_set(encoded.features, ms, cfg.elicitation, model);
      report.probe_seconds[encoded.name] = seconds_since(t0);
      log("probe", encoded.name + ": " + std::to_string(encoded.d()) + " feature(s) probed");
    }

    for (const auto& spec : prepared.splits) {
      const TabularDataset scaled =
          preprocess(encoded, {.standardize = true, .fit_mask = spec.train_mask}).data;
      const auto [train, eval] = apply_split(scaled, spec);
      SplitSummary summary{spec.label(), spec.shift_feature, spec.strategy, spec.lower_q, spec.upper_q,
                           static_cast<std::size_t>(train.n()), static_cast<std::size_t>(eval.n()), spec.eval};

      std::vector<EvalResult> cell_results;
      for (Condition c : cfg.conditions) {
        EvalResult r;
        r.dataset = encoded.name;
        r.split = summary;
        r.condition = c;
        r.seed = cell_seed(cfg.seed, encoded.name, summary.label, c);
        const auto priors = priors_for(c, scaled.features, elicited ? &*elicited : nullptr, cfg);
        const auto t0 = std::chrono::steady_clock::now();
        // Cap is the full-data upper bound.
        const FitOutcome fit =
            fit_and_predict(c == Condition::cap ? scaled : train, eval.x, priors, cfg.engine, cfg, r.seed);
        r.runtime_seconds = seconds_since(t0);
        r.engine = fit.engine;
        r.diagnostics = fit.diagnostics;
        r.auc = auc(fit.probabilities, eval.y);
        log("fit", r.dataset + " " + summary.label + " " + to_string(c) + " " + to_string(r.engine) +
                       " auc=" + fmt("%.4f", r.auc));
        cell_results.push_back(std::move(r));
      }

      std::optional<double> ood, cap;
      for (const auto& r : cell_results) {
        if (r.condition == Condition::ood_lr) ood = r.auc;
        if (r.condition == Condition::cap) cap = r.auc;
      }
      if (ood && cap) {
        for (auto& r : cell_results) r.gap_closed_pct = gap_closed(r.auc, *ood, *cap);
      }
      for (auto& r : cell_results) report.results.push_back(std::move(r));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

}  // namespace

void write_results_jsonl(const std::string& path, const ExperimentReport& report) {
  auto out = open_output(path);
  for (const auto& r : report.results) {
    nlohmann::ordered_json j = r.to_json();
    j["config_hash"] = report.config_hash;
    j["master_seed"] = report.seed;
    out << j.dump() << '\n';
  }
}

void write_timings_jsonl(const std::string& path, const ExperimentReport& report) {
  auto out = open_output(path);
  for (const auto& [dataset, secs] : report.probe_seconds) {
    nlohmann::ordered_json j{{"stage", "probe"}, {"dataset", dataset}, {"seconds", secs},
                             {"config_hash", report.config_hash}, {"master_seed", report.seed}};
    out << j.dump() << '\n';
  }
  for (const auto& r : report.results) {
    nlohmann::ordered_json j{{"stage", "fit_predict"},  {"dataset", r.dataset},
                             {"split", r.split.label},  {"condition", to_string(r.condition)},
                             {"seconds", r.runtime_seconds}, {"config_hash", report.config_hash},
                             {"master_seed", report.seed}};
    out << j.dump() << '\n';
  }
}

ExperimentReport load_results_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open results file " + path);
  ExperimentReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + " line " + std::to_string(lineno) + ": not JSON");
    report.results.push_back(EvalResult::from_json(j));
    report.config_hash = j.value("config_hash", report.config_hash);
    report.seed = j.value("master_seed", report.seed);
  }
  // Records written without gap values still get them when both bounds exist.
  std::map<std::pair<std::string, std::string>, std::pair<std::optional<double>, std::optional<double>>> bounds;
  for (const auto& r : report.results) {
    auto& b = bounds[{r.dataset, r.split.label}];
    if (r.condition == Condition::ood_lr) b.first = r.auc;
    if (r.condition == Condition::cap) b.second = r.auc;
  }
  for (auto& r : report.results) {
    const auto& b = bounds[{r.dataset, r.split.label}];
    if (!r.gap_closed_pct && b.first && b.second) r.gap_closed_pct = gap_closed(r.auc, *b.first, *b.second);
  }
  return report;
}

namespace {

struct SummaryRow {
  std::string dataset;
  std::string split;
  std::map<Condition, double> auc;
  std::optional<double> loid_gap;
  std::string engine;
};

std::vector<SummaryRow> summary_rows(const ExperimentReport& report) {
  std::vector<SummaryRow> rows;
  for (const auto& r : report.results) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const SummaryRow& s) { return s.dataset == r.dataset && s.split == r.split.label; });
    if (it == rows.end()) {
      rows.push_back({r.dataset, r.split.label, {}, std::nullopt, ""});
      it = std::prev(rows.end());
    }
    it->auc[r.condition] = r.auc;
    if (r.condition == Condition::loid) {
      it->loid_gap = r.gap_closed_pct;
      it->engine = to_string(r.engine);
    }
  }
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::string render_summary_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "dataset,split";
  for (Condition c : kAllConditions) out << ',' << to_string(c);
  out << ",gap_closed_pct,loid_engine,config_hash,master_seed\n";
  for (const auto& row : summary_rows(report)) {
    out << csv_field(row.dataset) << ',' << csv_field(row.split);
    for (Condition c : kAllConditions) {
      out << ',';
      if (const auto it = row.auc.find(c); it != row.auc.end()) out << fmt("%.4f", it->second);
    }
    out << ',' << (row.loid_gap ? fmt("%+.1f", *row.loid_gap) : std::string()) << ',' << row.engine << ','
        << report.config_hash << ',' << report.seed << '\n';
  }
  return out.str();
}

std::string render_summary_table(const ExperimentReport& report) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s %-28s", "dataset", "split");
  out << buf;
  for (Condition c : kAllConditions) {
    std::snprintf(buf, sizeof(buf), " %12s", to_string(c).c_str());
    out << buf;
  }
  out << "  gap_closed%\n";
  for (const auto& row : summary_rows(report)) {
    std::snprintf(buf, sizeof(buf), "%-16s %-28s", row.dataset.c_str(), row.split.c_str());
    out << buf;
    for (Condition c : kAllConditions) {
      const auto it = row.auc.find(c);
      std::snprintf(buf, sizeof(buf), " %12s", it == row.auc.end() ? "-" : fmt("%.4f", it->second).c_str());
      out << buf;
    }
    out << "  " << (row.loid_gap ? fmt("%+.1f", *row.loid_gap) : std::string("-")) << '\n';
  }
  return out.str();
}

}  // namespace loid
