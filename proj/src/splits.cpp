#include "loid/splits.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "loid/error.hpp"

namespace loid {

std::string to_string(SplitStrategy s) {
  switch (s) {
    case SplitStrategy::extreme_10: return "extreme_10";
    case SplitStrategy::extreme_5_95: return "extreme_5_95";
    case SplitStrategy::moderate_20_80: return "moderate_20_80";
    case SplitStrategy::tail_0_50: return "tail_0_50";
    case SplitStrategy::tail_50_100: return "tail_50_100";
  }
  return "extreme_10";
}

SplitStrategy split_strategy_from_string(const std::string& s) {
  for (auto strategy : kAllStrategies) {
    if (to_string(strategy) == s) return strategy;
  }
  throw ConfigError("unknown split strategy '" + s + "'");
}

std::string to_string(EvalMode m) { return m == EvalMode::entire ? "entire" : "complement"; }

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "entire") return EvalMode::entire;
  if (s == "complement") return EvalMode::complement;
  throw ConfigError("unknown eval mode '" + s + "'");
}

QuantileRange default_range(SplitStrategy s) {
  switch (s) {
    case SplitStrategy::extreme_10: return {0.0, 0.10};
    case SplitStrategy::extreme_5_95: return {0.0, 0.05};
    case SplitStrategy::moderate_20_80: return {0.20, 0.80};
    case SplitStrategy::tail_0_50: return {0.0, 0.50};
    case SplitStrategy::tail_50_100: return {0.50, 1.0};
  }
  return {0.0, 1.0};
}

QuantileRange SplitOptions::range(SplitStrategy s) const {
  auto it = ranges.find(s);
  return it == ranges.end() ? default_range(s) : it->second;
}

SplitOptions SplitOptions::from_json(const nlohmann::json& j) {
  SplitOptions opts;
  try {
    opts.min_samples = j.value("min_samples", opts.min_samples);
    if (j.contains("eval")) opts.eval = eval_mode_from_string(j.at("eval").get<std::string>());
    if (j.contains("ranges")) {
      for (const auto& [k, v] : j.at("ranges").items()) {
        QuantileRange r{v.at(0).get<double>(), v.at(1).get<double>()};
        if (!(r.lower_q >= 0.0 && r.upper_q <= 1.0 && r.lower_q < r.upper_q)) {
          throw ConfigError("split range for " + k + " must satisfy 0 <= lower < upper <= 1");
        }
        opts.ranges[split_strategy_from_string(k)] = r;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("split options: ") + e.what());
  }
  return opts;
}

nlohmann::json SplitOptions::to_json() const {
  nlohmann::json j;
  j["min_samples"] = min_samples;
  j["eval"] = to_string(eval);
  nlohmann::json r = nlohmann::json::object();
  for (auto s : kAllStrategies) {
    const auto q = range(s);
    r[to_string(s)] = {q.lower_q, q.upper_q};
  }
  j["ranges"] = r;
  return j;
}

std::size_t SplitSpec::train_size() const {
  return static_cast<std::size_t>(std::count(train_mask.begin(), train_mask.end(), true));
}

std::string SplitSpec::label() const { return shift_feature + ":" + to_string(strategy); }

nlohmann::json SplitSpec::to_json() const {
  nlohmann::json j;
  j["strategy"] = to_string(strategy);
  j["feature"] = shift_feature;
  j["lower_q"] = lower_q;
  j["upper_q"] = upper_q;
  j["lower_value"] = lower_value;
  j["upper_value"] = upper_value;
  j["eval"] = to_string(eval);
  j["n_rows"] = train_mask.size();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train_mask.size(); ++i) {
    if (train_mask[i]) rows.push_back(i);
  }
  j["train_rows"] = rows;
  return j;
}

SplitSpec SplitSpec::from_json(const nlohmann::json& j, std::size_t n_rows) {
  SplitSpec s;
  try {
    s.strategy = split_strategy_from_string(j.at("strategy").get<std::string>());
    s.shift_feature = j.at("feature").get<std::string>();
    s.lower_q = j.at("lower_q").get<double>();
    s.upper_q = j.at("upper_q").get<double>();
    s.lower_value = j.value("lower_value", 0.0);
    s.upper_value = j.value("upper_value", 0.0);
    s.eval = eval_mode_from_string(j.value("eval", std::string("entire")));
    s.train_mask.assign(n_rows, false);
    for (auto r : j.at("train_rows").get<std::vector<std::size_t>>()) {
      if (r >= n_rows) throw DataError("split train row " + std::to_string(r) + " out of range");
      s.train_mask[r] = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("split spec: ") + e.what());
  }
  return s;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SplitSpec make_split(const TabularDataset& ds, const std::string& feature, SplitStrategy strategy,
                     const SplitOptions& opts) {
  const auto j = ds.feature_index(feature);
  if (!j) throw DataError("split: unknown feature '" + feature + "'");
  const QuantileRange range = opts.range(strategy);
  if (!(range.lower_q < range.upper_q)) throw ConfigError("split: lower quantile must be below upper quantile");

  const Eigen::VectorXd col = ds.x.col(static_cast<Eigen::Index>(*j));
  std::vector<double> sorted;
  sorted.reserve(static_cast<std::size_t>(col.size()));
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (!std::isnan(col[i])) sorted.push_back(col[i]);
  }
  std::sort(sorted.begin(), sorted.end());

  SplitSpec spec;
  spec.strategy = strategy;
  spec.shift_feature = feature;
  spec.lower_q = range.lower_q;
  spec.upper_q = range.upper_q;
  spec.eval = opts.eval;
  spec.lower_value = quantile_sorted(sorted, range.lower_q);
  spec.upper_value = quantile_sorted(sorted, range.upper_q);
  spec.train_mask.resize(static_cast<std::size_t>(col.size()));
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    spec.train_mask[static_cast<std::size_t>(i)] = col[i] >= spec.lower_value && col[i] <= spec.upper_value;
  }
  return spec;
}

bool split_is_admissible(const TabularDataset& ds, const SplitSpec& spec, std::size_t min_samples) {
  if (spec.train_mask.size() != static_cast<std::size_t>(ds.n())) return false;
  if (spec.train_size() < min_samples) return false;
  bool train_pos = false, train_neg = false, eval_pos = false, eval_neg = false;
  for (std::size_t i = 0; i < spec.train_mask.size(); ++i) {
    const bool pos = ds.y[static_cast<Eigen::Index>(i)] > 0.5;
    if (spec.train_mask[i]) (pos ? train_pos : train_neg) = true;
    if (spec.eval == EvalMode::entire || !spec.train_mask[i]) (pos ? eval_pos : eval_neg) = true;
  }
  return train_pos && train_neg && eval_pos && eval_neg;
}

std::vector<SplitSpec> enumerate_splits(const TabularDataset& ds, const SplitOptions& opts) {
  std::vector<SplitSpec> specs;
  for (std::size_t j = 0; j < ds.features.size(); ++j) {
    const FeatureMeta& f = ds.features[j];
    if (f.kind != FeatureKind::numeric) continue;
    std::set<double> distinct;
    const Eigen::VectorXd col = ds.x.col(static_cast<Eigen::Index>(j));
    for (Eigen::Index i = 0; i < col.size() && distinct.size() < 2; ++i) {
      if (!std::isnan(col[i])) distinct.insert(col[i]);
    }
    if (distinct.size() < 2) continue;
    for (auto strategy : kAllStrategies) {
      SplitSpec spec = make_split(ds, f.name, strategy, opts);
      if (split_is_admissible(ds, spec, opts.min_samples)) specs.push_back(std::move(spec));
    }
  }
  return specs;
}

std::pair<TabularDataset, TabularDataset> apply_split(const TabularDataset& ds, const SplitSpec& spec) {
  if (spec.train_mask.size() != static_cast<std::size_t>(ds.n())) {
    throw DataError("split mask length " + std::to_string(spec.train_mask.size()) + " does not match " +
                    std::to_string(ds.n()) + " rows");
  }
  TabularDataset train = ds.select_rows(spec.train_mask);
  if (spec.eval == EvalMode::entire) return {std::move(train), ds};
  std::vector<bool> rest(spec.train_mask.size());
  for (std::size_t i = 0; i < rest.size(); ++i) rest[i] = !spec.train_mask[i];
  return {std::move(train), ds.select_rows(rest)};
}

}  // namespace loid
