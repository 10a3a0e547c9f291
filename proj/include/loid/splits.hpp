#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loid/dataset.hpp"

namespace loid {

enum class SplitStrategy { extreme_10, extreme_5_95, moderate_20_80, tail_0_50, tail_50_100 };

inline constexpr std::array<SplitStrategy, 5> kAllStrategies{
    SplitStrategy::extreme_10, SplitStrategy::extreme_5_95, SplitStrategy::moderate_20_80, SplitStrategy::tail_0_50,
    SplitStrategy::tail_50_100};

std::string to_string(SplitStrategy s);
SplitStrategy split_strategy_from_string(const std::string& s);

// Which rows a split model is scored on: every row, or only rows outside
// the training quantile band.
enum class EvalMode { entire, complement };

std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

struct QuantileRange {
  double lower_q = 0.0;
  double upper_q = 1.0;
};

QuantileRange default_range(SplitStrategy s);

struct SplitOptions {
  std::size_t min_samples = 50;
  EvalMode eval = EvalMode::entire;
  std::map<SplitStrategy, QuantileRange> ranges;  // overrides default_range

  QuantileRange range(SplitStrategy s) const;
  static SplitOptions from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SplitSpec {
  SplitStrategy strategy = SplitStrategy::extreme_10;
  std::string shift_feature;
  double lower_q = 0.0;
  double upper_q = 1.0;
  // Feature values at the quantile bounds; membership is inclusive.
  double lower_value = 0.0;
  double upper_value = 0.0;
  EvalMode eval = EvalMode::entire;
  std::vector<bool> train_mask;

  std::size_t train_size() const;
  std::string label() const;
  nlohmann::json to_json() const;
  static SplitSpec from_json(const nlohmann::json& j, std::size_t n_rows);
};

// Empirical quantile with linear interpolation between order statistics
// (h = (n - 1) q). `sorted` must be ascending and non-empty.
double quantile_sorted(const std::vector<double>& sorted, double q);

// Builds the split for one (feature, strategy) pair without eligibility
// filtering.
SplitSpec make_split(const TabularDataset& ds, const std::string& feature, SplitStrategy strategy,
                     const SplitOptions& opts = {});

// Whether a split satisfies the size and class-diversity rules.
bool split_is_admissible(const TabularDataset& ds, const SplitSpec& spec, std::size_t min_samples);

// Every admissible split over numeric features with at least two distinct
// values, feature-major in column order, strategies in declaration order.
std::vector<SplitSpec> enumerate_splits(const TabularDataset& ds, const SplitOptions& opts = {});

// Returns (train, eval). Eval is the whole dataset unless the spec asks
// for the complement.
std::pair<TabularDataset, TabularDataset> apply_split(const TabularDataset& ds, const SplitSpec& spec);

}  // namespace loid
