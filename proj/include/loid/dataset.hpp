#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace loid {

enum class FeatureKind { numeric, categorical, onehot };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

struct FeatureMeta {
  std::string name;
  std::optional<std::string> description;
  FeatureKind kind = FeatureKind::numeric;
  // Originating CSV column; equals `name` except for one-hot indicators.
  std::string source_column;
  // categorical: level names, the matrix stores the level index.
  std::vector<std::string> levels;
  // onehot: the category this indicator encodes.
  std::string level;
  // numeric: affine scaling applied by preprocess, x' = (x - center) / scale.
  bool standardized = false;
  double center = 0.0;
  double scale = 1.0;

  // Text used when probing the language model about this feature.
  std::string prompt_text(bool use_description) const;
};

// Row-major view of a binary classification table. Missing numeric cells
// are NaN until preprocess imputes them.
struct TabularDataset {
  std::string name;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<FeatureMeta> features;
  std::string target_description;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index d() const { return x.cols(); }
  std::optional<std::size_t> feature_index(const std::string& feature) const;
  const FeatureMeta& feature(const std::string& feature) const;
  bool has_both_classes() const;
  // Throws DataError when the type invariants do not hold.
  void validate() const;
  TabularDataset select_rows(const std::vector<bool>& mask) const;
};

struct ColumnSchema {
  std::optional<FeatureKind> kind;
  std::optional<std::string> description;
};

struct DatasetConfig {
  std::string name;
  std::string csv_path;
  std::string label_column;
  // Raw label text -> class. Empty means {"0": 0, "1": 1}.
  std::map<std::string, int> label_mapping;
  std::string target_description;
  std::map<std::string, ColumnSchema> columns;
  // Precomputed feature selection; empty keeps every non-label column.
  std::vector<std::string> selected_features;
  std::vector<std::string> missing_tokens{"", "NA", "N/A", "?", "nan", "NaN"};

  // Relative csv paths are resolved against `base_dir`.
  static DatasetConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static DatasetConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

TabularDataset load_csv(const std::string& path, const DatasetConfig& schema);
inline TabularDataset load_dataset(const DatasetConfig& cfg) { return load_csv(cfg.csv_path, cfg); }

struct PreprocessOptions {
  bool standardize = true;
  // Rows whose statistics drive standardization; all rows when absent.
  std::optional<std::vector<bool>> fit_mask;
};

struct PreprocessResult {
  TabularDataset data;
  std::vector<std::string> warnings;
};

// One-hot encodes categoricals, optionally z-scores numeric columns, and
// imputes missing numeric cells with 0. Columns that already carry an
// applied transform are left untouched, so the operation is idempotent.
PreprocessResult preprocess(const TabularDataset& ds, const PreprocessOptions& opts = {});

// Applies the encoding and scaling recorded in `fitted` to another raw
// dataset with the same columns.
TabularDataset transform_like(const TabularDataset& raw, const std::vector<FeatureMeta>& fitted);

}  // namespace loid
