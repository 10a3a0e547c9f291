#include "loid/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "loid/csv.hpp"
#include "loid/error.hpp"

namespace loid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const std::string kMissingLevel = "missing";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

bool is_missing(const std::string& cell, const std::vector<std::string>& tokens) {
  return std::find(tokens.begin(), tokens.end(), cell) != tokens.end();
}

}  // namespace

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::numeric: return "numeric";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::onehot: return "onehot";
  }
  return "numeric";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "numeric") return FeatureKind::numeric;
  if (s == "categorical") return FeatureKind::categorical;
  if (s == "onehot" || s == "onehot-derived") return FeatureKind::onehot;
  throw ConfigError("unknown feature kind '" + s + "'");
}

std::string FeatureMeta::prompt_text(bool use_description) const {
  if (use_description && description && !description->empty()) return *description;
  if (kind == FeatureKind::onehot) return source_column + " = " + level;
  return name;
}

std::optional<std::size_t> TabularDataset::feature_index(const std::string& feature) const {
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].name == feature) return j;
  }
  return std::nullopt;
}

const FeatureMeta& TabularDataset::feature(const std::string& feature) const {
  auto j = feature_index(feature);
  if (!j) throw DataError("dataset '" + name + "' has no feature '" + feature + "'");
  return features[*j];
}

bool TabularDataset::has_both_classes() const {
  bool pos = false, neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    (y[i] > 0.5 ? pos : neg) = true;
  }
  return pos && neg;
}

void TabularDataset::validate() const {
  if (x.rows() != y.size()) throw DataError("dataset '" + name + "': row count differs from label count");
  if (static_cast<std::size_t>(x.cols()) != features.size()) {
    throw DataError("dataset '" + name + "': feature count differs from row width");
  }
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("dataset '" + name + "': label outside {0,1}");
  }
  std::set<std::string> names;
  for (const auto& f : features) {
    if (!names.insert(f.name).second) throw DataError("dataset '" + name + "': duplicate feature '" + f.name + "'");
  }
}

TabularDataset TabularDataset::select_rows(const std::vector<bool>& mask) const {
  if (mask.size() != static_cast<std::size_t>(n())) {
    throw DataError("row mask length " + std::to_string(mask.size()) + " does not match " + std::to_string(n()) +
                    " rows");
  }
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) idx.push_back(static_cast<Eigen::Index>(i));
  }
  TabularDataset out;
  out.name = name;
  out.features = features;
  out.target_description = target_description;
  out.x.resize(static_cast<Eigen::Index>(idx.size()), d());
  out.y.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
    out.y[static_cast<Eigen::Index>(r)] = y[idx[r]];
  }
  return out;
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  DatasetConfig cfg;
  try {
    cfg.name = j.value("name", std::string{});
    cfg.csv_path = j.at("csv").get<std::string>();
    if (!base_dir.empty() && std::filesystem::path(cfg.csv_path).is_relative()) {
      cfg.csv_path = (std::filesystem::path(base_dir) / cfg.csv_path).string();
    }
    cfg.label_column = j.at("label_column").get<std::string>();
    if (j.contains("label_mapping")) {
      for (const auto& [k, v] : j.at("label_mapping").items()) {
        const int cls = v.get<int>();
        if (cls != 0 && cls != 1) throw ConfigError("label_mapping values must be 0 or 1");
        cfg.label_mapping[k] = cls;
      }
    }
    cfg.target_description = j.value("target_description", std::string{});
    if (j.contains("columns")) {
      for (const auto& [k, v] : j.at("columns").items()) {
        ColumnSchema col;
        if (v.contains("kind")) col.kind = feature_kind_from_string(v.at("kind").get<std::string>());
        if (v.contains("description")) col.description = v.at("description").get<std::string>();
        cfg.columns[k] = col;
      }
    }
    if (j.contains("selected_features")) cfg.selected_features = j.at("selected_features").get<std::vector<std::string>>();
    if (j.contains("missing_values")) cfg.missing_tokens = j.at("missing_values").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  if (cfg.name.empty()) cfg.name = std::filesystem::path(cfg.csv_path).stem().string();
  return cfg;
}

DatasetConfig DatasetConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset config " + path + ": " + e.what());
  }
  return from_json(j, std::filesystem::path(path).parent_path().string());
}

nlohmann::json DatasetConfig::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["csv"] = csv_path;
  j["label_column"] = label_column;
  j["label_mapping"] = label_mapping;
  j["target_description"] = target_description;
  nlohmann::json cols = nlohmann::json::object();
  for (const auto& [k, c] : columns) {
    nlohmann::json cj = nlohmann::json::object();
    if (c.kind) cj["kind"] = to_string(*c.kind);
    if (c.description) cj["description"] = *c.description;
    cols[k] = cj;
  }
  j["columns"] = cols;
  j["selected_features"] = selected_features;
  j["missing_values"] = missing_tokens;
  return j;
}

TabularDataset load_csv(const std::string& path, const DatasetConfig& schema) {
  const CsvTable table = read_csv_file(path);
  if (table.records.empty()) throw DataError("csv " + path + ": no data rows");

  auto column_of = [&](const std::string& col) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (trim(table.header[c]) == col) return c;
    }
    return std::nullopt;
  };

  const auto label_col = column_of(schema.label_column);
  if (!label_col) throw DataError("csv " + path + ": missing label column '" + schema.label_column + "'");

  std::vector<std::size_t> feature_cols;
  if (schema.selected_features.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c != *label_col) feature_cols.push_back(c);
    }
  } else {
    for (const auto& f : schema.selected_features) {
      auto c = column_of(f);
      if (!c) throw DataError("csv " + path + ": selected feature '" + f + "' not found");
      if (*c == *label_col) throw DataError("selected feature '" + f + "' is the label column");
      feature_cols.push_back(*c);
    }
    std::sort(feature_cols.begin(), feature_cols.end());
  }

  const auto n = static_cast<Eigen::Index>(table.records.size());
  TabularDataset ds;
  ds.name = schema.name;
  ds.target_description = schema.target_description;
  ds.x.resize(n, static_cast<Eigen::Index>(feature_cols.size()));
  ds.y.resize(n);

  std::map<std::string, int> mapping = schema.label_mapping;
  if (mapping.empty()) mapping = {{"0", 0}, {"1", 1}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string raw = trim(table.records[static_cast<std::size_t>(i)][*label_col]);
    auto it = mapping.find(raw);
    if (it == mapping.end()) {
      throw DataError("csv " + path + ": row " + std::to_string(i + 1) + " has label value '" + raw +
                      "' outside the configured mapping");
    }
    ds.y[i] = it->second;
  }

  for (std::size_t k = 0; k < feature_cols.size(); ++k) {
    const std::size_t c = feature_cols[k];
    const auto col = static_cast<Eigen::Index>(k);
    FeatureMeta meta;
    meta.name = trim(table.header[c]);
    meta.source_column = meta.name;
    std::optional<FeatureKind> kind;
    if (auto it = schema.columns.find(meta.name); it != schema.columns.end()) {
      kind = it->second.kind;
      meta.description = it->second.description;
    }
    if (kind == FeatureKind::onehot) throw ConfigError("column '" + meta.name + "' cannot be declared onehot");

    std::vector<std::string> cells(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) cells[static_cast<std::size_t>(i)] = trim(table.records[static_cast<std::size_t>(i)][c]);

    if (!kind) {
      kind = FeatureKind::numeric;
      for (const auto& cell : cells) {
        if (!is_missing(cell, schema.missing_tokens) && !parse_double(cell)) {
          kind = FeatureKind::categorical;
          break;
        }
      }
    }
    meta.kind = *kind;

    if (meta.kind == FeatureKind::numeric) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cell = cells[static_cast<std::size_t>(i)];
        if (is_missing(cell, schema.missing_tokens)) {
          ds.x(i, col) = kNaN;
          continue;
        }
        auto v = parse_double(cell);
        if (!v) {
          throw DataError("csv " + path + ": row " + std::to_string(i + 1) + " column '" + meta.name +
                          "' has non-numeric value '" + cell + "'");
        }
        ds.x(i, col) = *v;
      }
    } else {
      std::set<std::string> levels;
      for (const auto& cell : cells) {
        if (!is_missing(cell, schema.missing_tokens)) levels.insert(cell);
      }
      meta.levels.assign(levels.begin(), levels.end());
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cell = cells[static_cast<std::size_t>(i)];
        if (is_missing(cell, schema.missing_tokens)) {
          ds.x(i, col) = kNaN;
        } else {
          auto pos = std::lower_bound(meta.levels.begin(), meta.levels.end(), cell);
          ds.x(i, col) = static_cast<double>(pos - meta.levels.begin());
        }
      }
    }
    ds.features.push_back(std::move(meta));
  }
  ds.validate();
  return ds;
}

namespace {

struct ColumnOut {
  FeatureMeta meta;
  Eigen::VectorXd values;
};

void standardize_column(FeatureMeta& meta, Eigen::VectorXd& col, const std::vector<bool>* fit_mask) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (fit_mask && !(*fit_mask)[static_cast<std::size_t>(i)]) continue;
    if (std::isnan(col[i])) continue;
    sum += col[i];
    ++count;
  }
  double center = 0.0;
  double scale = 1.0;
  if (count > 0) {
    center = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (fit_mask && !(*fit_mask)[static_cast<std::size_t>(i)]) continue;
      if (std::isnan(col[i])) continue;
      ss += (col[i] - center) * (col[i] - center);
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    // Zero spread: center only.
    if (sd > 0.0) scale = sd;
  }
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (!std::isnan(col[i])) col[i] = (col[i] - center) / scale;
  }
  meta.standardized = true;
  meta.center = center;
  meta.scale = scale;
}

void impute_zero(Eigen::VectorXd& col) {
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (std::isnan(col[i])) col[i] = 0.0;
  }
}

}  // namespace

PreprocessResult preprocess(const TabularDataset& ds, const PreprocessOptions& opts) {
  ds.validate();
  if (opts.fit_mask && opts.fit_mask->size() != static_cast<std::size_t>(ds.n())) {
    throw DataError("preprocess: fit mask length does not match row count");
  }
  const std::vector<bool>* fit_mask = opts.fit_mask ? &*opts.fit_mask : nullptr;

  PreprocessResult result;
  std::vector<ColumnOut> out;
  for (std::size_t j = 0; j < ds.features.size(); ++j) {
    const FeatureMeta& meta = ds.features[j];
    const Eigen::VectorXd col = ds.x.col(static_cast<Eigen::Index>(j));

    if (meta.kind == FeatureKind::categorical) {
      std::vector<std::string> levels = meta.levels;
      std::vector<char> seen(levels.size() + 1, 0);
      bool any_missing = false;
      for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (std::isnan(col[i])) {
          any_missing = true;
          seen.back() = 1;
        } else {
          seen[static_cast<std::size_t>(col[i])] = 1;
        }
      }
      const auto distinct = std::count(seen.begin(), seen.end(), 1);
      if (distinct < 2) {
        result.warnings.push_back("categorical column '" + meta.name + "' has a single value; dropped");
        continue;
      }
      const std::size_t n_levels = levels.size();
      if (any_missing) levels.push_back(kMissingLevel);
      for (std::size_t l = 0; l < levels.size(); ++l) {
        ColumnOut c;
        c.meta.name = meta.name + "=" + levels[l];
        c.meta.kind = FeatureKind::onehot;
        c.meta.source_column = meta.source_column;
        c.meta.level = levels[l];
        if (meta.description) c.meta.description = *meta.description + " = " + levels[l];
        c.values.resize(col.size());
        for (Eigen::Index i = 0; i < col.size(); ++i) {
          const bool hit = std::isnan(col[i]) ? (l == n_levels) : (static_cast<std::size_t>(col[i]) == l);
          c.values[i] = hit ? 1.0 : 0.0;
        }
        out.push_back(std::move(c));
      }
      continue;
    }

    ColumnOut c{meta, col};
    if (meta.kind == FeatureKind::numeric && opts.standardize && !meta.standardized) {
      standardize_column(c.meta, c.values, fit_mask);
    }
    impute_zero(c.values);
    out.push_back(std::move(c));
  }

  TabularDataset& res = result.data;
  res.name = ds.name;
  res.target_description = ds.target_description;
  res.y = ds.y;
  res.x.resize(ds.n(), static_cast<Eigen::Index>(out.size()));
  for (std::size_t j = 0; j < out.size(); ++j) {
    res.x.col(static_cast<Eigen::Index>(j)) = out[j].values;
    res.features.push_back(std::move(out[j].meta));
  }
  res.validate();
  return result;
}

TabularDataset transform_like(const TabularDataset& raw, const std::vector<FeatureMeta>& fitted) {
  TabularDataset res;
  res.name = raw.name;
  res.target_description = raw.target_description;
  res.y = raw.y;
  res.x.resize(raw.n(), static_cast<Eigen::Index>(fitted.size()));
  for (std::size_t j = 0; j < fitted.size(); ++j) {
    const FeatureMeta& f = fitted[j];
    const auto col = static_cast<Eigen::Index>(j);
    const auto src_idx = raw.feature_index(f.source_column);
    if (!src_idx) throw DataError("transform: raw dataset lacks column '" + f.source_column + "'");
    const FeatureMeta& src = raw.features[*src_idx];
    const Eigen::VectorXd values = raw.x.col(static_cast<Eigen::Index>(*src_idx));
    if (f.kind == FeatureKind::onehot) {
      if (src.kind != FeatureKind::categorical) throw DataError("transform: '" + f.source_column + "' is not categorical");
      for (Eigen::Index i = 0; i < raw.n(); ++i) {
        const std::string& lvl =
            std::isnan(values[i]) ? kMissingLevel : src.levels.at(static_cast<std::size_t>(values[i]));
        res.x(i, col) = lvl == f.level ? 1.0 : 0.0;
      }
    } else {
      for (Eigen::Index i = 0; i < raw.n(); ++i) {
        double v = values[i];
        if (!std::isnan(v) && f.standardized) v = (v - f.center) / f.scale;
        res.x(i, col) = std::isnan(v) ? 0.0 : v;
      }
    }
    res.features.push_back(f);
  }
  res.validate();
  return res;
}

}  // namespace loid
