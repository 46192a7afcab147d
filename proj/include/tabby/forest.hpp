#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/schema.hpp"

namespace tabby {

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  // 0: unlimited
  std::size_t min_samples_split = 2;
  std::size_t max_features = 0;  // 0: sqrt(n) for classification, n/3 for regression
  bool bootstrap = true;

  nlohmann::json to_json() const;
  static ForestParams from_json(const nlohmann::json& doc);
};

// Dense design matrix. Categorical features hold category indices.
struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::vector<bool> categorical;        // per feature
  std::vector<std::size_t> n_levels;    // per categorical feature
  std::vector<std::vector<double>> x;   // [feature][row]
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  bool categorical = false;
  double threshold = 0.0;       // numeric: x <= threshold goes left
  std::vector<bool> left_set;   // categorical: levels going left; unseen levels go right
  int left = -1;
  int right = -1;
  double value = 0.0;  // regression mean or majority class id
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const FeatureMatrix& m, std::size_t row) const;
  std::size_t depth() const;
};

class Forest {
 public:
  // Classification labels are class ids 0..n_classes-1 stored as doubles.
  static Forest fit(const FeatureMatrix& features, const std::vector<double>& labels, Task task,
                    std::size_t n_classes, const ForestParams& params, std::uint64_t seed);

  std::vector<double> predict(const FeatureMatrix& features) const;
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  Task task_ = Task::kClassification;
  std::size_t n_classes_ = 0;
  std::vector<Tree> trees_;
};

// Turns tables into design matrices with one shared encoding: categorical
// and boolean columns by first-seen level in the fitting table.
class TableEncoder {
 public:
  TableEncoder(const Schema& schema, const Table& fit_table, std::vector<std::size_t> feature_columns);

  FeatureMatrix features(const Table& table) const;
  const std::vector<std::size_t>& feature_columns() const { return columns_; }

 private:
  std::vector<ColumnSpec> specs_;
  std::vector<std::size_t> columns_;
  std::vector<std::vector<std::string>> levels_;  // per feature, empty when numeric
};

// Class ids for a classification target; unseen labels get fresh ids.
struct LabelCoding {
  std::vector<std::string> classes;
  std::vector<double> encode(const Schema& schema, const Table& table);
};

// Regression target values as doubles.
std::vector<double> numeric_targets(const Schema& schema, const Table& table);

}  // namespace tabby
