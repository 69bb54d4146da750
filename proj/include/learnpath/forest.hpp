#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

namespace learnpath {

enum class ForestMode { Classifier, Regressor };

struct TrainingRow {
  std::vector<double> features;
  double label = 0.0;  // 0/1 for classifiers, non-negative for regressors
};

struct ForestConfig {
  ForestMode mode = ForestMode::Classifier;
  std::size_t n_trees = 100;
  std::size_t max_depth = 10;
  std::size_t min_leaf = 2;
  std::size_t max_features = 0;  // 0: floor(sqrt(d)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 1;

  bool operator==(const ForestConfig&) const = default;
};

// Axis-aligned split or leaf. Leaves of a classifier hold {P(0), P(1)}; leaves
// of a regressor hold {mean}.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::vector<double> value;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class DecisionTree {
public:
  struct Params {
    ForestMode mode = ForestMode::Classifier;
    std::size_t max_depth = 10;
    std::size_t min_leaf = 2;
    std::size_t max_features = 0;  // 0 or >= d: every feature at every split
  };

  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  // Grows a CART tree on rows[indices] (repeats allowed). Gini impurity for
  // classifiers, squared error for regressors. `rng` is only drawn from when
  // features are subsampled.
  static DecisionTree fit(std::span<const TrainingRow> rows, std::span<const std::size_t> indices, const Params& params,
                          std::mt19937_64& rng);

  const TreeNode& leaf_for(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::set<std::size_t> features_used() const;
  std::size_t depth() const;

  bool operator==(const DecisionTree&) const = default;

private:
  std::vector<TreeNode> nodes_;
};

class ForestModel {
public:
  ForestModel() = default;
  ForestModel(ForestMode mode, std::size_t n_features, ForestConfig config, std::vector<DecisionTree> trees);

  ForestMode mode() const { return mode_; }
  std::size_t n_features() const { return n_features_; }
  const ForestConfig& config() const { return config_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  // Mean positive-class probability over trees (classifier only).
  double predict_probability(std::span<const double> x) const;
  // Mean leaf value over trees (regressor only).
  double predict_value(std::span<const double> x) const;
  // Classifier: probability >= 0.5.
  int predict_class(std::span<const double> x) const { return predict_probability(x) >= 0.5 ? 1 : 0; }

  bool operator==(const ForestModel&) const = default;

private:
  void check_input(std::span<const double> x) const;

  ForestMode mode_ = ForestMode::Classifier;
  std::size_t n_features_ = 0;
  ForestConfig config_;
  std::vector<DecisionTree> trees_;
};

// Bootstrap-sampled trees with per-split feature subsampling. Throws
// TooFewRows for fewer than two rows and MixedLabelTypes when a classifier
// gets non-binary labels or rows disagree on dimensionality.
ForestModel train_forest(std::span<const TrainingRow> rows, const ForestConfig& config);

void to_json(nlohmann::json& j, const ForestModel& m);
void from_json(const nlohmann::json& j, ForestModel& m);

}  // namespace learnpath
