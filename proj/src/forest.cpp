#include "learnpath/forest.hpp"

#include "learnpath/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace learnpath {
namespace {

struct SplitStats {
  double n = 0.0;
  double ones = 0.0;  // classifier
  double sum = 0.0;   // regressor
  double sum_sq = 0.0;

  void add(double y) {
    n += 1.0;
    ones += y;
    sum += y;
    sum_sq += y * y;
  }
  void remove(double y) {
    n -= 1.0;
    ones -= y;
    sum -= y;
    sum_sq -= y * y;
  }
  // n * impurity, so child impurities add up directly.
  double weighted_impurity(ForestMode mode) const {
    if (n <= 0.0) return 0.0;
    if (mode == ForestMode::Classifier) {
      double p = ones / n;
      return n * (1.0 - p * p - (1.0 - p) * (1.0 - p));
    }
    return std::max(0.0, sum_sq - sum * sum / n);
  }
};

std::vector<double> leaf_value(std::span<const TrainingRow> rows, std::span<const std::size_t> idx, ForestMode mode) {
  double total = 0.0;
  for (auto i : idx) total += rows[i].label;
  double n = static_cast<double>(idx.size());
  if (mode == ForestMode::Classifier) {
    double p1 = total / n;
    return {1.0 - p1, p1};
  }
  return {total / n};
}

class Builder {
public:
  Builder(std::span<const TrainingRow> rows, const DecisionTree::Params& params, std::mt19937_64& rng)
      : rows_(rows), params_(params), rng_(rng), d_(rows.front().features.size()) {}

  std::vector<TreeNode> build(std::vector<std::size_t> idx) {
    grow(std::move(idx), 0);
    return std::move(nodes_);
  }

private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> f(d_);
    std::iota(f.begin(), f.end(), 0);
    std::size_t m = params_.max_features;
    if (m == 0 || m >= d_) return f;
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, d_ - 1);
      std::swap(f[i], f[pick(rng_)]);
    }
    f.resize(m);
    std::sort(f.begin(), f.end());
    return f;
  }

  Split best_split(const std::vector<std::size_t>& idx) {
    SplitStats all;
    for (auto i : idx) all.add(rows_[i].label);
    Split best;
    best.impurity = all.weighted_impurity(params_.mode);
    const double parent = best.impurity;
    const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_leaf);

    std::vector<std::size_t> order = idx;
    for (auto f : candidate_features()) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double va = rows_[a].features[f], vb = rows_[b].features[f];
        if (va != vb) return va < vb;
        return a < b;
      });
      SplitStats left;
      SplitStats right = all;
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        double y = rows_[order[pos]].label;
        left.add(y);
        right.remove(y);
        double here = rows_[order[pos]].features[f];
        double next = rows_[order[pos + 1]].features[f];
        if (here == next) continue;
        if (pos + 1 < min_leaf || order.size() - pos - 1 < min_leaf) continue;
        double imp = left.weighted_impurity(params_.mode) + right.weighted_impurity(params_.mode);
        // Require a real improvement so float noise cannot pick arbitrary splits.
        if (imp < best.impurity - 1e-12 * std::max(1.0, parent)) {
          best.feature = static_cast<int>(f);
          best.threshold = here + (next - here) / 2.0;
          best.impurity = imp;
        }
      }
    }
    return best;
  }

  int grow(std::vector<std::size_t> idx, std::size_t depth) {
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{});
    nodes_[id].value = leaf_value(rows_, idx, params_.mode);
    if (depth >= params_.max_depth || idx.size() < 2 * std::max<std::size_t>(1, params_.min_leaf)) return id;

    auto split = best_split(idx);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (rows_[i].features[split.feature] <= split.threshold ? left : right).push_back(i);
    }
    nodes_[id].feature = split.feature;
    nodes_[id].threshold = split.threshold;
    int l = grow(std::move(left), depth + 1);
    int r = grow(std::move(right), depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::span<const TrainingRow> rows_;
  DecisionTree::Params params_;
  std::mt19937_64& rng_;
  std::size_t d_;
  std::vector<TreeNode> nodes_;
};

void check_rows(std::span<const TrainingRow> rows, ForestMode mode) {
  if (rows.size() < 2) throw Error(ErrorCode::TooFewRows, std::to_string(rows.size()) + " training rows");
  const auto d = rows.front().features.size();
  if (d == 0) throw Error(ErrorCode::InvalidValue, "rows have no features");
  for (const auto& r : rows) {
    if (r.features.size() != d) throw Error(ErrorCode::MixedLabelTypes, "rows disagree on feature count");
    for (double v : r.features) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidValue, "non-finite feature value");
    }
    if (mode == ForestMode::Classifier && r.label != 0.0 && r.label != 1.0) {
      throw Error(ErrorCode::MixedLabelTypes, "classifier labels must be 0 or 1");
    }
    if (mode == ForestMode::Regressor && (!(r.label >= 0.0) || !std::isfinite(r.label))) {
      throw Error(ErrorCode::MixedLabelTypes, "regressor labels must be finite and non-negative");
    }
  }
}

}  // namespace

DecisionTree DecisionTree::fit(std::span<const TrainingRow> rows, std::span<const std::size_t> indices,
                               const Params& params, std::mt19937_64& rng) {
  check_rows(rows, params.mode);
  if (indices.empty()) throw Error(ErrorCode::TooFewRows, "no sample indices");
  Builder b(rows, params, rng);
  return DecisionTree(b.build({indices.begin(), indices.end()}));
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  const TreeNode* node = &nodes_.front();
  while (!node->is_leaf()) {
    node = &nodes_[x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right];
  }
  return *node;
}

std::set<std::size_t> DecisionTree::features_used() const {
  std::set<std::size_t> used;
  for (const auto& n : nodes_) {
    if (!n.is_leaf()) used.insert(static_cast<std::size_t>(n.feature));
  }
  return used;
}

std::size_t DecisionTree::depth() const {
  std::function<std::size_t(int)> walk = [&](int id) -> std::size_t {
    const auto& n = nodes_[id];
    if (n.is_leaf()) return 0;
    return 1 + std::max(walk(n.left), walk(n.right));
  };
  return nodes_.empty() ? 0 : walk(0);
}

ForestModel::ForestModel(ForestMode mode, std::size_t n_features, ForestConfig config, std::vector<DecisionTree> trees)
    : mode_(mode), n_features_(n_features), config_(config), trees_(std::move(trees)) {
  if (trees_.empty()) throw Error(ErrorCode::InvalidValue, "a forest needs at least one tree");
}

void ForestModel::check_input(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw Error(ErrorCode::SchemaMismatch, "expected " + std::to_string(n_features_) + " features, got " +
                                               std::to_string(x.size()));
  }
}

double ForestModel::predict_probability(std::span<const double> x) const {
  if (mode_ != ForestMode::Classifier) throw Error(ErrorCode::InvalidValue, "not a classifier");
  check_input(x);
  double total = 0.0;
  for (const auto& t : trees_) total += t.leaf_for(x).value[1];
  return std::clamp(total / static_cast<double>(trees_.size()), 0.0, 1.0);
}

double ForestModel::predict_value(std::span<const double> x) const {
  if (mode_ != ForestMode::Regressor) throw Error(ErrorCode::InvalidValue, "not a regressor");
  check_input(x);
  double total = 0.0;
  for (const auto& t : trees_) total += t.leaf_for(x).value[0];
  return std::max(0.0, total / static_cast<double>(trees_.size()));
}

ForestModel train_forest(std::span<const TrainingRow> rows, const ForestConfig& config) {
  check_rows(rows, config.mode);
  if (config.n_trees == 0) throw Error(ErrorCode::InvalidValue, "n_trees must be at least 1");
  const auto n = rows.size();
  const auto d = rows.front().features.size();

  DecisionTree::Params params;
  params.mode = config.mode;
  params.max_depth = config.max_depth;
  params.min_leaf = config.min_leaf;
  params.max_features =
      config.max_features == 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))))
                               : config.max_features;

  std::mt19937_64 rng(config.seed);
  std::vector<DecisionTree> trees;
  trees.reserve(config.n_trees);
  std::vector<std::size_t> idx(n);
  for (std::size_t t = 0; t < config.n_trees; ++t) {
    if (config.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& i : idx) i = draw(rng);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    trees.push_back(DecisionTree::fit(rows, idx, params, rng));
  }
  return ForestModel(config.mode, d, config, std::move(trees));
}

void to_json(nlohmann::json& j, const ForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees()) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"value", n.value}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  const auto& c = m.config();
  j = nlohmann::json{{"format", "learnpath.forest"},
                     {"version", 1},
                     {"mode", m.mode() == ForestMode::Classifier ? "classifier" : "regressor"},
                     {"n_features", m.n_features()},
                     {"config",
                      {{"n_trees", c.n_trees},
                       {"max_depth", c.max_depth},
                       {"min_leaf", c.min_leaf},
                       {"max_features", c.max_features},
                       {"bootstrap", c.bootstrap},
                       {"seed", c.seed}}},
                     {"trees", std::move(trees)}};
}

void from_json(const nlohmann::json& j, ForestModel& m) {
  if (j.value("format", std::string()) != "learnpath.forest") throw Error(ErrorCode::ParseError, "not a forest dump");
  auto mode_text = j.at("mode").get<std::string>();
  if (mode_text != "classifier" && mode_text != "regressor") throw Error(ErrorCode::ParseError, "bad forest mode");
  ForestMode mode = mode_text == "classifier" ? ForestMode::Classifier : ForestMode::Regressor;
  ForestConfig c;
  const auto& jc = j.at("config");
  c.mode = mode;
  jc.at("n_trees").get_to(c.n_trees);
  jc.at("max_depth").get_to(c.max_depth);
  jc.at("min_leaf").get_to(c.min_leaf);
  jc.at("max_features").get_to(c.max_features);
  jc.at("bootstrap").get_to(c.bootstrap);
  jc.at("seed").get_to(c.seed);
  auto n_features = j.at("n_features").get<std::size_t>();

  std::vector<DecisionTree> trees;
  for (const auto& jt : j.at("trees")) {
    std::vector<TreeNode> nodes;
    for (const auto& jn : jt.at("nodes")) {
      TreeNode n;
      if (jn.contains("leaf")) {
        jn.at("leaf").get_to(n.value);
      } else {
        jn.at("feature").get_to(n.feature);
        jn.at("threshold").get_to(n.threshold);
        jn.at("left").get_to(n.left);
        jn.at("right").get_to(n.right);
        jn.at("value").get_to(n.value);
      }
      nodes.push_back(std::move(n));
    }
    const int count = static_cast<int>(nodes.size());
    for (const auto& n : nodes) {
      bool bad_children = !n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                                           static_cast<std::size_t>(n.feature) >= n_features);
      bool bad_value = n.value.size() != (mode == ForestMode::Classifier ? 2u : 1u);
      if (bad_children || bad_value) throw Error(ErrorCode::ParseError, "malformed tree node");
    }
    if (nodes.empty()) throw Error(ErrorCode::ParseError, "empty tree");
    trees.emplace_back(std::move(nodes));
  }
  m = ForestModel(mode, n_features, c, std::move(trees));
}

}  // namespace learnpath
