#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace scope3 {

struct ForestConfig {
  int n_trees = 100;
  /// Features examined per split; 0 means floor(sqrt(n_features)).
  int max_features = 0;
  int min_samples_leaf = 1;
  /// 0 means unlimited depth.
  int max_depth = 0;
  bool bootstrap = true;
  std::uint64_t seed = 42;
};

/// Random forest of Gini-impurity CART trees. Leaves store class
/// frequencies; predictions average them over trees. Trees are grown
/// independently from per-tree seeds so results do not depend on threading.
class RandomForest {
 public:
  /// `features` holds one sample per column. `labels` are class indices in
  /// [0, n_classes).
  static RandomForest fit(const Eigen::MatrixXd& features, std::span<const int> labels, int n_classes,
                          const ForestConfig& config);

  int n_classes() const { return n_classes_; }
  int n_features() const { return n_features_; }
  std::size_t n_trees() const { return trees_.size(); }

  /// Class probabilities (sum to 1) for one sample.
  Eigen::VectorXd predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  std::string to_text() const;
  static RandomForest from_text(const std::string& text);

  struct Node {
    int feature = -1;  // -1 marks a leaf
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    int leaf_begin = 0;
    int leaf_end = 0;
  };
  struct LeafEntry {
    int label = 0;
    float probability = 0.0f;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<LeafEntry> leaves;
  };

 private:
  int n_classes_ = 0;
  int n_features_ = 0;
  std::vector<Tree> trees_;
};

}  // namespace scope3
