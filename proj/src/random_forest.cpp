#include "scope3/random_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "scope3/common.hpp"
#include "scope3/parallel.hpp"
#include "scope3/text.hpp"

namespace scope3 {

namespace {

/// Read-only training data in two layouts: dense columns per feature and a
/// sparse per-feature list of nonzero samples.
struct TrainingData {
  Eigen::MatrixXf by_feature;  // samples x features
  std::vector<std::vector<int>> nonzero;
  std::vector<int> labels;
  int n_classes = 0;
};

struct Candidate {
  float value;
  int label;
  bool operator<(const Candidate& o) const { return value < o.value; }
};

struct Split {
  int feature = -1;
  float threshold = 0.0f;
  double score = -1.0;  // sum of squared class counts over children, normalized
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingData& data, const ForestConfig& config, int max_features, std::uint64_t tree_seed)
      : data_(data), config_(config), max_features_(max_features), rng_(tree_seed),
        multiplicity_(static_cast<std::size_t>(data.by_feature.rows()), 0) {}

  RandomForest::Tree build() {
    const int n = static_cast<int>(data_.by_feature.rows());
    std::vector<int> samples(static_cast<std::size_t>(n));
    if (config_.bootstrap) {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (auto& s : samples) s = pick(rng_);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    features_.resize(static_cast<std::size_t>(data_.by_feature.cols()));
    std::iota(features_.begin(), features_.end(), 0);

    struct Pending {
      int node;
      std::size_t begin;
      std::size_t end;
      int depth;
    };
    RandomForest::Tree tree;
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, samples.size(), 0}};
    std::vector<double> counts(static_cast<std::size_t>(data_.n_classes));
    while (!stack.empty()) {
      Pending p = stack.back();
      stack.pop_back();
      std::span<int> node_samples(samples.data() + p.begin, p.end - p.begin);
      std::fill(counts.begin(), counts.end(), 0.0);
      for (int s : node_samples) counts[static_cast<std::size_t>(data_.labels[s])] += 1.0;
      int distinct = static_cast<int>(std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }));

      Split best;
      bool can_split = distinct > 1 &&
                       node_samples.size() >= 2 * static_cast<std::size_t>(config_.min_samples_leaf) &&
                       (config_.max_depth <= 0 || p.depth < config_.max_depth);
      if (can_split) best = find_split(node_samples, counts);

      if (best.feature < 0) {
        auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
        node.leaf_begin = static_cast<int>(tree.leaves.size());
        auto total = static_cast<double>(node_samples.size());
        for (int k = 0; k < data_.n_classes; ++k) {
          if (counts[static_cast<std::size_t>(k)] > 0) {
            tree.leaves.push_back({k, static_cast<float>(counts[static_cast<std::size_t>(k)] / total)});
          }
        }
        node.leaf_end = static_cast<int>(tree.leaves.size());
        continue;
      }

      auto col = data_.by_feature.col(best.feature);
      auto mid = std::partition(node_samples.begin(), node_samples.end(),
                                [&](int s) { return col(s) <= best.threshold; });
      std::size_t split_at = p.begin + static_cast<std::size_t>(mid - node_samples.begin());
      int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      int right = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left;
      node.right = right;
      stack.push_back({right, split_at, p.end, p.depth + 1});
      stack.push_back({left, p.begin, split_at, p.depth + 1});
    }
    return tree;
  }

 private:
  /// Gathers (value, label) for the node; returns false when the feature is
  /// constant over the node.
  bool gather(int feature, std::span<const int> node_samples, std::vector<Candidate>& out,
              std::vector<double>& zero_counts, const std::vector<double>& counts) {
    out.clear();
    const auto& nz = data_.nonzero[static_cast<std::size_t>(feature)];
    auto col = data_.by_feature.col(feature);
    if (nz.size() <= node_samples.size()) {
      // Sparse path: only nonzero entries are listed; zeros are counted.
      for (int s : nz) {
        for (int r = 0; r < multiplicity_[static_cast<std::size_t>(s)]; ++r) out.push_back({col(s), data_.labels[s]});
      }
      zero_counts = counts;
      for (const auto& c : out) zero_counts[static_cast<std::size_t>(c.label)] -= 1.0;
      std::size_t zeros = node_samples.size() - out.size();
      if (out.empty()) return false;
      if (zeros == 0) {
        auto [lo, hi] = std::minmax_element(out.begin(), out.end());
        if (lo->value == hi->value) return false;
      }
      return true;
    }
    float lo = col(node_samples[0]);
    float hi = lo;
    for (int s : node_samples) {
      float v = col(s);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      out.push_back({v, data_.labels[s]});
    }
    std::fill(zero_counts.begin(), zero_counts.end(), 0.0);
    return lo != hi;
  }

  Split find_split(std::span<const int> node_samples, const std::vector<double>& counts) {
    for (int s : node_samples) ++multiplicity_[static_cast<std::size_t>(s)];

    Split best;
    const double m = static_cast<double>(node_samples.size());
    const double min_leaf = config_.min_samples_leaf;
    std::vector<Candidate> values;
    std::vector<double> zero_counts(counts.size());
    std::vector<double> left(counts.size());
    std::vector<double> right(counts.size());

    int visited = 0;
    std::size_t remaining = features_.size();
    while (remaining > 0 && visited < max_features_) {
      std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
      std::size_t j = pick(rng_);
      int feature = features_[j];
      std::swap(features_[j], features_[remaining - 1]);
      --remaining;
      if (!gather(feature, node_samples, values, zero_counts, counts)) continue;
      ++visited;
      std::sort(values.begin(), values.end());

      // Sequence: negatives, the zero block (sparse path only), positives.
      double zero_total = std::accumulate(zero_counts.begin(), zero_counts.end(), 0.0);
      std::fill(left.begin(), left.end(), 0.0);
      right = counts;
      double sq_left = 0.0;
      double sq_right = 0.0;
      for (double c : counts) sq_right += c * c;
      double n_left = 0.0;

      auto consider = [&](float lo_value, float hi_value) {
        double n_right = m - n_left;
        if (n_left < min_leaf || n_right < min_leaf) return;
        double score = sq_left / n_left + sq_right / n_right;
        if (score > best.score + 1e-12) {
          best.score = score;
          best.feature = feature;
          float thr = lo_value + (hi_value - lo_value) / 2.0f;
          if (!(thr < hi_value)) thr = lo_value;
          best.threshold = thr;
        }
      };
      auto move_left = [&](int label, double w) {
        auto k = static_cast<std::size_t>(label);
        sq_left += 2.0 * left[k] * w + w * w;
        sq_right += -2.0 * right[k] * w + w * w;
        left[k] += w;
        right[k] -= w;
        n_left += w;
      };

      bool zeros_pending = zero_total > 0.0;
      float prev = 0.0f;
      bool have_prev = false;
      auto step_to = [&](float next) {
        if (have_prev && next > prev) consider(prev, next);
      };
      for (const auto& c : values) {
        if (zeros_pending && c.value > 0.0f) {
          step_to(0.0f);
          for (std::size_t k = 0; k < zero_counts.size(); ++k) {
            if (zero_counts[k] > 0.0) move_left(static_cast<int>(k), zero_counts[k]);
          }
          prev = 0.0f;
          have_prev = true;
          zeros_pending = false;
        }
        step_to(c.value);
        move_left(c.label, 1.0);
        prev = c.value;
        have_prev = true;
      }
      if (zeros_pending) {
        step_to(0.0f);
        // Zeros are the largest values: nothing to their right.
      }
    }

    for (int s : node_samples) --multiplicity_[static_cast<std::size_t>(s)];
    return best;
  }

  const TrainingData& data_;
  const ForestConfig& config_;
  int max_features_;
  std::mt19937_64 rng_;
  std::vector<int> multiplicity_;
  std::vector<int> features_;
};

}  // namespace

RandomForest RandomForest::fit(const Eigen::MatrixXd& features, std::span<const int> labels, int n_classes,
                               const ForestConfig& config) {
  if (features.cols() != static_cast<Eigen::Index>(labels.size())) throw InputError("random forest: feature/label count mismatch");
  if (features.cols() == 0 || features.rows() == 0) throw InputError("random forest: empty training set");
  if (config.n_trees < 1 || config.min_samples_leaf < 1 || config.max_features < 0 || config.max_depth < 0) {
    throw RangeError("random forest: invalid configuration");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw InputError("random forest: label out of range");
  }

  TrainingData data;
  data.by_feature = features.transpose().cast<float>();
  data.labels.assign(labels.begin(), labels.end());
  data.n_classes = n_classes;
  data.nonzero.resize(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index f = 0; f < data.by_feature.cols(); ++f) {
    for (Eigen::Index s = 0; s < data.by_feature.rows(); ++s) {
      if (data.by_feature(s, f) != 0.0f) data.nonzero[static_cast<std::size_t>(f)].push_back(static_cast<int>(s));
    }
  }

  int max_features = config.max_features > 0
                         ? std::min<int>(config.max_features, static_cast<int>(features.rows()))
                         : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(features.rows()))));

  RandomForest forest;
  forest.n_classes_ = n_classes;
  forest.n_features_ = static_cast<int>(features.rows());
  forest.trees_.resize(static_cast<std::size_t>(config.n_trees));
  parallel_for(forest.trees_.size(), [&](std::size_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 seeder(seq);
    TreeBuilder builder(data, config, max_features, seeder());
    forest.trees_[t] = builder.build();
  });
  return forest;
}

Eigen::VectorXd RandomForest::predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_features_) throw InputError("random forest: feature dimension mismatch");
  Eigen::VectorXd proba = Eigen::VectorXd::Zero(n_classes_);
  for (const auto& tree : trees_) {
    const Node* node = &tree.nodes[0];
    while (node->feature >= 0) {
      node = &tree.nodes[static_cast<std::size_t>(static_cast<float>(x(node->feature)) <= node->threshold ? node->left
                                                                                                          : node->right)];
    }
    for (int i = node->leaf_begin; i < node->leaf_end; ++i) {
      const auto& e = tree.leaves[static_cast<std::size_t>(i)];
      proba(e.label) += e.probability;
    }
  }
  double total = proba.sum();
  if (total > 0.0) proba /= total;
  return proba;
}

std::string RandomForest::to_text() const {
  std::ostringstream out;
  out << "scope3-forest 1\n" << n_classes_ << ' ' << n_features_ << ' ' << trees_.size() << '\n';
  for (const auto& tree : trees_) {
    out << "tree " << tree.nodes.size() << ' ' << tree.leaves.size() << '\n';
    for (const auto& n : tree.nodes) {
      out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << n.leaf_begin
          << ' ' << n.leaf_end << '\n';
    }
    for (const auto& e : tree.leaves) out << e.label << ' ' << format_double(e.probability) << '\n';
  }
  return out.str();
}

RandomForest RandomForest::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  std::size_t n_trees = 0;
  RandomForest forest;
  if (!(in >> magic >> version) || magic != "scope3-forest" || version != 1) throw ParseError("forest: bad header");
  if (!(in >> forest.n_classes_ >> forest.n_features_ >> n_trees)) throw ParseError("forest: bad dimensions");
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::string tag;
    std::size_t n_nodes = 0;
    std::size_t n_leaves = 0;
    if (!(in >> tag >> n_nodes >> n_leaves) || tag != "tree") throw ParseError("forest: bad tree header");
    Tree tree;
    tree.nodes.resize(n_nodes);
    tree.leaves.resize(n_leaves);
    for (auto& n : tree.nodes) {
      std::string thr;
      double v = 0.0;
      if (!(in >> n.feature >> thr >> n.left >> n.right >> n.leaf_begin >> n.leaf_end) || !parse_double(thr, v)) {
        throw ParseError("forest: bad node");
      }
      n.threshold = static_cast<float>(v);
    }
    for (auto& e : tree.leaves) {
      std::string p;
      double v = 0.0;
      if (!(in >> e.label >> p) || !parse_double(p, v)) throw ParseError("forest: bad leaf");
      e.probability = static_cast<float>(v);
    }
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace scope3
