#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "plotcast/jsonl.hpp"

namespace plotcast {

struct GbmConfig {
  int n_estimators = 100;
  int max_depth = 5;
  int max_leaves = 5;
  double learning_rate = 0.1;
  int min_samples_leaf = 2;
};

/// Flat binary regression tree. Internal nodes route x[feature] <= threshold left.
class RegressionTree {
public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  RegressionTree() : nodes_{Node{}} {}
  explicit RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  template <typename Derived>
  double predict(const Eigen::MatrixBase<Derived>& x) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  int leaf_count() const;
  int depth() const;
  double min_leaf() const;
  double max_leaf() const;

private:
  std::vector<Node> nodes_;
};

/// Fits one tree to residuals by greedy variance-reduction splits. Leaves are
/// grown best-first (largest gain first) until max_leaves, honoring max_depth
/// and min_samples_leaf. Exact thresholds: midpoints of sorted unique values.
RegressionTree fit_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const GbmConfig& config);

class GbmForest {
public:
  GbmForest() = default;
  GbmForest(GbmConfig config, Eigen::VectorXd base_score, std::vector<std::vector<RegressionTree>> trees);

  int input_dimension() const { return input_dim_; }
  int output_dimension() const { return static_cast<int>(base_score_.size()); }
  const GbmConfig& config() const { return config_; }
  const Eigen::VectorXd& base_score() const { return base_score_; }
  const std::vector<std::vector<RegressionTree>>& trees() const { return trees_; }
  /// Per-round training MSE (averaged over output dimensions), index 0 = base score only.
  const std::vector<double>& training_loss() const { return training_loss_; }

  /// base_score + learning_rate * sum of tree outputs, per output dimension.
  Eigen::VectorXd predict_raw(const Eigen::VectorXd& x) const;
  /// Raw prediction clamped at zero and rescaled to unit norm (unless zero).
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;

  Json to_json() const;
  static GbmForest from_json(const Json& j);
  void save(const std::filesystem::path& path) const;
  static GbmForest load(const std::filesystem::path& path);

private:
  friend GbmForest fit_gbm(std::span<const Eigen::VectorXd>, std::span<const Eigen::VectorXd>, const GbmConfig&,
                           std::uint64_t);
  GbmConfig config_;
  Eigen::VectorXd base_score_;
  std::vector<std::vector<RegressionTree>> trees_;  // [output dim][round]
  std::vector<double> training_loss_;
  int input_dim_ = 0;
};

/// Independent residual boosting per output dimension with squared-error loss.
/// Throws if the training loss ever increases between rounds.
GbmForest fit_gbm(std::span<const Eigen::VectorXd> inputs, std::span<const Eigen::VectorXd> targets,
                  const GbmConfig& config, std::uint64_t seed = 0);

}  // namespace plotcast
