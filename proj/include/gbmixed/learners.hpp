#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace gbmixed {

enum class LearnerKind { kConstant, kLinear, kTree };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& text);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::kTree;
  int tree_max_depth = 3;
  int tree_min_parent = 10;
  int tree_min_child = 5;
  double ridge_epsilon = 1e-8;

  void validate() const;
};

/// Binary regression tree node. Rows with x[feature] < threshold go left.
struct TreeNode {
  int feature = -1;  // global feature index, -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean

  bool is_leaf() const { return feature < 0; }
};

/// A fitted weak learner. Immutable once built; prediction takes full feature rows.
class FittedLearner {
 public:
  FittedLearner() = default;

  static FittedLearner constant(double value, Eigen::Index num_features);
  static FittedLearner linear(double intercept, std::vector<Eigen::Index> features, Eigen::VectorXd coefficients,
                              Eigen::Index num_features);
  static FittedLearner tree(std::vector<TreeNode> nodes, Eigen::Index num_features);

  LearnerKind kind() const { return kind_; }
  Eigen::Index num_features() const { return num_features_; }

  double constant_value() const { return constant_; }
  double intercept() const { return constant_; }
  const std::vector<Eigen::Index>& features() const { return features_; }
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  /// Throws ShapeError when X.cols() differs from the training feature count.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  /// Depth of the tree (0 for a single leaf, constant and linear learners).
  int depth() const;
  /// Adds one count per internal split (trees) or per nonzero coefficient (linear).
  void count_selections(std::vector<double>& counts) const;

  friend bool operator==(const FittedLearner& a, const FittedLearner& b);

 private:
  LearnerKind kind_ = LearnerKind::kConstant;
  Eigen::Index num_features_ = 0;
  double constant_ = 0.0;  // constant value, or linear intercept
  std::vector<Eigen::Index> features_;
  Eigen::VectorXd coefficients_;
  std::vector<TreeNode> nodes_;
};

FittedLearner fit_constant(const Eigen::VectorXd& pseudo, Eigen::Index num_features = 0);

/// Least squares with intercept via (A^T A + eps I) b = A^T y, A = [1, X_J].
/// An empty `feature_subset` means every column.
FittedLearner fit_linear(const Eigen::MatrixXd& features, const Eigen::VectorXd& pseudo, double ridge_epsilon,
                         std::span<const Eigen::Index> feature_subset = {});

/// Exact greedy CART regression tree on the columns in `feature_subset` (all when empty).
FittedLearner fit_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& pseudo, const LearnerSpec& spec,
                       std::span<const Eigen::Index> feature_subset = {});

/// Dispatches on spec.kind.
FittedLearner fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& features, const Eigen::VectorXd& pseudo,
                          std::span<const Eigen::Index> feature_subset = {});

Eigen::VectorXd predict_learner(const FittedLearner& learner, const Eigen::MatrixXd& features);

}  // namespace gbmixed
