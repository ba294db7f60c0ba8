#include "gbmixed/learners.hpp"

#include "gbmixed/error.hpp"

#include <algorithm>
#include <numeric>

namespace gbmixed {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kConstant: return "constant";
    case LearnerKind::kLinear: return "linear";
    case LearnerKind::kTree: return "tree";
  }
  return "constant";
}

LearnerKind parse_learner_kind(const std::string& text) {
  if (text == "constant") return LearnerKind::kConstant;
  if (text == "linear") return LearnerKind::kLinear;
  if (text == "tree") return LearnerKind::kTree;
  throw ConfigError("unknown learner kind '" + text + "'");
}

void LearnerSpec::validate() const {
  if (tree_min_child < 1) throw ConfigError("tree_min_child must be >= 1");
  if (tree_min_parent < 2 * tree_min_child) throw ConfigError("tree_min_parent must be >= 2 * tree_min_child");
  if (tree_max_depth < 1) throw ConfigError("tree_max_depth must be >= 1");
  if (!(ridge_epsilon >= 0.0)) throw ConfigError("ridge_epsilon must be non-negative");
}

FittedLearner FittedLearner::constant(double value, Eigen::Index num_features) {
  FittedLearner l;
  l.kind_ = LearnerKind::kConstant;
  l.constant_ = value;
  l.num_features_ = num_features;
  return l;
}

FittedLearner FittedLearner::linear(double intercept, std::vector<Eigen::Index> features,
                                    Eigen::VectorXd coefficients, Eigen::Index num_features) {
  if (static_cast<Eigen::Index>(features.size()) != coefficients.size())
    throw ShapeError("linear learner: feature and coefficient counts differ");
  FittedLearner l;
  l.kind_ = LearnerKind::kLinear;
  l.constant_ = intercept;
  l.features_ = std::move(features);
  l.coefficients_ = std::move(coefficients);
  l.num_features_ = num_features;
  return l;
}

FittedLearner FittedLearner::tree(std::vector<TreeNode> nodes, Eigen::Index num_features) {
  if (nodes.empty()) throw ShapeError("tree learner needs at least one node");
  FittedLearner l;
  l.kind_ = LearnerKind::kTree;
  l.nodes_ = std::move(nodes);
  l.num_features_ = num_features;
  return l;
}

double FittedLearner::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  switch (kind_) {
    case LearnerKind::kConstant: return constant_;
    case LearnerKind::kLinear: {
      double v = constant_;
      for (std::size_t k = 0; k < features_.size(); ++k)
        v += coefficients_(static_cast<Eigen::Index>(k)) * x(features_[k]);
      return v;
    }
    case LearnerKind::kTree: {
      int node = 0;
      while (!nodes_[static_cast<std::size_t>(node)].is_leaf()) {
        const TreeNode& n = nodes_[static_cast<std::size_t>(node)];
        node = x(n.feature) < n.threshold ? n.left : n.right;
      }
      return nodes_[static_cast<std::size_t>(node)].value;
    }
  }
  return 0.0;
}

Eigen::VectorXd FittedLearner::predict(const Eigen::MatrixXd& X) const {
  if (X.cols() != num_features_)
    throw ShapeError("learner trained on " + std::to_string(num_features_) + " features, got " +
                     std::to_string(X.cols()));
  Eigen::VectorXd out(X.rows());
  if (kind_ == LearnerKind::kConstant) {
    out.setConstant(constant_);
    return out;
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_row(X.row(i));
  return out;
}

int FittedLearner::depth() const {
  if (kind_ != LearnerKind::kTree) return 0;
  std::vector<int> level(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const TreeNode& n = nodes_[k];
    deepest = std::max(deepest, level[k]);
    if (!n.is_leaf()) {
      level[static_cast<std::size_t>(n.left)] = level[k] + 1;
      level[static_cast<std::size_t>(n.right)] = level[k] + 1;
    }
  }
  return deepest;
}

void FittedLearner::count_selections(std::vector<double>& counts) const {
  if (kind_ == LearnerKind::kTree) {
    for (const auto& n : nodes_)
      if (!n.is_leaf()) counts.at(static_cast<std::size_t>(n.feature)) += 1.0;
  } else if (kind_ == LearnerKind::kLinear) {
    for (std::size_t k = 0; k < features_.size(); ++k)
      if (coefficients_(static_cast<Eigen::Index>(k)) != 0.0) counts.at(static_cast<std::size_t>(features_[k])) += 1.0;
  }
}

bool operator==(const FittedLearner& a, const FittedLearner& b) {
  if (a.kind_ != b.kind_ || a.num_features_ != b.num_features_ || a.constant_ != b.constant_ ||
      a.features_ != b.features_ || a.coefficients_.size() != b.coefficients_.size() ||
      a.nodes_.size() != b.nodes_.size())
    return false;
  if (a.coefficients_ != b.coefficients_) return false;
  for (std::size_t k = 0; k < a.nodes_.size(); ++k) {
    const auto& x = a.nodes_[k];
    const auto& y = b.nodes_[k];
    if (x.feature != y.feature || x.threshold != y.threshold || x.left != y.left || x.right != y.right ||
        x.value != y.value)
      return false;
  }
  return true;
}

namespace {

std::vector<Eigen::Index> resolve_subset(std::span<const Eigen::Index> subset, Eigen::Index p) {
  std::vector<Eigen::Index> out;
  if (subset.empty()) {
    out.resize(static_cast<std::size_t>(p));
    std::iota(out.begin(), out.end(), Eigen::Index{0});
  } else {
    out.assign(subset.begin(), subset.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    for (auto j : out)
      if (j < 0 || j >= p) throw ShapeError("feature index " + std::to_string(j) + " out of range");
  }
  return out;
}

// Exact greedy regression tree over presorted feature columns.
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LearnerSpec& spec,
              std::vector<Eigen::Index> features)
      : X_(X), y_(y), spec_(spec), features_(std::move(features)), goes_left_(static_cast<std::size_t>(X.rows())) {}

  std::vector<TreeNode> build() {
    const auto n = static_cast<int>(X_.rows());
    std::vector<std::vector<int>> sorted(features_.size());
    for (std::size_t f = 0; f < features_.size(); ++f) {
      auto& order = sorted[f];
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      const Eigen::Index col = features_[f];
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return X_(a, col) < X_(b, col); });
    }
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    nodes_.clear();
    grow(rows, sorted, 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(const std::vector<int>& rows, std::vector<std::vector<int>>& sorted, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0;
    for (int r : rows) sum += y_(r);
    const double count = static_cast<double>(rows.size());
    nodes_[static_cast<std::size_t>(id)].value = sum / count;

    if (depth >= spec_.tree_max_depth || static_cast<int>(rows.size()) < spec_.tree_min_parent) return id;
    const Split split = best_split(rows, sorted, sum);
    if (!split.found) return id;

    const Eigen::Index col = features_[split.feature];
    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      const bool left = X_(r, col) < split.threshold;
      goes_left_[static_cast<std::size_t>(r)] = left;
      (left ? left_rows : right_rows).push_back(r);
    }
    std::vector<std::vector<int>> left_sorted(sorted.size()), right_sorted(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      left_sorted[f].reserve(left_rows.size());
      right_sorted[f].reserve(right_rows.size());
      for (int r : sorted[f]) (goes_left_[static_cast<std::size_t>(r)] ? left_sorted[f] : right_sorted[f]).push_back(r);
    }
    sorted.clear();
    sorted.shrink_to_fit();

    const int left = grow(left_rows, left_sorted, depth + 1);
    const int right = grow(right_rows, right_sorted, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(col);
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  Split best_split(const std::vector<int>& rows, const std::vector<std::vector<int>>& sorted, double sum) const {
    Split best;
    const std::size_t n = rows.size();
    const double mean = sum / static_cast<double>(n);
    double sst = 0.0;
    double lo = y_(rows.front()), hi = lo;
    for (int r : rows) {
      const double d = y_(r) - mean;
      sst += d * d;
      lo = std::min(lo, y_(r));
      hi = std::max(hi, y_(r));
    }
    if (!(hi > lo)) return best;
    const double min_gain = 1e-12 * sst;
    const auto min_child = static_cast<std::size_t>(spec_.tree_min_child);

    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto& order = sorted[f];
      const Eigen::Index col = features_[f];
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += y_(order[k]);
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < min_child) continue;
        if (nr < min_child) break;
        const double a = X_(order[k], col), b = X_(order[k + 1], col);
        if (!(a < b)) continue;
        const double ml = left_sum / static_cast<double>(nl);
        const double mr = (sum - left_sum) / static_cast<double>(nr);
        const double gain =
            static_cast<double>(nl) * static_cast<double>(nr) / static_cast<double>(n) * (ml - mr) * (ml - mr);
        if (gain > min_gain && gain > best.gain) {
          best.found = true;
          best.feature = f;
          best.gain = gain;
          double mid = 0.5 * (a + b);
          if (!(mid > a)) mid = b;  // adjacent doubles: keep `a` strictly left
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  const LearnerSpec& spec_;
  std::vector<Eigen::Index> features_;
  std::vector<TreeNode> nodes_;
  std::vector<bool> goes_left_;
};

}  // namespace

FittedLearner fit_constant(const Eigen::VectorXd& pseudo, Eigen::Index num_features) {
  if (pseudo.size() == 0) throw DataError("fit_constant: empty pseudo-response");
  return FittedLearner::constant(pseudo.mean(), num_features);
}

FittedLearner fit_linear(const Eigen::MatrixXd& features, const Eigen::VectorXd& pseudo, double ridge_epsilon,
                         std::span<const Eigen::Index> feature_subset) {
  if (features.rows() < 1 || features.rows() != pseudo.size())
    throw ShapeError("fit_linear: need matching non-empty rows");
  auto cols = resolve_subset(feature_subset, features.cols());
  const Eigen::Index m = features.rows();
  const auto k = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd A(m, k + 1);
  A.col(0).setOnes();
  for (Eigen::Index j = 0; j < k; ++j) A.col(j + 1) = features.col(cols[static_cast<std::size_t>(j)]);
  Eigen::MatrixXd gram = A.transpose() * A;
  gram.diagonal().array() += ridge_epsilon;
  Eigen::VectorXd rhs = A.transpose() * pseudo;
  Eigen::VectorXd beta = gram.ldlt().solve(rhs);
  if (!beta.allFinite()) {
    // Singular Gram with eps = 0: fall back to the minimum-norm solution.
    beta = gram.completeOrthogonalDecomposition().solve(rhs);
  }
  return FittedLearner::linear(beta(0), std::move(cols), beta.tail(k), features.cols());
}

FittedLearner fit_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& pseudo, const LearnerSpec& spec,
                       std::span<const Eigen::Index> feature_subset) {
  if (features.rows() < 1 || features.rows() != pseudo.size())
    throw ShapeError("fit_tree: need matching non-empty rows");
  spec.validate();
  TreeBuilder builder(features, pseudo, spec, resolve_subset(feature_subset, features.cols()));
  return FittedLearner::tree(builder.build(), features.cols());
}

FittedLearner fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& features, const Eigen::VectorXd& pseudo,
                          std::span<const Eigen::Index> feature_subset) {
  switch (spec.kind) {
    case LearnerKind::kConstant: return fit_constant(pseudo, features.cols());
    case LearnerKind::kLinear: return fit_linear(features, pseudo, spec.ridge_epsilon, feature_subset);
    case LearnerKind::kTree: return fit_tree(features, pseudo, spec, feature_subset);
  }
  return fit_constant(pseudo, features.cols());
}

Eigen::VectorXd predict_learner(const FittedLearner& learner, const Eigen::MatrixXd& features) {
  return learner.predict(features);
}

}  // namespace gbmixed
