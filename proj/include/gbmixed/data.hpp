#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gbmixed {

/// Observations belonging to one cluster.
struct GroupBlock {
  std::string id;
  Eigen::VectorXd y;        // n_i
  Eigen::MatrixXd X;        // n_i x p
  Eigen::MatrixXd Z;        // n_i x q
  Eigen::VectorXd x_tilde;  // r group-level covariates

  Eigen::Index size() const { return y.size(); }
};

/// Clustered dataset. Groups are kept sorted by id (see `group_id_less`).
struct GroupedDataset {
  std::vector<GroupBlock> groups;
  std::vector<std::string> feature_names;
  std::vector<std::string> z_names;      // "(intercept)" for intercept-only designs
  std::vector<bool> categorical;         // per feature; drives the x_tilde aggregation rule
  std::optional<Eigen::Index> treatment_column;
  Eigen::Index q = 1;

  Eigen::Index num_features() const { return static_cast<Eigen::Index>(feature_names.size()); }
  std::size_t num_groups() const { return groups.size(); }
  std::size_t num_observations() const;
  bool empty() const { return groups.empty(); }

  /// Index of a feature by name, or nullopt.
  std::optional<Eigen::Index> feature_index(const std::string& name) const;

  /// Throws DataError/ShapeError on any invariant violation.
  void validate() const;

  /// Observation-level rows stacked in canonical group order.
  Eigen::MatrixXd stacked_X() const;
  Eigen::VectorXd stacked_y() const;
  /// Group-level covariates, one row per group.
  Eigen::MatrixXd stacked_x_tilde() const;
};

/// Column roles for CSV ingestion.
struct ColumnSchema {
  std::string group_column;
  std::string response_column;
  std::vector<std::string> feature_columns;
  std::vector<std::string> z_columns;  // empty means intercept-only
  std::vector<std::string> categorical_columns;
  std::optional<std::string> treatment_column;

  bool intercept_only() const { return z_columns.empty(); }
};

/// How group-level covariates are summarized from observation rows.
struct AggregationRule {
  std::vector<bool> categorical;  // empty: every feature is continuous
};

/// Canonical ordering of group ids: numeric when every id in the set is an
/// integer, lexicographic otherwise. `numeric` selects the mode.
bool group_id_less(const std::string& a, const std::string& b, bool numeric);
bool all_integer_ids(const std::vector<std::string>& ids);
/// Sorts groups in place by the canonical ordering.
void canonicalize(GroupedDataset& dataset);

enum class ResponsePolicy { kRequired, kOptional };

GroupedDataset load_csv(const std::string& path, const ColumnSchema& schema,
                        ResponsePolicy response = ResponsePolicy::kRequired);

/// Writes group id, response, features and (non-intercept) Z columns.
/// Values are printed in shortest round-trip form.
void write_csv(const GroupedDataset& dataset, const std::string& path,
               const std::string& group_column = "group", const std::string& response_column = "y");

/// Per-feature mean (continuous) or mode (categorical, ties to smallest value).
GroupedDataset group_summaries(const GroupedDataset& dataset, const AggregationRule& rule);
Eigen::VectorXd summarize_rows(const Eigen::MatrixXd& X, const AggregationRule& rule);

/// Whole-group split. The first result receives floor(train_fraction * C) groups.
std::pair<GroupedDataset, GroupedDataset> split_by_groups(const GroupedDataset& dataset,
                                                          double train_fraction, std::uint64_t seed);

/// Empty dataset sharing names and dimensions with `like`.
GroupedDataset empty_like(const GroupedDataset& like);

/// Shortest decimal representation that round-trips through strtod.
std::string format_double(double v);

}  // namespace gbmixed
