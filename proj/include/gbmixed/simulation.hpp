#pragma once

#include "gbmixed/boosting.hpp"
#include "gbmixed/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace gbmixed {

/// 1 / (1 + exp(-20 (x - 1/3))).
double sigmoid(double x);

enum class ScenarioKind {
  kExpA,          // nonlinear mean, p = 300 mixed covariates, homoscedastic
  kExpB,          // residual variance driven by x2 and x5
  kExpC,          // residual variance on x5, random-intercept variance on pair-level x3
  kExpCTwoGroup,  // as kExpC with random-intercept SD 0.5 or 2.0 split at x3 = 0.5
};

struct SimulationScenario {
  std::string name;
  ScenarioKind kind = ScenarioKind::kExpB;
  int n = 10000;  // observations, two per pair
  int p = 30;     // covariates before the treatment column
  double train_fraction = 0.6;
  std::uint64_t seed = 1;

  static SimulationScenario preset(const std::string& name);

  /// Covariate vector x holds the p covariates (0-based: x[0] is x1).
  double mean_fn(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double tau_fn(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double residual_fn(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  /// Random-intercept variance given the group-level covariates.
  double group_variance(const Eigen::Ref<const Eigen::RowVectorXd>& x_tilde) const;
  bool heteroscedastic_R() const;
  bool heterogeneous_G() const;
  /// Variant and learning rate used for this scenario's reference runs.
  FitConfig default_config() const;
  void validate() const;
};

struct TruthBlock {
  Eigen::VectorXd tau;
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXd R;  // residual variance at each observed row
  double G = 0.0;     // random-intercept variance of the pair
};

using GroundTruth = std::unordered_map<std::string, TruthBlock>;

struct SimulatedData {
  GroupedDataset data;  // covariates x1..xp then treatment column "w"
  GroundTruth truth;
};

SimulatedData generate(const SimulationScenario& scenario);

struct ReplicationRow {
  int replication = 0;
  double cate_mse = 0.0;
  double coverage_pct = 0.0;
  std::optional<double> r_mse;
  std::optional<double> g_mse;
  double seconds = 0.0;
};

/// Scores treatment-effect predictions and their variances against ground truth.
/// `tau_hat` and `ite_var` are stacked in the test set's group order.
ReplicationRow score_predictions(const GroupedDataset& test, const GroundTruth& truth,
                                 const Eigen::VectorXd& tau_hat, const Eigen::VectorXd& ite_var, double alpha);

ReplicationRow score(const FittedModel& model, const GroupedDataset& test, const GroundTruth& truth,
                     double alpha = 0.1);

struct Aggregate {
  double mean = 0.0;
  double sd = 0.0;
};

struct ReplicationReport {
  std::string method;
  std::vector<ReplicationRow> rows;
  Aggregate cate_mse;
  Aggregate coverage_pct;
  std::optional<Aggregate> r_mse;
  std::optional<Aggregate> g_mse;
};

Aggregate aggregate(const std::vector<double>& values);
ReplicationReport summarize(const std::string& method, std::vector<ReplicationRow> rows);

/// Display name of a variant as used in report tables.
std::string method_name(Variant v);

/// Called with each replication's fitted model and test split.
using ReplicationObserver = std::function<void(int replication, const FittedModel& model,
                                               const GroupedDataset& test, const GroundTruth& truth)>;

/// Replication r uses scenario seed + r for data, split and fit.
ReplicationReport run_replications(const SimulationScenario& scenario, const FitConfig& config, int reps,
                                   const FitObserver& fit_observer = {},
                                   const ReplicationObserver& rep_observer = {});

/// Columns: replication, method, cate_mse, cate_mse_sd, coverage, coverage_sd, r_mse, g_mse.
void write_report_csv(const ReplicationReport& report, std::ostream& out);
void write_truth_csv(const GroupedDataset& data, const GroundTruth& truth, std::ostream& out);

}  // namespace gbmixed
