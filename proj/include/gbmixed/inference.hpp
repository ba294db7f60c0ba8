#pragma once

#include "gbmixed/boosting.hpp"
#include "gbmixed/data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace gbmixed {

/// Standard normal quantile.
double normal_quantile(double p);

struct EvaluatedComponents {
  Eigen::VectorXd mu;  // per row
  Eigen::MatrixXd G;   // at x_tilde
  Eigen::VectorXd R;   // per row
};

EvaluatedComponents evaluate_components(const FittedModel& model, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& x_tilde);

/// G Z^T Sigma^{-1} residual with Sigma = Z G Z^T + diag(R).
Eigen::VectorXd blup(const Eigen::VectorXd& residual, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& G,
                     const Eigen::VectorXd& R_diag, const std::string& group_id = "");
Eigen::VectorXd blup(const FittedModel& model, const GroupBlock& group);

struct PredictionRequest {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  std::optional<std::string> group_id;
  /// Group-level covariates; summarized from X when absent and the group is unknown.
  std::optional<Eigen::VectorXd> x_tilde;
  double alpha = 0.1;
  /// For unseen groups, use R(x) alone as the predictive variance.
  bool reduced_new_group_variance = false;
};

struct PredictionResult {
  Eigen::VectorXd mu_marginal;
  Eigen::VectorXd mu_conditional;
  Eigen::VectorXd var_total;
  Eigen::VectorXd interval_lo;
  Eigen::VectorXd interval_hi;
  Eigen::VectorXd u_hat;
  bool known_group = false;
};

/// Uses the BLUPs stored in the model for known group ids.
PredictionResult predict(const FittedModel& model, const PredictionRequest& request);
/// Recomputes the BLUP from `training_groups` when the group id is present there.
PredictionResult predict(const FittedModel& model, const PredictionRequest& request,
                         const GroupedDataset& training_groups);

/// f(x, t = arm_a) - f(x, t = arm_b).
Eigen::VectorXd cate(const FittedModel& model, const Eigen::MatrixXd& X, Eigen::Index treatment_index,
                     double arm_a = 1.0, double arm_b = 0.0);

/// Var[Y(a)] + Var[Y(b)] - 2 Cov[Y(a), Y(b)] per row. With a random slope on the
/// treatment (Z column `slope_column`) the design row is toggled with the arm.
Eigen::VectorXd ite_variance(const FittedModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                             const Eigen::VectorXd& x_tilde, Eigen::Index treatment_index,
                             std::optional<Eigen::Index> slope_column = std::nullopt, double arm_a = 1.0,
                             double arm_b = 0.0);

double ate(const FittedModel& model, const GroupedDataset& dataset);

}  // namespace gbmixed
