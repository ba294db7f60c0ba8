#include "gbmixed/inference.hpp"

#include "gbmixed/error.hpp"
#include "gbmixed/likelihood.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace gbmixed {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal quantile requires p in (0, 1), got " + format_double(p));
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

EvaluatedComponents evaluate_components(const FittedModel& model, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& x_tilde) {
  return {model.mean_at(X), model.G_at(x_tilde), model.R_at(X)};
}

Eigen::VectorXd blup(const Eigen::VectorXd& residual, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& G,
                     const Eigen::VectorXd& R_diag, const std::string& group_id) {
  if (residual.size() == 0) throw DataError("BLUP requires at least one observation");
  if (Z.rows() != residual.size() || R_diag.size() != residual.size() || G.rows() != Z.cols()) {
    throw ShapeError("BLUP inputs have inconsistent dimensions");
  }
  const CovarianceFactor factor(marginal_covariance(Z, G, R_diag), group_id);
  return G * (Z.transpose() * factor.solve(residual));
}

Eigen::VectorXd blup(const FittedModel& model, const GroupBlock& group) {
  const Eigen::VectorXd residual = group.y - model.mean_at(group.X);
  return blup(residual, group.Z, model.G_at(group.x_tilde), model.R_at(group.X), group.id);
}

namespace {

void check_request(const FittedModel& model, const PredictionRequest& req) {
  if (req.X.cols() != model.num_features()) {
    throw ShapeError("expected " + std::to_string(model.num_features()) + " feature columns, got " +
                     std::to_string(req.X.cols()));
  }
  if (req.Z.rows() != req.X.rows() || req.Z.cols() != model.q) {
    throw ShapeError("random-effects design must be " + std::to_string(req.X.rows()) + " x " +
                     std::to_string(model.q));
  }
  if (!(req.alpha > 0.0 && req.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

PredictionResult assemble(const FittedModel& model, const PredictionRequest& req, const Eigen::VectorXd& x_tilde,
                          const std::optional<Eigen::VectorXd>& u_hat) {
  PredictionResult out;
  out.known_group = u_hat.has_value();
  out.mu_marginal = model.mean_at(req.X);
  out.u_hat = u_hat ? *u_hat : Eigen::VectorXd::Zero(model.q);
  out.mu_conditional = out.mu_marginal + req.Z * out.u_hat;
  const Eigen::MatrixXd G = model.G_at(x_tilde);
  const Eigen::VectorXd R = model.R_at(req.X);
  out.var_total = R;
  if (out.known_group || !req.reduced_new_group_variance) {
    out.var_total += (req.Z * G).cwiseProduct(req.Z).rowwise().sum();
  }
  const double z = normal_quantile(1.0 - req.alpha / 2.0);
  const Eigen::VectorXd& center = out.known_group ? out.mu_conditional : out.mu_marginal;
  const Eigen::VectorXd half = z * out.var_total.array().sqrt().matrix();
  out.interval_lo = center - half;
  out.interval_hi = center + half;
  return out;
}

Eigen::VectorXd fallback_x_tilde(const FittedModel& model, const PredictionRequest& req) {
  if (req.x_tilde) return *req.x_tilde;
  if (req.X.rows() == 0) throw DataError("prediction request has no rows");
  return summarize_rows(req.X, AggregationRule{model.categorical});
}

}  // namespace

PredictionResult predict(const FittedModel& model, const PredictionRequest& request) {
  check_request(model, request);
  const GroupEffect* known = request.group_id ? model.find_group(*request.group_id) : nullptr;
  if (known != nullptr) {
    return assemble(model, request, request.x_tilde ? *request.x_tilde : known->x_tilde, known->u_hat);
  }
  return assemble(model, request, fallback_x_tilde(model, request), std::nullopt);
}

PredictionResult predict(const FittedModel& model, const PredictionRequest& request,
                         const GroupedDataset& training_groups) {
  check_request(model, request);
  if (request.group_id) {
    for (const auto& g : training_groups.groups) {
      if (g.id == *request.group_id) {
        return assemble(model, request, request.x_tilde ? *request.x_tilde : g.x_tilde, blup(model, g));
      }
    }
  }
  return assemble(model, request, fallback_x_tilde(model, request), std::nullopt);
}

Eigen::VectorXd cate(const FittedModel& model, const Eigen::MatrixXd& X, Eigen::Index treatment_index,
                     double arm_a, double arm_b) {
  if (treatment_index < 0 || treatment_index >= X.cols()) {
    throw ShapeError("treatment column " + std::to_string(treatment_index) + " out of range");
  }
  Eigen::MatrixXd Xa = X;
  Eigen::MatrixXd Xb = X;
  Xa.col(treatment_index).setConstant(arm_a);
  Xb.col(treatment_index).setConstant(arm_b);
  return model.mean_at(Xa) - model.mean_at(Xb);
}

Eigen::VectorXd ite_variance(const FittedModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                             const Eigen::VectorXd& x_tilde, Eigen::Index treatment_index,
                             std::optional<Eigen::Index> slope_column, double arm_a, double arm_b) {
  if (treatment_index < 0 || treatment_index >= X.cols()) {
    throw ShapeError("treatment column " + std::to_string(treatment_index) + " out of range");
  }
  Eigen::MatrixXd Xa = X;
  Eigen::MatrixXd Xb = X;
  Xa.col(treatment_index).setConstant(arm_a);
  Xb.col(treatment_index).setConstant(arm_b);
  Eigen::VectorXd var = model.R_at(Xa) + model.R_at(Xb);
  if (slope_column) {
    if (Z.rows() != X.rows() || Z.cols() != model.q || *slope_column < 0 || *slope_column >= Z.cols()) {
      throw ShapeError("random-slope column out of range");
    }
    // Only the slope coordinate differs between arms, so z_a - z_b = (a - b) e_s.
    const Eigen::MatrixXd G = model.G_at(x_tilde);
    const double d = arm_a - arm_b;
    var.array() += d * d * G(*slope_column, *slope_column);
  }
  return var;
}

double ate(const FittedModel& model, const GroupedDataset& dataset) {
  if (dataset.num_observations() == 0) throw DataError("ATE requires a non-empty dataset");
  const auto t = dataset.treatment_column ? dataset.treatment_column : model.treatment_column;
  if (!t) throw ConfigError("ATE requires a treatment column");
  return cate(model, dataset.stacked_X(), *t).mean();
}

}  // namespace gbmixed
