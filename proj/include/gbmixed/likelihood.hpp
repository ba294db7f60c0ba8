#pragma once

#include "gbmixed/data.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>

namespace gbmixed {

/// G = L L^T (q x q) and the diagonal of R (n_i) for one group.
struct VarianceComponents {
  Eigen::MatrixXd L;
  Eigen::VectorXd R_diag;

  Eigen::MatrixXd G() const { return L * L.transpose(); }
};

/// Cholesky factor of a marginal covariance with the jitter policy applied:
/// on failure add 1e-8 * mean(diag) to the diagonal, doubling up to 3 retries.
class CovarianceFactor {
 public:
  explicit CovarianceFactor(const Eigen::MatrixXd& sigma, const std::string& group_id = "");

  Eigen::Index size() const { return chol_.rows(); }
  double log_det() const { return log_det_; }
  /// Jitter added to the diagonal (0 when the first factorization succeeded).
  double jitter() const { return jitter_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  /// L^{-1} B with the lower Cholesky factor L.
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& B) const;
  /// L^{-T} w; combined with half_solve this gives Sigma^{-1} b.
  Eigen::VectorXd back_solve(const Eigen::VectorXd& w) const;
  /// Diagonal of Sigma^{-1}, from the inverse Cholesky factor.
  Eigen::VectorXd inverse_diagonal() const;

 private:
  Eigen::MatrixXd chol_;  // lower triangular
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

struct GradientSet {
  Eigen::VectorXd d_mu;    // Sigma^{-1}(y - mu)
  Eigen::MatrixXd d_L;     // lower-triangular q x q
  Eigen::VectorXd d_logR;  // n_i
};

/// Z G Z^T + diag(R).
Eigen::MatrixXd marginal_covariance(const Eigen::MatrixXd& Z, const VarianceComponents& vc);
Eigen::MatrixXd marginal_covariance(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& G,
                                    const Eigen::VectorXd& R_diag);

double group_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);
Eigen::VectorXd grad_mu(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);
/// -1/2 (Z^T Sigma^{-1} Z - r r^T), r = Z^T Sigma^{-1}(y - mu). Unconstrained (non-symmetrized) form.
Eigen::MatrixXd grad_G(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                       const Eigen::MatrixXd& Z);
/// Lower triangle of 2 dG L.
Eigen::MatrixXd grad_L(const Eigen::MatrixXd& dG, const Eigen::MatrixXd& L);
Eigen::VectorXd grad_R_diag(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);
Eigen::VectorXd grad_logR(const Eigen::VectorXd& dR, const Eigen::VectorXd& R_diag);
double grad_sigma2_homoscedastic(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                 const Eigen::MatrixXd& sigma);

/// Sum of group log-likelihoods in canonical group order.
double total_loglik(const GroupedDataset& dataset, std::span<const Eigen::VectorXd> mu,
                    std::span<const Eigen::MatrixXd> sigma);

/// Log-likelihood and all gradients of one group from a single factorization.
struct GroupEvaluation {
  double loglik = 0.0;
  GradientSet grads;
};

GroupEvaluation evaluate_group(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& Z,
                               const VarianceComponents& vc, const std::string& group_id = "");
double group_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& Z,
                    const VarianceComponents& vc, const std::string& group_id = "");

}  // namespace gbmixed
