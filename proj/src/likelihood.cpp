#include "gbmixed/likelihood.hpp"

#include "gbmixed/error.hpp"

#include <cmath>
#include <numbers>

namespace gbmixed {

namespace {

constexpr int kMaxJitterRetries = 3;
constexpr double kJitterScale = 1e-8;

bool try_cholesky(const Eigen::MatrixXd& sigma, Eigen::MatrixXd& chol) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return false;
  chol = llt.matrixL();
  for (Eigen::Index k = 0; k < chol.rows(); ++k)
    if (!(chol(k, k) > 0.0) || !std::isfinite(chol(k, k))) return false;
  return true;
}

}  // namespace

CovarianceFactor::CovarianceFactor(const Eigen::MatrixXd& sigma, const std::string& group_id) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("covariance matrix is not square");
  if (!try_cholesky(sigma, chol_)) {
    const double mean_diag = sigma.diagonal().mean();
    if (!(std::isfinite(mean_diag) && mean_diag > 0.0)) throw SingularCovarianceError(group_id);
    double add = kJitterScale * mean_diag;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxJitterRetries && !ok; ++attempt, add *= 2.0) {
      Eigen::MatrixXd jittered = sigma;
      jittered.diagonal().array() += add;
      if (try_cholesky(jittered, chol_)) {
        ok = true;
        jitter_ = add;
      }
    }
    if (!ok) throw SingularCovarianceError(group_id);
  }
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

Eigen::MatrixXd CovarianceFactor::half_solve(const Eigen::MatrixXd& B) const {
  return chol_.triangularView<Eigen::Lower>().solve(B);
}

Eigen::VectorXd CovarianceFactor::back_solve(const Eigen::VectorXd& w) const {
  return chol_.transpose().triangularView<Eigen::Upper>().solve(w);
}

Eigen::VectorXd CovarianceFactor::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd w = chol_.triangularView<Eigen::Lower>().solve(b);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(w);
}

Eigen::MatrixXd CovarianceFactor::solve(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd W = chol_.triangularView<Eigen::Lower>().solve(B);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(W);
}

Eigen::VectorXd CovarianceFactor::inverse_diagonal() const {
  // Sigma^{-1} = L^{-T} L^{-1}; its diagonal is the squared column norms of L^{-1}.
  Eigen::MatrixXd inv_chol = half_solve(Eigen::MatrixXd::Identity(size(), size()));
  return inv_chol.colwise().squaredNorm().transpose();
}

Eigen::MatrixXd marginal_covariance(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& G,
                                    const Eigen::VectorXd& R_diag) {
  if (Z.cols() != G.rows() || G.rows() != G.cols() || Z.rows() != R_diag.size())
    throw ShapeError("marginal_covariance: dimension mismatch");
  Eigen::MatrixXd sigma = Z * G * Z.transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  sigma.diagonal() += R_diag;
  return sigma;
}

Eigen::MatrixXd marginal_covariance(const Eigen::MatrixXd& Z, const VarianceComponents& vc) {
  return marginal_covariance(Z, vc.G(), vc.R_diag);
}

double group_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  CovarianceFactor f(sigma);
  Eigen::VectorXd w = f.half_solve(y - mu);
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + f.log_det() + w.squaredNorm());
}

Eigen::VectorXd grad_mu(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  return CovarianceFactor(sigma).solve(Eigen::VectorXd(y - mu));
}

Eigen::MatrixXd grad_G(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                       const Eigen::MatrixXd& Z) {
  CovarianceFactor f(sigma);
  Eigen::MatrixXd W = f.half_solve(Z);
  Eigen::VectorXd r = W.transpose() * f.half_solve(Eigen::MatrixXd(y - mu));
  Eigen::MatrixXd dG = -0.5 * (W.transpose() * W - r * r.transpose());
  return 0.5 * (dG + dG.transpose());
}

Eigen::MatrixXd grad_L(const Eigen::MatrixXd& dG, const Eigen::MatrixXd& L) {
  Eigen::MatrixXd out = 2.0 * dG * L;
  return out.triangularView<Eigen::Lower>();
}

Eigen::VectorXd grad_R_diag(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  CovarianceFactor f(sigma);
  Eigen::VectorXd a = f.solve(Eigen::VectorXd(y - mu));
  return -0.5 * (f.inverse_diagonal().array() - a.array().square()).matrix();
}

Eigen::VectorXd grad_logR(const Eigen::VectorXd& dR, const Eigen::VectorXd& R_diag) {
  if (dR.size() != R_diag.size()) throw ShapeError("grad_logR: length mismatch");
  return dR.cwiseProduct(R_diag);
}

double grad_sigma2_homoscedastic(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                 const Eigen::MatrixXd& sigma) {
  CovarianceFactor f(sigma);
  Eigen::VectorXd a = f.solve(Eigen::VectorXd(y - mu));
  return -0.5 * (f.inverse_diagonal().sum() - a.squaredNorm());
}

double total_loglik(const GroupedDataset& dataset, std::span<const Eigen::VectorXd> mu,
                    std::span<const Eigen::MatrixXd> sigma) {
  if (dataset.empty()) throw DataError("total_loglik: empty dataset");
  if (mu.size() != dataset.num_groups() || sigma.size() != dataset.num_groups())
    throw ShapeError("total_loglik: need one mean and covariance per group");
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.num_groups(); ++i) {
    const auto& g = dataset.groups[i];
    CovarianceFactor f(sigma[i], g.id);
    Eigen::VectorXd w = f.half_solve(Eigen::MatrixXd(g.y - mu[i]));
    total += -0.5 * (static_cast<double>(g.size()) * std::log(2.0 * std::numbers::pi) + f.log_det() +
                     w.squaredNorm());
  }
  return total;
}

GroupEvaluation evaluate_group(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& Z,
                               const VarianceComponents& vc, const std::string& group_id) {
  const Eigen::MatrixXd G = vc.G();
  CovarianceFactor f(marginal_covariance(Z, G, vc.R_diag), group_id);

  Eigen::VectorXd w = f.half_solve(Eigen::MatrixXd(y - mu));
  Eigen::VectorXd a = f.back_solve(w);
  Eigen::MatrixXd W = f.half_solve(Z);
  Eigen::VectorXd r = W.transpose() * w;

  GroupEvaluation out;
  out.loglik = -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi) + f.log_det() +
                       w.squaredNorm());
  out.grads.d_mu = a;
  Eigen::MatrixXd dG = -0.5 * (W.transpose() * W - r * r.transpose());
  dG = 0.5 * (dG + dG.transpose()).eval();
  out.grads.d_L = grad_L(dG, vc.L);
  Eigen::VectorXd dR = -0.5 * (f.inverse_diagonal().array() - a.array().square()).matrix();
  out.grads.d_logR = grad_logR(dR, vc.R_diag);
  return out;
}

double group_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& Z,
                    const VarianceComponents& vc, const std::string& group_id) {
  CovarianceFactor f(marginal_covariance(Z, vc.G(), vc.R_diag), group_id);
  Eigen::VectorXd w = f.half_solve(Eigen::MatrixXd(y - mu));
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi) + f.log_det() +
                 w.squaredNorm());
}

}  // namespace gbmixed
