#include "ovf/gaussian.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace ovf::math {

GaussianDist GaussianDist::diagonal(VectorXd mean, VectorXd variances) {
  GaussianDist d;
  d.mean = std::move(mean);
  d.is_diag = true;
  d.var = std::move(variances);
  require(d.mean.size() == d.var.size(), "GaussianDist: mean/var size mismatch");
  return d;
}

GaussianDist GaussianDist::diagonal_log_sigma(const VectorXd& mean,
                                              const VectorXd& log_sigma) {
  require(mean.size() == log_sigma.size(), "GaussianDist: mean/log_sigma size mismatch");
  return diagonal(mean, (2.0 * log_sigma.array()).exp().matrix());
}

GaussianDist GaussianDist::dense(VectorXd mean, MatrixXd cov) {
  GaussianDist d;
  d.mean = std::move(mean);
  d.is_diag = false;
  d.cov = std::move(cov);
  require(d.cov.rows() == d.cov.cols() && d.cov.rows() == d.mean.size(),
          "GaussianDist: dense covariance shape mismatch");
  return d;
}

MatrixXd GaussianDist::cov_dense() const {
  if (!is_diag) return cov;
  return var.asDiagonal();
}

void GaussianDist::validate() const {
  require(mean.allFinite(), "GaussianDist: non-finite mean");
  if (is_diag) {
    require((var.array() > 0.0).all(), "GaussianDist: non-positive diagonal variance");
  } else {
    require(cov.isApprox(cov.transpose(), 1e-10), "GaussianDist: covariance not symmetric");
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw NumericalError("GaussianDist: covariance Cholesky failed");
  }
}

double diag_logpdf(const VectorXd& x, const VectorXd& mean, const VectorXd& log_sigma) {
  require(x.size() == mean.size() && x.size() == log_sigma.size(),
          "diag_logpdf: dimension mismatch");
  const auto z = (x - mean).array() * (-log_sigma).array().exp();
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + z.square().sum()) -
         log_sigma.sum();
}

DiagLogpdfGrad diag_logpdf_grad(const VectorXd& x, const VectorXd& mean,
                                const VectorXd& log_sigma) {
  require(x.size() == mean.size() && x.size() == log_sigma.size(),
          "diag_logpdf_grad: dimension mismatch");
  DiagLogpdfGrad g;
  const auto inv_sig = (-log_sigma).array().exp();
  const auto z = (x - mean).array() * inv_sig;
  g.value = -0.5 * (static_cast<double>(x.size()) * kLog2Pi + z.square().sum()) -
            log_sigma.sum();
  g.dx = (-z * inv_sig).matrix();
  g.dmean = -g.dx;
  g.dlog_sigma = (z.square() - 1.0).matrix();
  return g;
}

double gaussian_logpdf(const VectorXd& x, const GaussianDist& dist) {
  require(x.size() == dist.mean.size(), "gaussian_logpdf: dimension mismatch");
  if (dist.is_diag) {
    require((dist.var.array() > 0.0).all(), "gaussian_logpdf: non-positive variance");
    const auto z2 = (x - dist.mean).array().square() / dist.var.array();
    return -0.5 * (dist.dim() * kLog2Pi + z2.sum() + dist.var.array().log().sum());
  }
  Eigen::LLT<MatrixXd> llt(dist.cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gaussian_logpdf: covariance not SPD");
  VectorXd r = x - dist.mean;
  VectorXd w = llt.matrixL().solve(r);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (dist.dim() * kLog2Pi + logdet + w.squaredNorm());
}

GaussLogpdfGrad gaussian_logpdf_grad(const VectorXd& x, const GaussianDist& dist) {
  GaussLogpdfGrad g;
  if (dist.is_diag) {
    VectorXd log_sigma = 0.5 * dist.var.array().log().matrix();
    DiagLogpdfGrad dg = diag_logpdf_grad(x, dist.mean, log_sigma);
    g.value = dg.value;
    g.dx = std::move(dg.dx);
    g.dmean = std::move(dg.dmean);
    g.dlog_sigma = std::move(dg.dlog_sigma);
    return g;
  }
  require(x.size() == dist.mean.size(), "gaussian_logpdf_grad: dimension mismatch");
  Eigen::LLT<MatrixXd> llt(dist.cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gaussian_logpdf_grad: covariance not SPD");
  VectorXd r = x - dist.mean;
  VectorXd sol = llt.solve(r);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  g.value = -0.5 * (dist.dim() * kLog2Pi + logdet + r.dot(sol));
  g.dx = -sol;
  g.dmean = sol;
  return g;
}

double gaussian_kl(const GaussianDist& p, const GaussianDist& q) {
  require(p.dim() == q.dim(), "gaussian_kl: dimension mismatch");
  const int d = p.dim();
  if (p.is_diag && q.is_diag) {
    const auto vp = p.var.array();
    const auto vq = q.var.array();
    const auto dm = (q.mean - p.mean).array();
    return 0.5 * (vp / vq + dm.square() / vq - 1.0 + vq.log() - vp.log()).sum();
  }
  MatrixXd cq = q.cov_dense();
  Eigen::LLT<MatrixXd> llt(cq);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gaussian_kl: q covariance not SPD");
  MatrixXd cp = p.cov_dense();
  double trace_term = llt.solve(cp).trace();
  VectorXd dm = p.mean - q.mean;
  double quad = dm.dot(llt.solve(dm));
  double logdet_q = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double logdet_p;
  if (p.is_diag) {
    logdet_p = p.var.array().log().sum();
  } else {
    Eigen::LLT<MatrixXd> lltp(cp);
    if (lltp.info() != Eigen::Success)
      throw NumericalError("gaussian_kl: p covariance not SPD");
    logdet_p = 2.0 * lltp.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  return 0.5 * (trace_term + quad - d + logdet_q - logdet_p);
}

MatrixXd spd_solve(const MatrixXd& A, const MatrixXd& B) {
  require(A.rows() == A.cols(), "spd_solve: A must be square");
  require(A.rows() == B.rows(), "spd_solve: A/B row mismatch");
  Eigen::LLT<MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError("spd_solve: Cholesky failed (matrix not SPD)");
  return llt.solve(B);
}

}  // namespace ovf::math
