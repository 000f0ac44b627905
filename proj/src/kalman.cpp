#include "ovf/kalman.hpp"

#include <cmath>

namespace ovf::baseline {

KalmanState kf_init(const model::ModelTheta& theta) {
  require(theta.is_linear(), "kf_init: linear-Gaussian model required");
  const auto& m = theta.lg();
  KalmanState s;
  s.mean = m.prior_mean;
  s.cov = m.prior_var.asDiagonal();
  s.loglik = 0.0;
  return s;
}

KalmanState kf_update(const model::ModelTheta& theta, const VectorXd& pred_mean,
                      const MatrixXd& pred_cov, const VectorXd& y, double loglik_base) {
  const auto& m = theta.lg();
  const int dy = theta.dy();
  VectorXd innov = y - m.G * pred_mean;
  MatrixXd S = m.G * pred_cov * m.G.transpose() + MatrixXd(m.V.asDiagonal());
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalError("kf_update: innovation covariance not SPD");
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  VectorXd w = llt.solve(innov);

  KalmanState out;
  out.loglik = loglik_base - 0.5 * (dy * math::kLog2Pi + logdet + innov.dot(w));
  MatrixXd K = pred_cov * m.G.transpose() * llt.solve(MatrixXd::Identity(dy, dy));
  out.mean = pred_mean + K * innov;
  out.cov = pred_cov - K * m.G * pred_cov;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

KalmanState kf_step(const model::ModelTheta& theta, const KalmanState& state,
                    const VectorXd& y) {
  const auto& m = theta.lg();
  VectorXd pred_mean = m.F * state.mean;
  MatrixXd pred_cov = m.F * state.cov * m.F.transpose() + MatrixXd(m.U.asDiagonal());
  return kf_update(theta, pred_mean, pred_cov, y, state.loglik);
}

std::vector<KalmanState> kf_filter(const model::ModelTheta& theta, const MatrixXd& obs) {
  std::vector<KalmanState> states;
  states.reserve(obs.rows());
  KalmanState prev = kf_init(theta);
  for (Eigen::Index t = 0; t < obs.rows(); ++t) {
    if (t == 0)
      prev = kf_update(theta, prev.mean, prev.cov, obs.row(0).transpose(), 0.0);
    else
      prev = kf_step(theta, prev, obs.row(t).transpose());
    states.push_back(prev);
  }
  return states;
}

math::GaussianDist kf_pairwise_smooth(const model::ModelTheta& theta,
                                      const math::GaussianDist& filter_prev,
                                      const VectorXd& y_t) {
  require(theta.is_linear(), "kf_pairwise_smooth: linear-Gaussian model required");
  const auto& m = theta.lg();
  const int d = theta.dx();
  const int dy = theta.dy();
  MatrixXd P = filter_prev.cov_dense();

  // Stacked state [x_{t-1}; x_t] predictive law.
  VectorXd mean(2 * d);
  mean.head(d) = filter_prev.mean;
  mean.tail(d) = m.F * filter_prev.mean;
  MatrixXd cov(2 * d, 2 * d);
  MatrixXd PFt = P * m.F.transpose();
  cov.topLeftCorner(d, d) = P;
  cov.topRightCorner(d, d) = PFt;
  cov.bottomLeftCorner(d, d) = PFt.transpose();
  cov.bottomRightCorner(d, d) = m.F * PFt + MatrixXd(m.U.asDiagonal());

  // Observation touches only the x_t block: H = [0 G].
  MatrixXd H = MatrixXd::Zero(dy, 2 * d);
  H.rightCols(d) = m.G;
  MatrixXd S = H * cov * H.transpose() + MatrixXd(m.V.asDiagonal());
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalError("kf_pairwise_smooth: innovation covariance not SPD");
  MatrixXd K = cov * H.transpose() * llt.solve(MatrixXd::Identity(dy, dy));
  VectorXd innov = y_t - H * mean;
  mean += K * innov;
  cov -= K * H * cov;
  cov = 0.5 * (cov + cov.transpose());
  return math::GaussianDist::dense(std::move(mean), std::move(cov));
}

void kf_backward_kernel(const model::ModelTheta& theta, const KalmanState& prev,
                        MatrixXd& A, VectorXd& c, MatrixXd& cov) {
  const auto& m = theta.lg();
  MatrixXd pred_cov = m.F * prev.cov * m.F.transpose() + MatrixXd(m.U.asDiagonal());
  Eigen::LLT<MatrixXd> llt(pred_cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("kf_backward_kernel: predictive covariance not SPD");
  A = prev.cov * m.F.transpose() * llt.solve(MatrixXd::Identity(theta.dx(), theta.dx()));
  c = prev.mean - A * m.F * prev.mean;
  cov = prev.cov - A * m.F * prev.cov;
  cov = 0.5 * (cov + cov.transpose());
}

double kl_decomposed_elbo(const model::ModelTheta& theta, const MatrixXd& obs,
                          const vfam::PhiTrajectory& traj) {
  const int T = traj.length();
  require(T >= 1 && obs.rows() >= T, "kl_decomposed_elbo: length mismatch");
  const int d = theta.dx();
  std::vector<KalmanState> states = kf_filter(theta, obs.topRows(T));
  std::vector<math::GaussianDist> chain = vfam::affine_chain_marginals(traj);

  const vfam::PhiStep& last = traj.steps[T - 1];
  auto q_last = math::GaussianDist::diagonal_log_sigma(last.mu, last.log_sigma);
  auto p_last = math::GaussianDist::dense(states[T - 1].mean, states[T - 1].cov);
  double elbo = states[T - 1].loglik - math::gaussian_kl(q_last, p_last);

  // Expected KLs between variational and exact backward kernels under the
  // chain marginal of x_{k+1}; both kernels are affine-Gaussian in x_{k+1}.
  for (int k = 0; k + 1 < T; ++k) {
    const vfam::PhiStep& step = traj.steps[k + 1];
    require(step.kernel_is_affine(), "kl_decomposed_elbo: affine kernels required");
    const auto& ker = step.affine();
    MatrixXd A;
    VectorXd c;
    MatrixXd Sigma_p;
    kf_backward_kernel(theta, states[k], A, c, Sigma_p);

    MatrixXd Sigma_q = ((2.0 * ker.log_sigma_t.array()).exp()).matrix().asDiagonal();
    Eigen::LLT<MatrixXd> llt(Sigma_p);
    if (llt.info() != Eigen::Success)
      throw NumericalError("kl_decomposed_elbo: backward covariance not SPD");
    double logdet_p = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    double logdet_q = 2.0 * ker.log_sigma_t.sum();
    double trace_term = llt.solve(Sigma_q).trace();

    // E_x[ d(x)' Sigma_p^-1 d(x) ] for d(x) = (W - A) x + (b - c),
    // x ~ chain marginal of x_{k+1}.
    const math::GaussianDist& marg = chain[k + 1];
    MatrixXd D = ker.W - A;
    VectorXd d0 = D * marg.mean + (ker.b - c);
    double quad = d0.dot(llt.solve(d0)) + llt.solve(D * marg.cov_dense() * D.transpose()).trace();

    elbo -= 0.5 * (logdet_p - logdet_q - d + trace_term + quad);
  }
  return elbo;
}

vfam::PhiTrajectory kalman_phi_trajectory(const model::ModelTheta& theta,
                                          const MatrixXd& obs) {
  const int d = theta.dx();
  std::vector<KalmanState> states = kf_filter(theta, obs);
  vfam::PhiTrajectory traj;
  for (size_t t = 0; t < states.size(); ++t) {
    vfam::PhiStep step;
    step.mu = states[t].mean;
    VectorXd var = states[t].cov.diagonal();
    require((states[t].cov - MatrixXd(var.asDiagonal())).cwiseAbs().maxCoeff() < 1e-9,
            "kalman_phi_trajectory: filter covariance is not diagonal");
    step.log_sigma = (0.5 * var.array().log()).matrix();
    if (t > 0) {
      MatrixXd A, cov;
      VectorXd c;
      kf_backward_kernel(theta, states[t - 1], A, c, cov);
      VectorXd bvar = cov.diagonal();
      require((cov - MatrixXd(bvar.asDiagonal())).cwiseAbs().maxCoeff() < 1e-9,
              "kalman_phi_trajectory: backward covariance is not diagonal");
      vfam::AffineKernel k;
      k.W = A;
      k.b = c;
      k.log_sigma_t = (0.5 * bvar.array().log()).matrix();
      step.kernel = std::move(k);
    }
    traj.steps.push_back(std::move(step));
  }
  return traj;
}

}  // namespace ovf::baseline
