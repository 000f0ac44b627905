#include "ovf/rmle.hpp"

#include <cmath>

namespace ovf::baseline {

namespace {

// Basis derivatives of (F, G) for one flat-theta coordinate.
void theta_basis(const model::ModelTheta& theta, int j, MatrixXd& dF, MatrixXd& dG) {
  const auto& m = theta.lg();
  const int dx = theta.dx();
  const int dy = theta.dy();
  dF = MatrixXd::Zero(dx, dx);
  dG = MatrixXd::Zero(dy, dx);
  if (theta.learn == model::LearnSet::FgDiag) {
    if (j < dx)
      dF(j, j) = 1.0;
    else
      dG(j - dx, j - dx) = 1.0;
  } else {
    const int nf = dx * dx;
    if (j < nf)
      dF(j / dx, j % dx) = 1.0;
    else
      dG((j - nf) / dx, (j - nf) % dx) = 1.0;
  }
}

}  // namespace

TangentState rmle_init(const model::ModelTheta& theta) {
  require(theta.is_linear() && theta.theta_dim() > 0,
          "rmle_init: linear-Gaussian model with learnable {F, G} required");
  TangentState s;
  s.kf = kf_init(theta);
  s.dmean.assign(theta.theta_dim(), VectorXd::Zero(theta.dx()));
  s.dcov.assign(theta.theta_dim(), MatrixXd::Zero(theta.dx(), theta.dx()));
  return s;
}

VectorXd rmle_tangent_step(const model::ModelTheta& theta, TangentState& state,
                           const VectorXd& y, bool first) {
  const auto& m = theta.lg();
  const int dx = theta.dx();
  const int dy = theta.dy();
  const int dtheta = theta.theta_dim();

  VectorXd pred_mean;
  MatrixXd pred_cov;
  std::vector<VectorXd> dpm(dtheta);
  std::vector<MatrixXd> dpc(dtheta);
  MatrixXd dF, dG;
  if (first) {
    pred_mean = m.prior_mean;
    pred_cov = m.prior_var.asDiagonal();
    for (int j = 0; j < dtheta; ++j) {
      dpm[j] = VectorXd::Zero(dx);
      dpc[j] = MatrixXd::Zero(dx, dx);
    }
  } else {
    pred_mean = m.F * state.kf.mean;
    pred_cov = m.F * state.kf.cov * m.F.transpose() + MatrixXd(m.U.asDiagonal());
    for (int j = 0; j < dtheta; ++j) {
      theta_basis(theta, j, dF, dG);
      dpm[j] = dF * state.kf.mean + m.F * state.dmean[j];
      MatrixXd a = dF * state.kf.cov * m.F.transpose();
      dpc[j] = a + m.F * state.dcov[j] * m.F.transpose() + a.transpose();
    }
  }

  VectorXd innov = y - m.G * pred_mean;
  MatrixXd S = m.G * pred_cov * m.G.transpose() + MatrixXd(m.V.asDiagonal());
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalError("rmle_tangent_step: innovation covariance not SPD");
  MatrixXd Sinv = llt.solve(MatrixXd::Identity(dy, dy));
  VectorXd Sinv_v = Sinv * innov;
  MatrixXd K = pred_cov * m.G.transpose() * Sinv;

  VectorXd grad(dtheta);
  std::vector<VectorXd> new_dmean(dtheta);
  std::vector<MatrixXd> new_dcov(dtheta);
  MatrixXd I_KG = MatrixXd::Identity(dx, dx) - K * m.G;
  for (int j = 0; j < dtheta; ++j) {
    theta_basis(theta, j, dF, dG);
    VectorXd dv = -(dG * pred_mean) - m.G * dpm[j];
    MatrixXd b = dG * pred_cov * m.G.transpose();
    MatrixXd dS = b + m.G * dpc[j] * m.G.transpose() + b.transpose();
    // l_inc = -0.5 (log det S + v' Sinv v + const), so
    // dl = -0.5 tr(Sinv dS) - dv' Sinv v + 0.5 v' Sinv dS Sinv v
    grad[j] = -0.5 * (Sinv * dS).trace() - dv.dot(Sinv_v) +
              0.5 * Sinv_v.dot(dS * Sinv_v);

    MatrixXd dK = (dpc[j] * m.G.transpose() + pred_cov * dG.transpose() - K * dS) * Sinv;
    new_dmean[j] = dpm[j] + dK * innov + K * dv;
    new_dcov[j] = -(dK * m.G + K * dG) * pred_cov + I_KG * dpc[j];
  }

  state.kf = kf_update(theta, pred_mean, pred_cov, y, state.kf.loglik);
  state.dmean = std::move(new_dmean);
  state.dcov = std::move(new_dcov);
  return grad;
}

VectorXd rmle_exact_step(model::ModelTheta& theta, TangentState& state, const VectorXd& y,
                         double eta, bool first) {
  VectorXd grad = rmle_tangent_step(theta, state, y, first);
  if (eta != 0.0) theta.set_theta_flat(theta.theta_flat() + eta * grad);
  return grad;
}

}  // namespace ovf::baseline
