#include "ovf/particle.hpp"

#include "ovf/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ovf::baseline {

namespace {

VectorXd prior_draw(const model::ModelTheta& theta, RngStream& rng) {
  const VectorXd& mean = theta.is_linear() ? theta.lg().prior_mean : theta.crnn().prior_mean;
  const VectorXd& var = theta.is_linear() ? theta.lg().prior_var : theta.crnn().prior_var;
  return mean + (var.array().sqrt() * rng.normal_vec(theta.dx()).array()).matrix();
}

VectorXd transition_draw(const model::ModelTheta& theta, const VectorXd& x,
                         RngStream& rng) {
  if (theta.is_linear()) {
    const auto& m = theta.lg();
    return m.F * x + (m.U.array().sqrt() * rng.normal_vec(theta.dx()).array()).matrix();
  }
  const auto& m = theta.crnn();
  return model::crnn_drift(theta, x) +
         (m.U.array().sqrt() * rng.normal_vec(theta.dx()).array()).matrix();
}

// Observation matrix and an effective Gaussian observation covariance for the
// gain computation (Student-t noise enters through its variance).
void obs_model(const model::ModelTheta& theta, MatrixXd& H, VectorXd& r_diag) {
  if (theta.is_linear()) {
    H = theta.lg().G;
    r_diag = theta.lg().V;
  } else {
    const auto& m = theta.crnn();
    H = m.C;
    double var = m.t_dof > 2.0 ? m.t_scale * m.t_scale * m.t_dof / (m.t_dof - 2.0)
                               : 3.0 * m.t_scale * m.t_scale;
    r_diag = VectorXd::Constant(theta.dy(), var);
  }
}

}  // namespace

Ensemble enkf_init(const model::ModelTheta& theta, int N, RngStream rng) {
  require(N >= 2, "enkf_init: need at least two members");
  Ensemble ens;
  ens.members.resize(N, theta.dx());
  for (int i = 0; i < N; ++i) {
    RngStream sub = rng.substream(i);
    ens.members.row(i) = prior_draw(theta, sub).transpose();
  }
  return ens;
}

void enkf_step(Ensemble& ens, const model::ModelTheta& theta, const VectorXd& y,
               RngStream rng, bool propagate) {
  const int N = static_cast<int>(ens.members.rows());
  require(N >= 2, "enkf_step: need at least two members");
  const int dy = theta.dy();

  if (propagate) {
    RngStream prop = rng.substream(0);
    std::vector<VectorXd> rows(N);
    parallel_for(N, [&](int i) {
      RngStream sub = prop.substream(i);
      rows[i] = transition_draw(theta, ens.members.row(i).transpose(), sub);
    });
    for (int i = 0; i < N; ++i) ens.members.row(i) = rows[i].transpose();
  }

  MatrixXd H;
  VectorXd r_diag;
  obs_model(theta, H, r_diag);

  Eigen::RowVectorXd xbar = ens.members.colwise().mean();
  MatrixXd A = ens.members.rowwise() - xbar;          // N x dx
  MatrixXd Yp = ens.members * H.transpose();          // N x dy
  Eigen::RowVectorXd ybar = Yp.colwise().mean();
  MatrixXd By = Yp.rowwise() - ybar;                  // N x dy

  MatrixXd Pxy = A.transpose() * By / (N - 1);
  MatrixXd Pyy = By.transpose() * By / (N - 1) + MatrixXd(r_diag.asDiagonal());
  Eigen::LLT<MatrixXd> llt(Pyy);
  if (llt.info() != Eigen::Success) {
    Pyy.diagonal().array() += 1e-8;
    llt.compute(Pyy);
    ens.ridge_repaired = true;
    if (llt.info() != Eigen::Success)
      throw NumericalError("enkf_step: observation covariance not repairable");
  }
  MatrixXd K = Pxy * llt.solve(MatrixXd::Identity(dy, dy));

  RngStream pert = rng.substream(1);
  std::vector<VectorXd> rows(N);
  parallel_for(N, [&](int i) {
    RngStream sub = pert.substream(i);
    VectorXd e = (r_diag.array().sqrt() * sub.normal_vec(dy).array()).matrix();
    VectorXd xi = ens.members.row(i).transpose();
    rows[i] = xi + K * (y + e - H * xi);
  });
  for (int i = 0; i < N; ++i) ens.members.row(i) = rows[i].transpose();
}

VectorXd ensemble_mean(const Ensemble& ens) {
  return ens.members.colwise().mean().transpose();
}

ParticleSet bpf_init(const model::ModelTheta& theta, int N, RngStream rng) {
  require(N >= 1, "bpf_init: need at least one particle");
  ParticleSet ps;
  ps.particles.resize(N, theta.dx());
  for (int i = 0; i < N; ++i) {
    RngStream sub = rng.substream(i);
    ps.particles.row(i) = prior_draw(theta, sub).transpose();
  }
  return ps;
}

void bpf_step(ParticleSet& ps, const model::ModelTheta& theta, const VectorXd& y,
              RngStream rng, bool propagate, bool systematic) {
  const int N = static_cast<int>(ps.particles.rows());

  if (propagate) {
    RngStream prop = rng.substream(0);
    std::vector<VectorXd> rows(N);
    parallel_for(N, [&](int i) {
      RngStream sub = prop.substream(i);
      rows[i] = transition_draw(theta, ps.particles.row(i).transpose(), sub);
    });
    for (int i = 0; i < N; ++i) ps.particles.row(i) = rows[i].transpose();
  }

  std::vector<double> logw(N);
  parallel_for(N, [&](int i) {
    logw[i] = model::observation_logpdf(theta, ps.particles.row(i).transpose(), y);
  });
  double mx = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(mx))
    throw NumericalError("bpf_step: all particle weights degenerate");
  double sum = 0.0;
  std::vector<double> w(N);
  for (int i = 0; i < N; ++i) {
    w[i] = std::exp(logw[i] - mx);
    sum += w[i];
  }
  ps.log_evidence += mx + std::log(sum / N);

  // Weight CDF for resampling.
  std::vector<double> cdf(N);
  double acc = 0.0;
  for (int i = 0; i < N; ++i) {
    acc += w[i] / sum;
    cdf[i] = acc;
  }
  cdf[N - 1] = 1.0;

  RngStream res = rng.substream(1);
  MatrixXd next(N, ps.particles.cols());
  if (systematic) {
    double u0 = res.uniform() / N;
    int idx = 0;
    for (int j = 0; j < N; ++j) {
      double u = u0 + static_cast<double>(j) / N;
      while (cdf[idx] < u) ++idx;
      next.row(j) = ps.particles.row(idx);
    }
  } else {
    for (int j = 0; j < N; ++j) {
      double u = res.uniform();
      int idx = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      next.row(j) = ps.particles.row(idx);
    }
  }
  ps.particles = std::move(next);
}

VectorXd particle_mean(const ParticleSet& ps) {
  return ps.particles.colwise().mean().transpose();
}

}  // namespace ovf::baseline
