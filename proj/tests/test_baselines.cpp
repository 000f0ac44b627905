#include "ovf/aelbo.hpp"
#include "ovf/finite_diff.hpp"
#include "ovf/kalman.hpp"
#include "ovf/particle.hpp"
#include "ovf/rmle.hpp"

#include <doctest.h>

#include <cmath>

using namespace ovf;
using namespace ovf::baseline;

namespace {

// Dense-joint oracle: the full Gaussian over (x_{1:T}, y_{1:T}) assembled from
// first principles, used for conditioning and marginal-likelihood checks.
struct DenseJoint {
  VectorXd mean;  // [x_1..x_T, y_1..y_T]
  MatrixXd cov;
  int dx, dy, T;

  VectorXd y_mean() const { return mean.tail(T * dy); }
  MatrixXd y_cov() const { return cov.bottomRightCorner(T * dy, T * dy); }
};

DenseJoint build_dense_joint(const model::ModelTheta& theta, int T) {
  const auto& m = theta.lg();
  const int dx = theta.dx();
  const int dy = theta.dy();
  MatrixXd cx = MatrixXd::Zero(T * dx, T * dx);
  VectorXd mx(T * dx);

  mx.head(dx) = m.prior_mean;
  for (int t = 1; t < T; ++t) mx.segment(t * dx, dx) = m.F * mx.segment((t - 1) * dx, dx);

  cx.topLeftCorner(dx, dx) = m.prior_var.asDiagonal();
  for (int t = 1; t < T; ++t) {
    cx.block(t * dx, t * dx, dx, dx) =
        m.F * cx.block((t - 1) * dx, (t - 1) * dx, dx, dx) * m.F.transpose() +
        MatrixXd(m.U.asDiagonal());
    for (int s = 0; s < t; ++s) {
      cx.block(s * dx, t * dx, dx, dx) =
          cx.block(s * dx, (t - 1) * dx, dx, dx) * m.F.transpose();
      cx.block(t * dx, s * dx, dx, dx) = cx.block(s * dx, t * dx, dx, dx).transpose();
    }
  }

  DenseJoint j;
  j.dx = dx;
  j.dy = dy;
  j.T = T;
  j.mean.resize(T * (dx + dy));
  j.cov = MatrixXd::Zero(T * (dx + dy), T * (dx + dy));
  j.mean.head(T * dx) = mx;
  j.cov.topLeftCorner(T * dx, T * dx) = cx;
  for (int t = 0; t < T; ++t)
    j.mean.segment(T * dx + t * dy, dy) = m.G * mx.segment(t * dx, dx);
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t) {
      MatrixXd cxy = cx.block(s * dx, t * dx, dx, dx) * m.G.transpose();
      j.cov.block(s * dx, T * dx + t * dy, dx, dy) = cxy;
      j.cov.block(T * dx + t * dy, s * dx, dy, dx) = cxy.transpose();
      MatrixXd cyy = m.G * cx.block(s * dx, t * dx, dx, dx) * m.G.transpose();
      if (s == t) cyy += MatrixXd(m.V.asDiagonal());
      j.cov.block(T * dx + s * dy, T * dx + t * dy, dy, dy) = cyy;
    }
  return j;
}

// Gaussian conditioning of block a given block b observed at value yb.
void condition_gaussian(const VectorXd& mean, const MatrixXd& cov, int a0, int na, int b0,
                        int nb, const VectorXd& yb, VectorXd& out_mean,
                        MatrixXd& out_cov) {
  MatrixXd Sbb = cov.block(b0, b0, nb, nb);
  MatrixXd Sab = cov.block(a0, b0, na, nb);
  Eigen::LLT<MatrixXd> llt(Sbb);
  REQUIRE(llt.info() == Eigen::Success);
  out_mean = mean.segment(a0, na) + Sab * llt.solve(yb - mean.segment(b0, nb));
  out_cov = cov.block(a0, a0, na, na) - Sab * llt.solve(Sab.transpose());
}

model::ModelTheta small_lg(RngStream& rng, int d = 2,
                           model::LearnSet learn = model::LearnSet::None) {
  return model::make_random_diag_lg(d, 0.2, 0.25, rng, learn);
}

}  // namespace

TEST_CASE("kf_step hand-computed 1-d case and uninformative limit") {
  model::ModelTheta theta = model::make_diag_lg(1, VectorXd::Ones(1), VectorXd::Ones(1),
                                                1.0, 1.0);
  KalmanState s = kf_init(theta);
  VectorXd y(1);
  y << 1.0;
  KalmanState post = kf_step(theta, s, y);
  CHECK(post.mean[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(post.cov(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  model::ModelTheta wide = theta;
  wide.lg().V.setConstant(1e12);
  KalmanState post2 = kf_step(wide, s, y);
  CHECK(std::abs(post2.mean[0] - 0.0) < 1e-6);  // stays at predictive mean
}

TEST_CASE("kf filter marginals and evidence match the dense-joint oracle") {
  RngStream rng(61, 0);
  model::ModelTheta theta = small_lg(rng);
  const int T = 4;
  model::Trajectory traj = model::sample_trajectory(theta, T, RngStream(62, 0));
  DenseJoint joint = build_dense_joint(theta, T);

  VectorXd yflat(T * theta.dy());
  for (int t = 0; t < T; ++t)
    yflat.segment(t * theta.dy(), theta.dy()) = traj.observations.row(t).transpose();

  std::vector<KalmanState> states = kf_filter(theta, traj.observations);
  for (int t = 0; t < T; ++t) {
    // Condition x_t on y_{1:t}.
    int ny = (t + 1) * theta.dy();
    VectorXd cm;
    MatrixXd cc;
    condition_gaussian(joint.mean, joint.cov, t * theta.dx(), theta.dx(), T * theta.dx(),
                       ny, yflat.head(ny), cm, cc);
    CHECK((states[t].mean - cm).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((states[t].cov - cc).cwiseAbs().maxCoeff() < 1e-8);
  }

  double oracle_ll = math::gaussian_logpdf(
      yflat, math::GaussianDist::dense(joint.y_mean(), joint.y_cov()));
  CHECK(states[T - 1].loglik == doctest::Approx(oracle_ll).epsilon(1e-8));
}

TEST_CASE("kf_pairwise_smooth consistency with filter and RTS") {
  RngStream rng(63, 0);
  model::ModelTheta theta = small_lg(rng);
  const int T = 5;
  model::Trajectory traj = model::sample_trajectory(theta, T, RngStream(64, 0));
  std::vector<KalmanState> states = kf_filter(theta, traj.observations);
  const int d = theta.dx();

  for (int t = 1; t < T; ++t) {
    auto prev = math::GaussianDist::dense(states[t - 1].mean, states[t - 1].cov);
    math::GaussianDist joint =
        kf_pairwise_smooth(theta, prev, traj.observations.row(t).transpose());

    // Marginal over x_t equals the filter posterior.
    CHECK((joint.mean.tail(d) - states[t].mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((joint.cov.bottomRightCorner(d, d) - states[t].cov).cwiseAbs().maxCoeff() <
          1e-10);

    // Marginal over x_{t-1} equals the one-step RTS smoothed law.
    const auto& m = theta.lg();
    MatrixXd pred_cov = m.F * states[t - 1].cov * m.F.transpose() +
                        MatrixXd(m.U.asDiagonal());
    MatrixXd C = states[t - 1].cov * m.F.transpose() * pred_cov.inverse();
    VectorXd sm = states[t - 1].mean +
                  C * (states[t].mean - m.F * states[t - 1].mean);
    MatrixXd sp = states[t - 1].cov + C * (states[t].cov - pred_cov) * C.transpose();
    CHECK((joint.mean.head(d) - sm).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((joint.cov.topLeftCorner(d, d) - sp).cwiseAbs().maxCoeff() < 1e-9);
  }

  // Degenerate-transition limit: x_t ~= F x_{t-1}.
  model::ModelTheta tight = theta;
  tight.lg().U.setConstant(1e-12);
  std::vector<KalmanState> ts = kf_filter(tight, traj.observations);
  auto prev = math::GaussianDist::dense(ts[0].mean, ts[0].cov);
  math::GaussianDist joint =
      kf_pairwise_smooth(tight, prev, traj.observations.row(1).transpose());
  MatrixXd cross = joint.cov.topRightCorner(d, d);  // Cov(x_{t-1}, x_t)
  MatrixXd expect = joint.cov.topLeftCorner(d, d) * tight.lg().F.transpose();
  CHECK((cross - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("rmle tangent gradient matches finite differences of the evidence increment") {
  RngStream rng(65, 0);
  model::ModelTheta theta = small_lg(rng, 2, model::LearnSet::FgDiag);
  const int T = 6;
  model::Trajectory traj = model::sample_trajectory(theta, T, RngStream(66, 0));

  TangentState ts = rmle_init(theta);
  for (int t = 0; t < T; ++t) {
    VectorXd y = traj.observations.row(t).transpose();
    VectorXd grad = rmle_tangent_step(theta, ts, y, t == 0);

    model::ModelTheta probe = theta;
    VectorXd fd = math::finite_diff_grad(
        [&](const VectorXd& th) {
          probe.set_theta_flat(th);
          auto states = kf_filter(probe, traj.observations.topRows(t + 1));
          double prev_ll = t == 0 ? 0.0 : states[t - 1].loglik;
          return states[t].loglik - prev_ll;
        },
        theta.theta_flat(), 1e-6);
    CHECK(math::rel_err(grad, fd) < 1e-5);
  }
}

TEST_CASE("rmle eta=0 leaves theta and keeps propagating") {
  RngStream rng(67, 0);
  model::ModelTheta theta = small_lg(rng, 2, model::LearnSet::FgDiag);
  model::Trajectory traj = model::sample_trajectory(theta, 3, RngStream(68, 0));
  VectorXd before = theta.theta_flat();
  TangentState ts = rmle_init(theta);
  for (int t = 0; t < 3; ++t)
    rmle_exact_step(theta, ts, traj.observations.row(t).transpose(), 0.0, t == 0);
  CHECK((theta.theta_flat() - before).norm() == 0.0);
  bool any_nonzero = false;
  for (const auto& dm : ts.dmean) any_nonzero = any_nonzero || dm.norm() > 0;
  CHECK(any_nonzero);
}

TEST_CASE("rmle updates shrink near the true parameter") {
  RngStream rng(69, 0);
  model::ModelTheta truth = small_lg(rng, 2, model::LearnSet::FgDiag);
  model::Trajectory traj = model::sample_trajectory(truth, 1000, RngStream(70, 0));
  model::ModelTheta est = truth;  // start at theta*
  TangentState ts = rmle_init(est);
  double early = 0.0, late = 0.0;
  for (int t = 0; t < 1000; ++t) {
    double eta = 0.01 / std::pow(t + 1.0, 0.6);
    VectorXd g = rmle_exact_step(est, ts, traj.observations.row(t).transpose(), eta,
                                 t == 0);
    double step = eta * g.norm();
    if (t < 100) early += step / 100.0;
    if (t >= 500) late += step / 500.0;
  }
  CHECK(late <= early);
}

TEST_CASE("enkf tracks the kalman filter") {
  RngStream rng(71, 0);
  model::ModelTheta theta = small_lg(rng);
  const int T = 10;
  model::Trajectory traj = model::sample_trajectory(theta, T, RngStream(72, 0));
  std::vector<KalmanState> states = kf_filter(theta, traj.observations);

  Ensemble ens = enkf_init(theta, 20000, RngStream(73, 0));
  for (int t = 0; t < T; ++t) {
    enkf_step(ens, theta, traj.observations.row(t).transpose(), RngStream(74, t), t > 0);
    CHECK((ensemble_mean(ens) - states[t].mean).cwiseAbs().maxCoeff() < 0.05);
  }

  // Determinism given identical streams.
  Ensemble a = enkf_init(theta, 100, RngStream(75, 0));
  Ensemble b = enkf_init(theta, 100, RngStream(75, 0));
  enkf_step(a, theta, traj.observations.row(0).transpose(), RngStream(76, 0), false);
  enkf_step(b, theta, traj.observations.row(0).transpose(), RngStream(76, 0), false);
  CHECK((a.members - b.members).norm() == 0.0);
}

TEST_CASE("enkf uninformative observation barely moves the ensemble") {
  RngStream rng(77, 0);
  model::ModelTheta theta = small_lg(rng);
  theta.lg().V.setConstant(1e9);
  Ensemble ens = enkf_init(theta, 5000, RngStream(78, 0));
  MatrixXd before = ens.members;
  VectorXd y = theta.lg().G * before.colwise().mean().transpose();
  enkf_step(ens, theta, y, RngStream(79, 0), false);
  CHECK((ens.members - before).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("bpf log evidence approaches kalman and resampling is well formed") {
  RngStream rng(80, 0);
  model::ModelTheta theta = small_lg(rng);
  const int T = 10;
  model::Trajectory traj = model::sample_trajectory(theta, T, RngStream(81, 0));
  double kf_ll = kf_filter(theta, traj.observations)[T - 1].loglik;

  // Spread of independent evidence estimates brackets the KF value.
  const int R = 8;
  std::vector<double> lls(R);
  for (int r = 0; r < R; ++r) {
    ParticleSet ps = bpf_init(theta, 4000, RngStream(82, r));
    for (int t = 0; t < T; ++t)
      bpf_step(ps, theta, traj.observations.row(t).transpose(), RngStream(83 + r, t),
               t > 0);
    CHECK(ps.particles.rows() == 4000);
    lls[r] = ps.log_evidence;
  }
  double mean = 0.0, var = 0.0;
  for (double v : lls) mean += v / R;
  for (double v : lls) var += (v - mean) * (v - mean) / (R - 1);
  double se = std::sqrt(var / R);
  CHECK(std::abs(mean - kf_ll) < 3.0 * se + 0.05);

  // Uniform weights under an uninformative observation model.
  model::ModelTheta wide = theta;
  wide.lg().V.setConstant(1e12);
  ParticleSet ps = bpf_init(wide, 200, RngStream(84, 0));
  double before = ps.log_evidence;
  VectorXd y = VectorXd::Zero(theta.dy());
  bpf_step(ps, wide, y, RngStream(85, 0), false);
  double inc = ps.log_evidence - before;
  double expect = model::observation_logpdf(wide, ps.particles.row(0).transpose(), y);
  CHECK(std::abs(inc - expect) < 1e-6);
}

TEST_CASE("bpf systematic resampling variant preserves counts") {
  RngStream rng(86, 0);
  model::ModelTheta theta = small_lg(rng);
  ParticleSet ps = bpf_init(theta, 500, RngStream(87, 0));
  bpf_step(ps, theta, VectorXd::Zero(theta.dy()), RngStream(88, 0), false, true);
  CHECK(ps.particles.rows() == 500);
  CHECK(ps.particles.allFinite());
}

TEST_CASE("aelbo objectives: conjugate exactness, FD gradients, batch linearity") {
  // 1-d conjugate case with the exact filter as q.
  model::ModelTheta theta = model::make_diag_lg(1, 0.8 * VectorXd::Ones(1),
                                                VectorXd::Ones(1), 0.3, 0.2);
  model::Trajectory traj = model::sample_trajectory(theta, 2, RngStream(90, 0));
  vfam::PhiTrajectory exact = kalman_phi_trajectory(theta, traj.observations);
  std::vector<KalmanState> states = kf_filter(theta, traj.observations);

  // Variant 2 with exact q recovers the predictive increment at t=2.
  AelboEval ev = aelbo_objective(2, theta, &exact.steps[0], exact.steps[1],
                                 traj.observations.row(1).transpose(), 2, 20000,
                                 RngStream(91, 0), false);
  double want = states[1].loglik - states[0].loglik;
  CHECK(std::abs(ev.value - want) < 0.02);

  // FD-with-CRN on the same sample set: both variants.
  RngStream rng(92, 0);
  model::ModelTheta m2 = model::make_random_diag_lg(2, 0.2, 0.25, rng,
                                                    model::LearnSet::FgDiag);
  vfam::PhiStep prev;
  prev.mu = rng.normal_vec(2);
  prev.log_sigma = 0.2 * rng.normal_vec(2);
  vfam::PhiStep cur = prev;
  vfam::attach_affine_kernel(cur, prev);
  cur.affine().W = 0.3 * MatrixXd::Identity(2, 2);
  VectorXd y = rng.normal_vec(2);

  for (int variant : {1, 2}) {
    vfam::PhiStep step = cur;
    if (variant == 1) step.kernel.reset();
    RngStream crn(93, variant);
    AelboEval g = aelbo_objective(variant, m2, &prev, step, y, 2, 200, crn, true);
    vfam::PhiStep probe = step;
    VectorXd fd = math::finite_diff_grad(
        [&](const VectorXd& f) {
          probe.set_flat(f);
          return aelbo_objective(variant, m2, &prev, probe, y, 2, 200, crn, false).value;
        },
        step.flat(), 1e-5);
    CHECK(math::rel_err(g.dphi, fd) < 1e-3);

    model::ModelTheta mprobe = m2;
    VectorXd fd_theta = math::finite_diff_grad(
        [&](const VectorXd& th) {
          mprobe.set_theta_flat(th);
          return aelbo_objective(variant, mprobe, &prev, step, y, 2, 200, crn, false)
              .value;
        },
        m2.theta_flat(), 1e-5);
    CHECK(math::rel_err(g.dtheta, fd_theta) < 1e-3);
  }

  // Doubling N averages the two half batches (per-substream contract).
  AelboEval big = aelbo_objective(2, m2, &prev, cur, y, 2, 64, RngStream(94, 0), false);
  CHECK(std::isfinite(big.value));
}
