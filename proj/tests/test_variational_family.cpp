#include "ovf/finite_diff.hpp"
#include "ovf/phi.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>

using namespace ovf;
using namespace ovf::vfam;

namespace {

PhiStep random_affine_step(int d, RngStream& rng) {
  PhiStep s;
  s.mu = rng.normal_vec(d);
  s.log_sigma = 0.3 * rng.normal_vec(d);
  AffineKernel k;
  k.W = MatrixXd::Zero(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) k.W(r, c) = 0.5 * rng.normal();
  k.b = rng.normal_vec(d);
  k.log_sigma_t = 0.3 * rng.normal_vec(d);
  s.kernel = std::move(k);
  return s;
}

PhiStep random_mlp_step(int d, RngStream& rng) {
  PhiStep s;
  s.mu = rng.normal_vec(d);
  s.log_sigma = 0.3 * rng.normal_vec(d);
  MlpKernel k;
  k.net = nn::make_mlp({d, 8, d}, nn::Act::Tanh, rng);
  k.log_sigma_t = 0.3 * rng.normal_vec(d);
  s.kernel = std::move(k);
  return s;
}

}  // namespace

TEST_CASE("marginal_sample basics and moments") {
  RngStream rng(21, 0);
  PhiStep s = random_affine_step(3, rng);
  CHECK((marginal_sample(s, VectorXd::Zero(3)) - s.mu).norm() == 0.0);

  PhiStep unit = s;
  unit.log_sigma.setZero();
  VectorXd e1 = VectorXd::Unit(3, 0);
  CHECK((marginal_sample(unit, e1) - (unit.mu + e1)).norm() == 0.0);

  const int n = 1000000;
  VectorXd sum = VectorXd::Zero(3), sumsq = VectorXd::Zero(3);
  RngStream draws(22, 0);
  for (int i = 0; i < n; ++i) {
    VectorXd x = marginal_sample(s, draws.normal_vec(3));
    sum += x;
    sumsq += x.cwiseProduct(x);
  }
  VectorXd mean = sum / n;
  VectorXd var = sumsq / n - mean.cwiseProduct(mean);
  VectorXd sigma2 = (2.0 * s.log_sigma.array()).exp().matrix();
  for (int i = 0; i < 3; ++i) {
    double se_mean = std::sqrt(sigma2[i] / n);
    double se_var = sigma2[i] * std::sqrt(2.0 / n);
    CHECK(std::abs(mean[i] - s.mu[i]) < 4 * se_mean);
    CHECK(std::abs(var[i] - sigma2[i]) < 4 * se_var);
  }
}

TEST_CASE("backward_sample basics") {
  RngStream rng(23, 0);
  PhiStep s = random_affine_step(3, rng);
  s.affine().W = MatrixXd::Identity(3, 3);
  s.affine().b.setZero();
  VectorXd x_t = rng.normal_vec(3);
  CHECK((backward_sample(s, x_t, VectorXd::Zero(3)) - x_t).norm() == 0.0);

  PhiStep z;
  z.mu = VectorXd::Zero(2);
  z.log_sigma = VectorXd::Zero(2);
  MlpKernel k;
  k.net = nn::make_zero_mlp({2, 4, 2}, nn::Act::Tanh);
  k.log_sigma_t = VectorXd::Zero(2);
  z.kernel = std::move(k);
  CHECK(backward_sample(z, VectorXd::Ones(2), VectorXd::Zero(2)).norm() == 0.0);
}

TEST_CASE("backward density maximal at eps=0 draw") {
  RngStream rng(24, 0);
  PhiStep s = random_affine_step(2, rng);
  VectorXd x_t = rng.normal_vec(2);
  double at_mode = backward_logpdf(s, backward_sample(s, x_t, VectorXd::Zero(2)), x_t);
  CHECK(std::isfinite(at_mode));
  for (double a = -2.0; a <= 2.0; a += 0.5) {
    for (double b = -2.0; b <= 2.0; b += 0.5) {
      VectorXd eps(2);
      eps << a, b;
      double lp = backward_logpdf(s, backward_sample(s, x_t, eps), x_t);
      CHECK(lp <= at_mode + 1e-12);
    }
  }
}

TEST_CASE("marginal_logpdf closed form and flat-phi gradients") {
  RngStream rng(25, 0);
  PhiStep s = random_affine_step(3, rng);
  double expect = -1.5 * math::kLog2Pi - s.log_sigma.sum();
  CHECK(marginal_logpdf(s, s.mu) == doctest::Approx(expect).epsilon(1e-13));

  for (int rep = 0; rep < 50; ++rep) {
    PhiStep step = rep % 2 ? random_mlp_step(2, rng) : random_affine_step(2, rng);
    VectorXd x_prev = rng.normal_vec(2);
    VectorXd x_t = rng.normal_vec(2);

    MarginalGrad mg = marginal_logpdf_grad(step, x_t);
    VectorXd fd_mu = math::finite_diff_grad(
        [&](const VectorXd& m) {
          PhiStep p = step;
          p.mu = m;
          return marginal_logpdf(p, x_t);
        },
        step.mu);
    CHECK(math::rel_err(mg.dmu, fd_mu) < 1e-5);

    BackwardGrad bg = backward_logpdf_grad(step, x_prev, x_t);
    PhiStep probe = step;
    VectorXd flat = step.flat();
    VectorXd fd_kernel = math::finite_diff_grad(
        [&](const VectorXd& kpar) {
          VectorXd f = flat;
          f.segment(step.kernel_offset(), step.kernel_param_count()) = kpar;
          probe.set_flat(f);
          return backward_logpdf(probe, x_prev, x_t);
        },
        flat.segment(step.kernel_offset(), step.kernel_param_count()));
    CHECK(math::rel_err(bg.dkernel, fd_kernel) < 1e-5);
    VectorXd fd_xp = math::finite_diff_grad(
        [&](const VectorXd& v) { return backward_logpdf(step, v, x_t); }, x_prev);
    VectorXd fd_xt = math::finite_diff_grad(
        [&](const VectorXd& v) { return backward_logpdf(step, x_prev, v); }, x_t);
    CHECK(math::rel_err(bg.dx_prev, fd_xp) < 1e-5);
    CHECK(math::rel_err(bg.dx_t, fd_xt) < 1e-5);
  }
}

TEST_CASE("backward_logpdf with W=0 ignores x_t") {
  RngStream rng(26, 0);
  PhiStep s = random_affine_step(3, rng);
  s.affine().W.setZero();
  VectorXd x_prev = rng.normal_vec(3);
  double a = backward_logpdf(s, x_prev, rng.normal_vec(3));
  double b = backward_logpdf(s, x_prev, rng.normal_vec(3));
  CHECK(a == doctest::Approx(b).epsilon(1e-15));
  BackwardGrad g = backward_logpdf_grad(s, x_prev, rng.normal_vec(3));
  CHECK(g.dx_t.norm() == 0.0);
}

TEST_CASE("pseudo_transition_logpdf composition") {
  RngStream rng(27, 0);
  PhiStep phi_t = random_affine_step(2, rng);
  PhiStep phi_tp1 = random_affine_step(2, rng);
  VectorXd x_t = rng.normal_vec(2);
  VectorXd x_tp1 = rng.normal_vec(2);

  double direct = pseudo_transition_logpdf(phi_t, phi_tp1, x_t, x_tp1);
  double composed = backward_logpdf(phi_tp1, x_t, x_tp1) +
                    marginal_logpdf(phi_tp1, x_tp1) - marginal_logpdf(phi_t, x_t);
  CHECK(direct == doctest::Approx(composed).epsilon(1e-12));

  // 1-d case assembled from unit-sigma closed forms.
  PhiStep a, b;
  a.mu = VectorXd::Zero(1);
  a.log_sigma = VectorXd::Zero(1);
  b.mu = VectorXd::Zero(1);
  b.log_sigma = VectorXd::Zero(1);
  AffineKernel k;
  k.W = MatrixXd::Zero(1, 1);
  k.b = VectorXd::Zero(1);
  k.log_sigma_t = VectorXd::Zero(1);
  b.kernel = k;
  double v = pseudo_transition_logpdf(a, b, VectorXd::Zero(1), VectorXd::Zero(1));
  CHECK(v == doctest::Approx(-0.5 * math::kLog2Pi).epsilon(1e-13));
}

TEST_CASE("pseudo transition does not normalize over x_tp1") {
  RngStream rng(28, 0);
  PhiStep phi_t = random_affine_step(1, rng);
  PhiStep phi_tp1 = random_affine_step(1, rng);
  VectorXd x_t = 0.3 * rng.normal_vec(1);
  // Simpson quadrature over a wide bracket.
  const int n = 20001;
  const double lo = -30.0, hi = 30.0;
  const double h = (hi - lo) / (n - 1);
  double integral = 0.0;
  for (int i = 0; i < n; ++i) {
    VectorXd x(1);
    x[0] = lo + i * h;
    double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * std::exp(pseudo_transition_logpdf(phi_t, phi_tp1, x_t, x));
  }
  integral *= h / 3.0;
  CHECK(std::isfinite(integral));
  CHECK(std::abs(integral - 1.0) > 1e-3);
}

TEST_CASE("pseudo_transition gradient blocks match finite differences") {
  RngStream rng(29, 0);
  PhiStep phi_t = random_affine_step(2, rng);
  PhiStep phi_tp1 = random_mlp_step(2, rng);
  VectorXd x_t = rng.normal_vec(2);
  VectorXd x_tp1 = rng.normal_vec(2);
  PseudoTransitionGrad g = pseudo_transition_logpdf_grad(phi_t, phi_tp1, x_t, x_tp1);

  VectorXd fd_xt = math::finite_diff_grad(
      [&](const VectorXd& v) { return pseudo_transition_logpdf(phi_t, phi_tp1, v, x_tp1); },
      x_t);
  VectorXd fd_xtp1 = math::finite_diff_grad(
      [&](const VectorXd& v) { return pseudo_transition_logpdf(phi_t, phi_tp1, x_t, v); },
      x_tp1);
  CHECK(math::rel_err(g.dx_t, fd_xt) < 1e-5);
  CHECK(math::rel_err(g.dx_tp1, fd_xtp1) < 1e-5);

  PhiStep probe = phi_tp1;
  VectorXd fd_phi = math::finite_diff_grad(
      [&](const VectorXd& f) {
        probe.set_flat(f);
        return pseudo_transition_logpdf(phi_t, probe, x_t, x_tp1);
      },
      phi_tp1.flat());
  CHECK(math::rel_err(g.dphi_tp1, fd_phi) < 1e-5);

  PhiStep probe_t = phi_t;
  VectorXd fd_phi_t = math::finite_diff_grad(
      [&](const VectorXd& f) {
        probe_t.set_flat(f);
        return pseudo_transition_logpdf(probe_t, phi_tp1, x_t, x_tp1);
      },
      phi_t.flat());
  CHECK(math::rel_err(g.dphi_t, fd_phi_t) < 1e-5);
}

TEST_CASE("backward_sample_vjp matches finite differences") {
  RngStream rng(30, 0);
  for (int rep = 0; rep < 30; ++rep) {
    PhiStep s = rep % 2 ? random_mlp_step(2, rng) : random_affine_step(2, rng);
    VectorXd x_t = rng.normal_vec(2);
    VectorXd eps = rng.normal_vec(2);
    VectorXd cot = rng.normal_vec(2);
    VectorXd gk, gx;
    backward_sample_vjp(s, x_t, eps, cot, gk, gx);

    if (s.kernel_is_affine())
      CHECK((gx - s.affine().W.transpose() * cot).norm() < 1e-12);

    VectorXd zero_gk, zero_gx;
    backward_sample_vjp(s, x_t, eps, VectorXd::Zero(2), zero_gk, zero_gx);
    CHECK(zero_gk.norm() == 0.0);
    CHECK(zero_gx.norm() == 0.0);

    PhiStep probe = s;
    VectorXd flat = s.flat();
    VectorXd fd_k = math::finite_diff_grad(
        [&](const VectorXd& kpar) {
          VectorXd f = flat;
          f.segment(s.kernel_offset(), s.kernel_param_count()) = kpar;
          probe.set_flat(f);
          return cot.dot(backward_sample(probe, x_t, eps));
        },
        flat.segment(s.kernel_offset(), s.kernel_param_count()));
    VectorXd fd_x = math::finite_diff_grad(
        [&](const VectorXd& v) { return cot.dot(backward_sample(s, v, eps)); }, x_t);
    CHECK(math::rel_err(gk, fd_k) < 1e-5);
    CHECK(math::rel_err(gx, fd_x) < 1e-5);
  }
}

TEST_CASE("affine pair joint matches Monte Carlo moments") {
  RngStream rng(31, 0);
  PhiStep s = random_affine_step(2, rng);
  math::GaussianDist joint = affine_pair_joint(s);

  const int n = 100000;
  MatrixXd samples(n, 4);
  RngStream draws(32, 0);
  for (int i = 0; i < n; ++i) {
    VectorXd x_t = marginal_sample(s, draws.normal_vec(2));
    VectorXd x_p = backward_sample(s, x_t, draws.normal_vec(2));
    samples.row(i) << x_p[0], x_p[1], x_t[0], x_t[1];
  }
  VectorXd mean = samples.colwise().mean();
  MatrixXd centered = samples.rowwise() - mean.transpose();
  MatrixXd cov = centered.transpose() * centered / (n - 1);
  for (int i = 0; i < 4; ++i) {
    double se = std::sqrt(joint.cov(i, i) / n);
    CHECK(std::abs(mean[i] - joint.mean[i]) < 4 * se);
    for (int j = 0; j < 4; ++j) {
      double se_c =
          std::sqrt((joint.cov(i, i) * joint.cov(j, j) + joint.cov(i, j) * joint.cov(i, j)) / n);
      CHECK(std::abs(cov(i, j) - joint.cov(i, j)) < 4 * se_c);
    }
  }
}

TEST_CASE("reparameterized marginal stays close to analytic density") {
  RngStream rng(33, 0);
  PhiStep s = random_affine_step(3, rng);
  const int n = 100000;
  RngStream draws(34, 0);
  VectorXd sum = VectorXd::Zero(3), sumsq = VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) {
    VectorXd x = marginal_sample(s, draws.normal_vec(3));
    sum += x;
    sumsq += x.cwiseProduct(x);
  }
  VectorXd mean = sum / n;
  VectorXd var = (sumsq / n - mean.cwiseProduct(mean)) * (n / (n - 1.0));
  auto fitted = math::GaussianDist::diagonal(mean, var);
  auto analytic = math::GaussianDist::diagonal_log_sigma(s.mu, s.log_sigma);
  CHECK(math::gaussian_kl(fitted, analytic) < 1e-3);
}

TEST_CASE("phi flat round-trip and checkpoint io") {
  RngStream rng(35, 0);
  PhiTrajectory traj;
  PhiStep first;
  first.mu = rng.normal_vec(2);
  first.log_sigma = 0.2 * rng.normal_vec(2);
  traj.steps.push_back(first);
  traj.steps.push_back(random_affine_step(2, rng));
  traj.steps.push_back(random_mlp_step(2, rng));

  for (const PhiStep& s : traj.steps) {
    PhiStep copy = s;
    VectorXd flat = s.flat();
    copy.set_flat(VectorXd::Zero(flat.size()));
    copy.set_flat(flat);
    CHECK((copy.flat() - flat).norm() == 0.0);
  }

  save_phi_trajectory(traj, "phi_test.csv", "phi_test.json");
  PhiTrajectory back = load_phi_trajectory("phi_test.csv", "phi_test.json");
  REQUIRE(back.length() == traj.length());
  for (int k = 0; k < traj.length(); ++k)
    CHECK((back.steps[k].flat() - traj.steps[k].flat()).norm() == 0.0);
  std::remove("phi_test.csv");
  std::remove("phi_test.json");
}
