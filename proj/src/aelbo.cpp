#include "ovf/aelbo.hpp"

#include <chrono>
#include <cmath>

namespace ovf::baseline {

namespace {

// Variant-1 sample: independent draws, no backward kernel on phi_t.
struct Aelbo1Sample {
  double value = 0.0;
  VectorXd grad_phi;  // [mu, log_sigma] blocks
  VectorXd dtheta;
};

Aelbo1Sample aelbo1_sample(const model::ModelTheta& model, const vfam::PhiStep* phi_prev,
                           const vfam::PhiStep& phi_t, const VectorXd& y_t, int t,
                           RngStream rng, bool want_theta) {
  const int d = phi_t.dim();
  Aelbo1Sample out;
  out.grad_phi = VectorXd::Zero(phi_t.flat_size());
  VectorXd eps_t = rng.normal_vec(d);
  VectorXd x_t = vfam::marginal_sample(phi_t, eps_t);
  vfam::MarginalGrad mg = vfam::marginal_logpdf_grad(phi_t, x_t);
  model::ObservationGrad og = model::observation_logpdf_grad(model, x_t, y_t);

  VectorXd cot_xt;
  if (t == 1) {
    model::PriorGrad pg = model::prior_logpdf_grad(model, x_t);
    out.value = pg.value + og.value - mg.value;
    cot_xt = pg.dx + og.dx - mg.dx;
    if (want_theta) out.dtheta = og.dtheta;
  } else {
    VectorXd x_prev = vfam::marginal_sample(*phi_prev, rng.normal_vec(d));
    model::TransitionGrad tg = model::transition_logpdf_grad(model, x_prev, x_t);
    out.value = tg.value + og.value - mg.value;
    cot_xt = tg.dx + og.dx - mg.dx;
    if (want_theta) out.dtheta = tg.dtheta + og.dtheta;
  }
  out.grad_phi.segment(0, d) = cot_xt - mg.dmu;
  out.grad_phi.segment(d, d) =
      (cot_xt.array() * phi_t.log_sigma.array().exp() * eps_t.array()).matrix() -
      mg.dlog_sigma;
  return out;
}

reg::GradApprox zero_T(int d) { return reg::GradApprox::zero(d); }

}  // namespace

AelboEval aelbo_objective(int variant, const model::ModelTheta& model,
                          const vfam::PhiStep* phi_prev, const vfam::PhiStep& phi_t,
                          const VectorXd& y_t, int t, int N, RngStream rng,
                          bool want_theta) {
  require(variant == 1 || variant == 2, "aelbo_objective: variant must be 1 or 2");
  require(N >= 1, "aelbo_objective: N must be >= 1");
  AelboEval out;
  out.dphi = VectorXd::Zero(phi_t.flat_size());
  if (want_theta) out.dtheta = VectorXd::Zero(model.theta_dim());

  if (variant == 1) {
    for (int i = 0; i < N; ++i) {
      Aelbo1Sample s =
          aelbo1_sample(model, phi_prev, phi_t, y_t, t, rng.substream(i), want_theta);
      out.value += s.value / N;
      out.dphi += s.grad_phi / N;
      if (want_theta) out.dtheta += s.dtheta / N;
    }
    return out;
  }

  // Variant 2 is the per-step reward objective without the accumulated
  // state-derivative feedback: reuse the engine estimator with a zero T.
  reg::GradApprox T0 = zero_T(phi_t.dim());
  engine::StepContext ctx;
  ctx.t = t;
  ctx.model = &model;
  ctx.phi_prev = phi_prev;
  ctx.T_prev = &T0;
  ctx.S_prev = nullptr;
  ctx.y_t = y_t;
  out.dphi = engine::phi_gradient_estimate(ctx, phi_t, N, rng);
  for (int i = 0; i < N; ++i) {
    engine::PairSample s =
        engine::draw_pair_sample(ctx, phi_t, rng.substream(i), want_theta);
    out.value += s.rg.value / N;
    if (want_theta) out.dtheta += s.rg.dtheta / N;
  }
  return out;
}

engine::RunResult aelbo_run(int variant, const model::ModelTheta& model0,
                            const MatrixXd& obs, const engine::EngineConfig& cfg,
                            vfam::PhiTrajectory* traj_out,
                            model::ModelTheta* model_out) {
  engine::RunResult result;
  model::ModelTheta model = model0;
  vfam::PhiStep phi;
  vfam::PhiTrajectory traj;
  double cumulative = 0.0;

  for (Eigen::Index row = 0; row < obs.rows(); ++row) {
    auto t0 = std::chrono::steady_clock::now();
    const int t = static_cast<int>(row) + 1;
    RngStream root(cfg.seed, static_cast<std::uint64_t>(t));
    VectorXd y = obs.row(row).transpose();

    vfam::PhiStep phi_prev = phi;
    if (t == 1) {
      phi.mu = VectorXd::Zero(model.dx());
      phi.log_sigma = VectorXd::Zero(model.dx());
      phi.kernel.reset();
    } else if (t == 2 && variant == 2) {
      if (cfg.kernel_kind == engine::KernelKind::Affine) {
        vfam::attach_affine_kernel(phi, phi_prev);
      } else {
        RngStream init = root.substream(0xfe);
        vfam::attach_mlp_kernel(phi, phi_prev, cfg.mlp_hidden, cfg.mlp_act, init);
      }
    }

    RngStream inner = root.substream(1);
    double gamma = (t == 1) ? cfg.phi_lr_first : cfg.phi_lr;
    double grad_norm = 0.0;
    engine::AdamState adam(phi.flat_size());
    try {
      // The method's own objective report is the training-curve value: the
      // minibatch estimates it optimized on, averaged over the loop tail.
      double insample = 0.0;
      int tail = std::max(1, cfg.inner_iters / 10);
      for (int m = 0; m < cfg.inner_iters; ++m) {
        AelboEval ev = aelbo_objective(variant, model, t >= 2 ? &phi_prev : nullptr, phi,
                                       y, t, cfg.grad_samples, inner.substream(m), false);
        VectorXd delta = cfg.phi_opt == engine::PhiOpt::Adam ? adam.update(ev.dphi, gamma)
                                                             : VectorXd(gamma * ev.dphi);
        VectorXd flat = phi.flat() + delta;
        if (!flat.allFinite())
          throw NumericalError("aelbo_run: non-finite phi update at t=" +
                               std::to_string(t));
        phi.set_flat(flat);
        grad_norm = ev.dphi.norm();
        gamma *= cfg.phi_lr_decay;
        if (m >= cfg.inner_iters - tail) insample += ev.value / tail;
      }
      cumulative += cfg.inner_iters > 0 ? insample : 0.0;

      if (cfg.learn_theta && model.theta_dim() > 0) {
        AelboEval final_ev =
            aelbo_objective(variant, model, t >= 2 ? &phi_prev : nullptr, phi, y, t,
                            std::max(cfg.grad_samples * 10, 100), root.substream(2), true);
        double eta = cfg.theta_lr * std::pow(static_cast<double>(t), -cfg.theta_decay_exp);
        VectorXd theta = model.theta_flat() + eta * final_ev.dtheta;
        require(theta.allFinite(), "aelbo_run: non-finite theta update");
        model.set_theta_flat(theta);
      }
    } catch (const std::exception& e) {
      result.aborted = true;
      result.error = e.what();
      break;
    }

    traj.steps.push_back(phi);
    engine::StepRecord rec;
    rec.t = t;
    rec.phi_flat = phi.flat();
    rec.theta_flat = model.theta_flat();
    rec.relbo = cumulative;
    rec.grad_norm = grad_norm;
    rec.step_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(std::move(rec));
  }
  if (traj_out) *traj_out = std::move(traj);
  if (model_out) *model_out = model;
  return result;
}

}  // namespace ovf::baseline
