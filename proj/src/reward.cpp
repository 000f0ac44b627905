#include "ovf/reward.hpp"

namespace ovf::engine {

double reward(const StepContext& ctx, const vfam::PhiStep& phi_t, const VectorXd& x_prev,
              const VectorXd& x_t) {
  const auto& model = *ctx.model;
  if (ctx.t == 1) {
    return model::prior_logpdf(model, x_t) + model::observation_logpdf(model, x_t, ctx.y_t) -
           vfam::marginal_logpdf(phi_t, x_t);
  }
  require(ctx.phi_prev != nullptr, "reward: phi_prev required for t >= 2");
  return model::transition_logpdf(model, x_prev, x_t) +
         model::observation_logpdf(model, x_t, ctx.y_t) -
         vfam::pseudo_transition_logpdf(*ctx.phi_prev, phi_t, x_prev, x_t);
}

RewardGrad reward_grad(const StepContext& ctx, const vfam::PhiStep& phi_t,
                       const VectorXd& x_prev, const VectorXd& x_t, bool want_theta) {
  const auto& model = *ctx.model;
  RewardGrad out;
  if (ctx.t == 1) {
    model::PriorGrad pg = model::prior_logpdf_grad(model, x_t);
    model::ObservationGrad og = model::observation_logpdf_grad(model, x_t, ctx.y_t);
    vfam::MarginalGrad mg = vfam::marginal_logpdf_grad(phi_t, x_t);
    out.value = pg.value + og.value - mg.value;
    out.dx_t = pg.dx + og.dx - mg.dx;
    out.dmu = -mg.dmu;
    out.dlog_sigma = -mg.dlog_sigma;
    if (want_theta) out.dtheta = og.dtheta;
    return out;
  }
  require(ctx.phi_prev != nullptr, "reward_grad: phi_prev required for t >= 2");
  model::TransitionGrad tg = model::transition_logpdf_grad(model, x_prev, x_t);
  model::ObservationGrad og = model::observation_logpdf_grad(model, x_t, ctx.y_t);
  vfam::BackwardGrad bg = vfam::backward_logpdf_grad(phi_t, x_prev, x_t);
  vfam::MarginalGrad mt = vfam::marginal_logpdf_grad(phi_t, x_t);
  vfam::MarginalGrad mp = vfam::marginal_logpdf_grad(*ctx.phi_prev, x_prev);

  out.value = tg.value + og.value - bg.value - mt.value + mp.value;
  out.dx_prev = tg.dx_prev - bg.dx_prev + mp.dx;
  out.dx_t = tg.dx + og.dx - bg.dx_t - mt.dx;
  out.dmu = -mt.dmu;
  out.dlog_sigma = -mt.dlog_sigma;
  out.dkernel = -bg.dkernel;
  if (want_theta) out.dtheta = tg.dtheta + og.dtheta;
  if (!std::isfinite(out.value)) {
    // Report the offending term by name.
    std::string bad;
    if (!std::isfinite(tg.value)) bad = "transition";
    else if (!std::isfinite(og.value)) bad = "observation";
    else if (!std::isfinite(bg.value)) bad = "backward kernel";
    else if (!std::isfinite(mt.value)) bad = "current marginal";
    else bad = "previous marginal";
    throw NumericalError("reward_grad: non-finite " + bad + " term at t=" +
                         std::to_string(ctx.t));
  }
  return out;
}

PairSample draw_pair_sample(const StepContext& ctx, const vfam::PhiStep& phi_t,
                            RngStream rng, bool want_theta) {
  PairSample s;
  const int d = phi_t.dim();
  s.eps_t = rng.normal_vec(d);
  s.x_t = vfam::marginal_sample(phi_t, s.eps_t);
  if (ctx.t >= 2) {
    s.eps_prev = rng.normal_vec(d);
    s.x_prev = vfam::backward_sample(phi_t, s.x_t, s.eps_prev);
  }
  s.rg = reward_grad(ctx, phi_t, s.x_prev, s.x_t, want_theta);
  if (ctx.t >= 2) {
    s.cot_prev = s.rg.dx_prev;
    if (ctx.T_prev && !ctx.T_prev->is_zero()) s.cot_prev += ctx.T_prev->predict(s.x_prev);
  }
  return s;
}

}  // namespace ovf::engine
