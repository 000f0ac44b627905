#include "ovf/engine.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>

namespace ovf::engine {

namespace {

// Accumulates the pathwise + direct gradient of one sampled increment into a
// flat phi_t vector. cot_xt is the full cotangent arriving at x_t.
void accumulate_phi_grad(const vfam::PhiStep& phi_t, const PairSample& s, VectorXd& out) {
  const int d = phi_t.dim();
  VectorXd cot_xt = s.rg.dx_t;
  if (!s.x_prev.size()) {
    out.segment(0, d) += cot_xt + s.rg.dmu;
    out.segment(d, d) +=
        (cot_xt.array() * phi_t.log_sigma.array().exp() * s.eps_t.array()).matrix() +
        s.rg.dlog_sigma.array().matrix();
    return;
  }
  VectorXd gk_path, cot_from_prev;
  vfam::backward_sample_vjp(phi_t, s.x_t, s.eps_prev, s.cot_prev, gk_path, cot_from_prev);
  cot_xt += cot_from_prev;
  out.segment(0, d) += cot_xt + s.rg.dmu;
  out.segment(d, d) +=
      (cot_xt.array() * phi_t.log_sigma.array().exp() * s.eps_t.array()).matrix() +
      s.rg.dlog_sigma.array().matrix();
  out.segment(phi_t.kernel_offset(), phi_t.kernel_param_count()) += gk_path + s.rg.dkernel;
}

reg::GradApprox fit_one(const reg::RegressionDataset& train,
                        const reg::RegressionDataset& val, double ridge,
                        const StepContext& ctx, const EngineConfig& cfg, RngStream rng) {
  if (cfg.fit_backend == FitBackend::MlpNet) {
    const int out_dim = cfg.regnet_loss_S == reg::RegLoss::DirLogMag
                            ? train.output_dim() + 1
                            : train.output_dim();
    RngStream init = rng.substream(1);
    nn::Mlp net = nn::make_mlp({train.input_dim(), cfg.regnet_hidden, out_dim},
                               nn::Act::Relu, init);
    return reg::mlp_regressor_fit(train, std::move(net), cfg.regnet_loss_S,
                                  cfg.regnet_epochs, cfg.regnet_batch, cfg.regnet_lr,
                                  rng.substream(2));
  }
  reg::KernelSpec spec;
  spec.family = cfg.kernel_family;
  spec.ridge_lambda = ridge;
  spec.log_bandwidth =
      reg::median_heuristic_log_bandwidth(train.inputs, rng.substream(3));
  if (cfg.bw_iters > 0 && (ctx.t == 1 || cfg.bw_select_every <= 1 ||
                           ctx.t % cfg.bw_select_every == 0)) {
    spec = reg::select_bandwidth(train, val, spec, cfg.bw_iters, cfg.bw_minibatch,
                                 cfg.bw_lr, rng.substream(4));
  }
  return reg::krr_fit(train, spec);
}

}  // namespace

VectorXd phi_gradient_sample(const StepContext& ctx, const vfam::PhiStep& phi_t,
                             RngStream rng) {
  PairSample s = draw_pair_sample(ctx, phi_t, rng, false);
  VectorXd g = VectorXd::Zero(phi_t.flat_size());
  accumulate_phi_grad(phi_t, s, g);
  return g;
}

VectorXd phi_gradient_estimate(const StepContext& ctx, const vfam::PhiStep& phi_t, int N,
                               RngStream rng) {
  require(N >= 1, "phi_gradient_estimate: N must be >= 1");
  std::vector<VectorXd> slots(N);
  parallel_for(N, [&](int i) {
    slots[i] = phi_gradient_sample(ctx, phi_t, rng.substream(i));
  });
  VectorXd sum = VectorXd::Zero(phi_t.flat_size());
  for (int i = 0; i < N; ++i) sum += slots[i];
  return sum / N;
}

VectorXd AdamState::update(const VectorXd& grad, double lr) {
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v.array().matrix() +
      (1.0 - beta2) * grad.array().square().matrix();
  double c1 = 1.0 - std::pow(beta1, step);
  double c2 = 1.0 - std::pow(beta2, step);
  return (lr * (m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
}

InnerOptResult inner_optimize_phi(const StepContext& ctx, vfam::PhiStep phi_t, int iters,
                                  double lr, double lr_decay, int N, RngStream rng,
                                  PhiOpt opt) {
  require(iters >= 0, "inner_optimize_phi: iters must be >= 0");
  InnerOptResult out;
  double gamma = lr;
  VectorXd flat = phi_t.flat();
  AdamState adam(static_cast<int>(flat.size()));
  for (int m = 0; m < iters; ++m) {
    VectorXd g = phi_gradient_estimate(ctx, phi_t, N, rng.substream(m));
    VectorXd delta = opt == PhiOpt::Adam ? adam.update(g, gamma) : VectorXd(gamma * g);
    VectorXd next = flat + delta;
    if (!next.allFinite()) {
      out.aborted = true;
      break;
    }
    flat = std::move(next);
    phi_t.set_flat(flat);
    out.last_grad_norm = g.norm();
    gamma *= lr_decay;
  }
  out.phi = std::move(phi_t);
  return out;
}

GradDatasets build_grad_datasets(const StepContext& ctx, const vfam::PhiStep& phi_t, int N,
                                 RngStream rng) {
  require(N >= 1, "build_grad_datasets: N must be >= 1");
  const int d = phi_t.dim();
  const int dtheta = ctx.model->theta_dim();
  GradDatasets out;
  out.d_T.inputs.resize(N, d);
  out.d_T.targets.resize(N, d);
  out.d_S.inputs.resize(N, d);
  out.d_S.targets.resize(N, dtheta);

  std::vector<VectorXd> t_rows(N), s_rows(N), x_rows(N);
  parallel_for(N, [&](int i) {
    PairSample s = draw_pair_sample(ctx, phi_t, rng.substream(i), dtheta > 0);
    VectorXd t_target;
    if (!s.x_prev.size()) {
      t_target = s.rg.dx_t;
    } else {
      VectorXd gk_unused, cot_from_prev;
      vfam::backward_sample_vjp(phi_t, s.x_t, s.eps_prev, s.cot_prev, gk_unused,
                                cot_from_prev);
      t_target = cot_from_prev + s.rg.dx_t;
    }
    VectorXd s_target(dtheta);
    if (dtheta > 0) {
      s_target = s.rg.dtheta;
      if (s.x_prev.size() && ctx.S_prev && !ctx.S_prev->is_zero())
        s_target += ctx.S_prev->predict(s.x_prev);
    }
    if (!t_target.allFinite() || (dtheta > 0 && !s_target.allFinite()))
      throw NumericalError("build_grad_datasets: non-finite reward gradient at t=" +
                           std::to_string(ctx.t));
    x_rows[i] = s.x_t;
    t_rows[i] = std::move(t_target);
    s_rows[i] = std::move(s_target);
  });
  for (int i = 0; i < N; ++i) {
    out.d_T.inputs.row(i) = x_rows[i].transpose();
    out.d_T.targets.row(i) = t_rows[i].transpose();
    out.d_S.inputs.row(i) = x_rows[i].transpose();
    if (dtheta > 0) out.d_S.targets.row(i) = s_rows[i].transpose();
  }
  return out;
}

FitResult fit_approximators(const StepContext& ctx, const vfam::PhiStep& phi_t,
                            const EngineConfig& cfg, RngStream rng) {
  const int total = cfg.fit_samples + cfg.val_samples;
  GradDatasets data = build_grad_datasets(ctx, phi_t, total, rng.substream(0));

  auto split = [&](const reg::RegressionDataset& d) {
    reg::RegressionDataset train, val;
    train.inputs = d.inputs.topRows(cfg.fit_samples);
    train.targets = d.targets.topRows(cfg.fit_samples);
    val.inputs = d.inputs.bottomRows(cfg.val_samples);
    val.targets = d.targets.bottomRows(cfg.val_samples);
    return std::pair(train, val);
  };

  FitResult out{reg::GradApprox::zero(phi_t.dim()),
                reg::GradApprox::zero(ctx.model->theta_dim())};
  auto [t_train, t_val] = split(data.d_T);
  out.T_hat = fit_one(t_train, t_val, cfg.ridge_T, ctx, cfg, rng.substream(1));
  if (ctx.model->theta_dim() > 0) {
    auto [s_train, s_val] = split(data.d_S);
    out.S_hat = fit_one(s_train, s_val, cfg.ridge_S, ctx, cfg, rng.substream(2));
  }
  return out;
}

VectorXd theta_step(const StepContext& ctx, const vfam::PhiStep& phi_t,
                    const reg::GradApprox& S_used, int N, double eta, RngStream rng) {
  require(N >= 1, "theta_step: N must be >= 1");
  const int dtheta = ctx.model->theta_dim();
  require(dtheta > 0, "theta_step: model has no learnable parameters");

  std::vector<VectorXd> terms(N);
  parallel_for(N, [&](int i) {
    PairSample s = draw_pair_sample(ctx, phi_t, rng.substream(i), true);
    VectorXd term = s.rg.dtheta;
    if (s.x_prev.size() && !S_used.is_zero()) term += S_used.predict(s.x_prev);
    terms[i] = std::move(term);
  });
  VectorXd direction = VectorXd::Zero(dtheta);
  for (int i = 0; i < N; ++i) direction += terms[i];
  direction /= N;

  if (ctx.t >= 2 && !S_used.is_zero()) {
    RngStream base_rng = rng.substream(0x0b);
    std::vector<VectorXd> base(N);
    parallel_for(N, [&](int i) {
      RngStream sub = base_rng.substream(i);
      VectorXd x_tilde = vfam::marginal_sample(*ctx.phi_prev, sub.normal_vec(phi_t.dim()));
      base[i] = S_used.predict(x_tilde);
    });
    VectorXd mean_base = VectorXd::Zero(dtheta);
    for (int i = 0; i < N; ++i) mean_base += base[i];
    direction -= mean_base / N;
  }
  return ctx.model->theta_flat() + eta * direction;
}

RelboResult relbo_update(const StepContext& ctx, const vfam::PhiStep& phi_t,
                         const reg::GradApprox& V_prev, const EngineConfig& cfg,
                         RngStream rng) {
  const int d = phi_t.dim();
  const int total = cfg.fit_samples + cfg.val_samples;
  reg::RegressionDataset data;
  data.inputs.resize(total, d);
  data.targets.resize(total, 1);
  RngStream draw_rng = rng.substream(0);
  std::vector<double> targets(total);
  std::vector<VectorXd> xs(total);
  parallel_for(total, [&](int i) {
    PairSample s = draw_pair_sample(ctx, phi_t, draw_rng.substream(i), false);
    double v = s.rg.value;
    if (s.x_prev.size() && !V_prev.is_zero()) v += V_prev.predict(s.x_prev)[0];
    xs[i] = s.x_t;
    targets[i] = v;
  });
  for (int i = 0; i < total; ++i) {
    data.inputs.row(i) = xs[i].transpose();
    data.targets(i, 0) = targets[i];
  }
  reg::RegressionDataset train, val;
  train.inputs = data.inputs.topRows(cfg.fit_samples);
  train.targets = data.targets.topRows(cfg.fit_samples);
  val.inputs = data.inputs.bottomRows(cfg.val_samples);
  val.targets = data.targets.bottomRows(cfg.val_samples);

  RelboResult out;
  out.V_hat = fit_one(train, val, cfg.ridge_V, ctx, cfg, rng.substream(1));

  RngStream mc = rng.substream(2);
  double sum = 0.0;
  for (int i = 0; i < cfg.relbo_mc_samples; ++i) {
    VectorXd x = vfam::marginal_sample(phi_t, mc.normal_vec(d));
    sum += out.V_hat.predict(x)[0];
  }
  out.relbo = sum / cfg.relbo_mc_samples;
  return out;
}

namespace {

struct ChainSample {
  std::vector<VectorXd> x;        // x[k] is the state at time k+1
  std::vector<VectorXd> eps;      // eps[k] is the noise used to draw x[k]
  double log_ratio = 0.0;
};

ChainSample draw_chain(const vfam::PhiTrajectory& traj, const model::ModelTheta& model,
                       const MatrixXd& obs, RngStream& rng) {
  const int T = traj.length();
  ChainSample s;
  s.x.resize(T);
  s.eps.resize(T);
  const int d = traj.steps[0].dim();
  s.eps[T - 1] = rng.normal_vec(d);
  s.x[T - 1] = vfam::marginal_sample(traj.steps[T - 1], s.eps[T - 1]);
  for (int k = T - 2; k >= 0; --k) {
    s.eps[k] = rng.normal_vec(d);
    if (traj.steps[k + 1].has_kernel())
      s.x[k] = vfam::backward_sample(traj.steps[k + 1], s.x[k + 1], s.eps[k]);
    else
      s.x[k] = vfam::marginal_sample(traj.steps[k], s.eps[k]);
  }

  double logp = model::prior_logpdf(model, s.x[0]) +
                model::observation_logpdf(model, s.x[0], obs.row(0).transpose());
  for (int k = 1; k < T; ++k)
    logp += model::transition_logpdf(model, s.x[k - 1], s.x[k]) +
            model::observation_logpdf(model, s.x[k], obs.row(k).transpose());
  double logq = vfam::marginal_logpdf(traj.steps[T - 1], s.x[T - 1]);
  for (int k = 1; k < T; ++k) {
    if (traj.steps[k].has_kernel())
      logq += vfam::backward_logpdf(traj.steps[k], s.x[k - 1], s.x[k]);
    else
      logq += vfam::marginal_logpdf(traj.steps[k - 1], s.x[k - 1]);
  }
  s.log_ratio = logp - logq;
  return s;
}

}  // namespace

double batch_elbo_mc(const vfam::PhiTrajectory& traj, const model::ModelTheta& model,
                     const MatrixXd& obs, int N, RngStream rng) {
  require(traj.length() >= 1, "batch_elbo_mc: empty trajectory");
  require(obs.rows() >= traj.length(), "batch_elbo_mc: not enough observations");
  std::vector<double> vals(N);
  parallel_for(N, [&](int i) {
    RngStream sub = rng.substream(i);
    vals[i] = draw_chain(traj, model, obs, sub).log_ratio;
  });
  double sum = 0.0;
  for (int i = 0; i < N; ++i) sum += vals[i];
  return sum / N;
}

BatchElboGrad batch_elbo_mc_grad(const vfam::PhiTrajectory& traj,
                                 const model::ModelTheta& model, const MatrixXd& obs,
                                 int N, RngStream rng, int max_grad_t) {
  const int T = traj.length();
  require(T >= 1, "batch_elbo_mc_grad: empty trajectory");
  if (T > max_grad_t)
    throw Error("batch_elbo_mc_grad: horizon " + std::to_string(T) +
                " exceeds gradient cap " + std::to_string(max_grad_t));

  BatchElboGrad out;
  out.dphi.resize(T);
  for (int k = 0; k < T; ++k) out.dphi[k] = VectorXd::Zero(traj.steps[k].flat_size());

  const int d = traj.steps[0].dim();
  for (int i = 0; i < N; ++i) {
    RngStream sub = rng.substream(i);
    ChainSample s = draw_chain(traj, model, obs, sub);
    out.value += s.log_ratio / N;

    // Direct cotangents at every state.
    std::vector<VectorXd> direct(T, VectorXd::Zero(d));
    {
      model::PriorGrad pg = model::prior_logpdf_grad(model, s.x[0]);
      direct[0] += pg.dx;
    }
    for (int k = 0; k < T; ++k) {
      model::ObservationGrad og =
          model::observation_logpdf_grad(model, s.x[k], obs.row(k).transpose());
      direct[k] += og.dx;
    }
    for (int k = 1; k < T; ++k) {
      model::TransitionGrad tg = model::transition_logpdf_grad(model, s.x[k - 1], s.x[k]);
      direct[k - 1] += tg.dx_prev;
      direct[k] += tg.dx;
    }
    vfam::MarginalGrad top = vfam::marginal_logpdf_grad(traj.steps[T - 1], s.x[T - 1]);
    direct[T - 1] -= top.dx;
    out.dphi[T - 1].segment(0, d) -= top.dmu / N;
    out.dphi[T - 1].segment(d, d) -= top.dlog_sigma / N;
    for (int k = 1; k < T; ++k) {
      if (traj.steps[k].has_kernel()) {
        vfam::BackwardGrad bg =
            vfam::backward_logpdf_grad(traj.steps[k], s.x[k - 1], s.x[k]);
        direct[k - 1] -= bg.dx_prev;
        direct[k] -= bg.dx_t;
        out.dphi[k].segment(traj.steps[k].kernel_offset(),
                            traj.steps[k].kernel_param_count()) -= bg.dkernel / N;
      } else {
        vfam::MarginalGrad mg = vfam::marginal_logpdf_grad(traj.steps[k - 1], s.x[k - 1]);
        direct[k - 1] -= mg.dx;
        out.dphi[k - 1].segment(0, d) -= mg.dmu / N;
        out.dphi[k - 1].segment(d, d) -= mg.dlog_sigma / N;
      }
    }

    // Reverse accumulation along the sampling chain, bottom state upward.
    VectorXd cot = direct[0];
    for (int k = 1; k <= T; ++k) {
      if (k == T) {
        // cot now sits at x_{T}; push through the top marginal draw.
        out.dphi[T - 1].segment(0, d) += cot / N;
        out.dphi[T - 1].segment(d, d) +=
            (cot.array() * traj.steps[T - 1].log_sigma.array().exp() *
             s.eps[T - 1].array()).matrix() / N;
        break;
      }
      if (traj.steps[k].has_kernel()) {
        VectorXd gk, up;
        vfam::backward_sample_vjp(traj.steps[k], s.x[k], s.eps[k - 1], cot, gk, up);
        out.dphi[k].segment(traj.steps[k].kernel_offset(),
                            traj.steps[k].kernel_param_count()) += gk / N;
        cot = direct[k] + up;
      } else {
        out.dphi[k - 1].segment(0, d) += cot / N;
        out.dphi[k - 1].segment(d, d) +=
            (cot.array() * traj.steps[k - 1].log_sigma.array().exp() *
             s.eps[k - 1].array()).matrix() / N;
        cot = direct[k];
      }
    }
  }
  return out;
}

vfam::PhiTrajectory train_offline(vfam::PhiTrajectory traj, const model::ModelTheta& model,
                                  const MatrixXd& obs, int iters, double lr, int N,
                                  RngStream rng) {
  for (int it = 0; it < iters; ++it) {
    BatchElboGrad g = batch_elbo_mc_grad(traj, model, obs, N, rng.substream(it));
    for (int k = 0; k < traj.length(); ++k) {
      VectorXd flat = traj.steps[k].flat() + lr * g.dphi[k];
      require(flat.allFinite(), "train_offline: non-finite parameters");
      traj.steps[k].set_flat(flat);
    }
  }
  return traj;
}

StepRecord engine_step(EngineState& state, const VectorXd& y, const EngineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  const int t = state.t + 1;
  RngStream root(cfg.seed, static_cast<std::uint64_t>(t));

  vfam::PhiStep phi_prev = state.phi;
  reg::GradApprox T_prev = state.T_hat;
  reg::GradApprox S_prev = state.S_hat;

  // Initialize phi_t from phi_{t-1}; the first step starts at standard-normal
  // statistics, the second acquires its backward kernel.
  if (t == 1) {
    state.phi.mu = VectorXd::Zero(state.model.dx());
    state.phi.log_sigma = VectorXd::Zero(state.model.dx());
    state.phi.kernel.reset();
    state.T_hat = reg::GradApprox::zero(state.model.dx());
    state.S_hat = reg::GradApprox::zero(state.model.theta_dim());
    state.V_hat = reg::GradApprox::zero(1);
  } else if (t == 2) {
    if (cfg.kernel_kind == KernelKind::Affine) {
      vfam::attach_affine_kernel(state.phi, phi_prev);
    } else {
      RngStream init = root.substream(0xfe);
      vfam::attach_mlp_kernel(state.phi, phi_prev, cfg.mlp_hidden, cfg.mlp_act, init);
    }
  }

  StepContext ctx;
  ctx.t = t;
  ctx.model = &state.model;
  ctx.phi_prev = t >= 2 ? &phi_prev : nullptr;
  ctx.T_prev = &T_prev;
  ctx.S_prev = &S_prev;
  ctx.y_t = y;

  double lr = (t == 1) ? cfg.phi_lr_first : cfg.phi_lr;
  InnerOptResult opt = inner_optimize_phi(ctx, state.phi, cfg.inner_iters, lr,
                                          cfg.phi_lr_decay, cfg.grad_samples,
                                          root.substream(1), cfg.phi_opt);
  if (opt.aborted)
    throw NumericalError("engine_step: non-finite phi update at t=" + std::to_string(t));
  state.phi = std::move(opt.phi);

  FitResult fits = fit_approximators(ctx, state.phi, cfg, root.substream(2));
  state.T_hat = std::move(fits.T_hat);
  state.S_hat = std::move(fits.S_hat);

  // The value regression belongs with the recursion refits: it must see the
  // same theta the rewards were computed with, so it runs before the theta
  // update below.
  if (cfg.compute_relbo) {
    RelboResult rr = relbo_update(ctx, state.phi, state.V_hat, cfg, root.substream(4));
    state.V_hat = std::move(rr.V_hat);
    state.relbo = rr.relbo;
  }

  if (cfg.learn_theta && state.model.theta_dim() > 0) {
    double eta = cfg.theta_lr * std::pow(static_cast<double>(t), -cfg.theta_decay_exp);
    const reg::GradApprox& s_used = cfg.theta_uses_refit_S ? state.S_hat : S_prev;
    VectorXd theta = theta_step(ctx, state.phi, s_used, cfg.theta_samples, eta,
                                root.substream(3));
    require(theta.allFinite(), "engine_step: non-finite theta update");
    state.model.set_theta_flat(theta);
  }

  state.t = t;
  StepRecord rec;
  rec.t = t;
  rec.phi_flat = state.phi.flat();
  rec.theta_flat = state.model.theta_flat();
  rec.relbo = state.relbo;
  rec.grad_norm = opt.last_grad_norm;
  rec.step_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunResult run_online(const model::ModelTheta& model0, const MatrixXd& obs,
                     const EngineConfig& cfg, EngineState* final_state,
                     vfam::PhiTrajectory* traj_out) {
  RunResult result;
  EngineState state;
  state.model = model0;
  state.model.validate();
  if (traj_out) traj_out->steps.clear();
  for (Eigen::Index t = 0; t < obs.rows(); ++t) {
    try {
      result.records.push_back(engine_step(state, obs.row(t).transpose(), cfg));
    } catch (const std::exception& e) {
      result.aborted = true;
      result.error = e.what();
      break;
    }
    if (traj_out) traj_out->steps.push_back(state.phi);
  }
  if (final_state) *final_state = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpointing

namespace {

nlohmann::json vec_to_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vec_from_json(const nlohmann::json& a) {
  VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

nlohmann::json mat_to_json(const MatrixXd& m) {
  nlohmann::json a;
  a["rows"] = m.rows();
  a["cols"] = m.cols();
  nlohmann::json vals = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) vals.push_back(m(r, c));
  a["data"] = vals;
  return a;
}

MatrixXd mat_from_json(const nlohmann::json& a) {
  MatrixXd m(a["rows"].get<int>(), a["cols"].get<int>());
  const auto& vals = a["data"];
  size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = vals[i++].get<double>();
  return m;
}

nlohmann::json approx_to_json(const reg::GradApprox& g) {
  nlohmann::json j;
  require(!std::holds_alternative<reg::FuncModel>(g.backend),
          "save_engine_state: function-backed approximators are not serializable");
  if (g.is_zero()) {
    j["kind"] = "zero";
    j["out_dim"] = g.output_dim();
  } else if (std::holds_alternative<reg::KrrModel>(g.backend)) {
    const auto& m = std::get<reg::KrrModel>(g.backend);
    j["kind"] = "krr";
    j["support"] = mat_to_json(m.support);
    j["coeff"] = mat_to_json(m.coeff);
    j["target_mean"] = vec_to_json(m.target_mean);
    j["family"] = m.spec.family == reg::KernelFamily::Rbf ? "rbf" : "matern52";
    j["log_bandwidth"] = m.spec.log_bandwidth;
    j["ridge_lambda"] = m.spec.ridge_lambda;
  } else {
    const auto& m = std::get<reg::MlpRegModel>(g.backend);
    j["kind"] = "mlp";
    j["sizes"] = m.net.sizes;
    j["act"] = m.net.hidden_act == nn::Act::Tanh ? "tanh" : "relu";
    j["params"] = vec_to_json(m.net.params_flat());
    j["loss"] = m.loss == reg::RegLoss::Mse ? "mse" : "dir_logmag";
  }
  return j;
}

reg::GradApprox approx_from_json(const nlohmann::json& j) {
  std::string kind = j["kind"].get<std::string>();
  if (kind == "zero") return reg::GradApprox::zero(j["out_dim"].get<int>());
  reg::GradApprox g;
  if (kind == "krr") {
    reg::KrrModel m;
    m.support = mat_from_json(j["support"]);
    m.coeff = mat_from_json(j["coeff"]);
    m.target_mean = vec_from_json(j["target_mean"]);
    m.spec.family = j["family"] == "rbf" ? reg::KernelFamily::Rbf
                                         : reg::KernelFamily::Matern52;
    m.spec.log_bandwidth = j["log_bandwidth"].get<double>();
    m.spec.ridge_lambda = j["ridge_lambda"].get<double>();
    g.backend = std::move(m);
  } else {
    reg::MlpRegModel m;
    m.net = nn::make_zero_mlp(j["sizes"].get<std::vector<int>>(),
                              j["act"] == "tanh" ? nn::Act::Tanh : nn::Act::Relu);
    m.net.set_params_flat(vec_from_json(j["params"]));
    m.loss = j["loss"] == "mse" ? reg::RegLoss::Mse : reg::RegLoss::DirLogMag;
    g.backend = std::move(m);
  }
  return g;
}

nlohmann::json phi_to_json(const vfam::PhiStep& s) {
  nlohmann::json j;
  j["dim"] = s.dim();
  if (!s.has_kernel())
    j["kernel"] = "none";
  else if (s.kernel_is_affine())
    j["kernel"] = "affine";
  else {
    j["kernel"] = "mlp";
    j["mlp_sizes"] = s.mlp().net.sizes;
    j["mlp_act"] = s.mlp().net.hidden_act == nn::Act::Tanh ? "tanh" : "relu";
  }
  j["flat"] = vec_to_json(s.flat());
  return j;
}

vfam::PhiStep phi_from_json(const nlohmann::json& j) {
  vfam::PhiStep s;
  int d = j["dim"].get<int>();
  s.mu = VectorXd::Zero(d);
  s.log_sigma = VectorXd::Zero(d);
  std::string kind = j["kernel"].get<std::string>();
  if (kind == "affine") {
    vfam::AffineKernel k;
    k.W = MatrixXd::Zero(d, d);
    k.b = VectorXd::Zero(d);
    k.log_sigma_t = VectorXd::Zero(d);
    s.kernel = std::move(k);
  } else if (kind == "mlp") {
    vfam::MlpKernel k;
    k.net = nn::make_zero_mlp(j["mlp_sizes"].get<std::vector<int>>(),
                              j["mlp_act"] == "tanh" ? nn::Act::Tanh : nn::Act::Relu);
    k.log_sigma_t = VectorXd::Zero(d);
    s.kernel = std::move(k);
  }
  s.set_flat(vec_from_json(j["flat"]));
  return s;
}

nlohmann::json model_to_json(const model::ModelTheta& m) {
  nlohmann::json j;
  j["learn"] = m.learn == model::LearnSet::None    ? "none"
               : m.learn == model::LearnSet::FgDiag ? "fg_diag"
                                                    : "fg_full";
  if (m.is_linear()) {
    const auto& lg = m.lg();
    j["kind"] = "linear_gaussian";
    j["F"] = mat_to_json(lg.F);
    j["G"] = mat_to_json(lg.G);
    j["U"] = vec_to_json(lg.U);
    j["V"] = vec_to_json(lg.V);
    j["prior_mean"] = vec_to_json(lg.prior_mean);
    j["prior_var"] = vec_to_json(lg.prior_var);
  } else {
    const auto& cr = m.crnn();
    j["kind"] = "chaotic_rnn";
    j["W"] = mat_to_json(cr.W);
    j["gamma"] = cr.gamma;
    j["tau"] = cr.tau;
    j["delta"] = cr.delta;
    j["U"] = vec_to_json(cr.U);
    j["C"] = mat_to_json(cr.C);
    j["t_scale"] = cr.t_scale;
    j["t_dof"] = cr.t_dof;
    j["prior_mean"] = vec_to_json(cr.prior_mean);
    j["prior_var"] = vec_to_json(cr.prior_var);
  }
  return j;
}

model::ModelTheta model_from_json(const nlohmann::json& j) {
  model::ModelTheta m;
  std::string learn = j["learn"].get<std::string>();
  m.learn = learn == "none"    ? model::LearnSet::None
            : learn == "fg_diag" ? model::LearnSet::FgDiag
                                 : model::LearnSet::FgFull;
  if (j["kind"] == "linear_gaussian") {
    model::LinearGaussian lg;
    lg.F = mat_from_json(j["F"]);
    lg.G = mat_from_json(j["G"]);
    lg.U = vec_from_json(j["U"]);
    lg.V = vec_from_json(j["V"]);
    lg.prior_mean = vec_from_json(j["prior_mean"]);
    lg.prior_var = vec_from_json(j["prior_var"]);
    m.spec = std::move(lg);
  } else {
    model::ChaoticRnn cr;
    cr.W = mat_from_json(j["W"]);
    cr.gamma = j["gamma"].get<double>();
    cr.tau = j["tau"].get<double>();
    cr.delta = j["delta"].get<double>();
    cr.U = vec_from_json(j["U"]);
    cr.C = mat_from_json(j["C"]);
    cr.t_scale = j["t_scale"].get<double>();
    cr.t_dof = j["t_dof"].get<double>();
    cr.prior_mean = vec_from_json(j["prior_mean"]);
    cr.prior_var = vec_from_json(j["prior_var"]);
    m.spec = std::move(cr);
  }
  return m;
}

}  // namespace

void save_engine_state(const EngineState& state, const std::string& path) {
  nlohmann::json j;
  j["t"] = state.t;
  j["model"] = model_to_json(state.model);
  j["phi"] = phi_to_json(state.phi);
  j["T_hat"] = approx_to_json(state.T_hat);
  j["S_hat"] = approx_to_json(state.S_hat);
  j["V_hat"] = approx_to_json(state.V_hat);
  j["relbo"] = state.relbo;
  std::ofstream out(path);
  require(out.good(), "save_engine_state: cannot open " + path);
  out << j.dump() << "\n";
}

EngineState load_engine_state(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_engine_state: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  EngineState state;
  state.t = j["t"].get<int>();
  state.model = model_from_json(j["model"]);
  state.phi = phi_from_json(j["phi"]);
  state.T_hat = approx_from_json(j["T_hat"]);
  state.S_hat = approx_from_json(j["S_hat"]);
  state.V_hat = approx_from_json(j["V_hat"]);
  state.relbo = j["relbo"].get<double>();
  return state;
}

}  // namespace ovf::engine
