#ifndef OVF_ENGINE_HPP
#define OVF_ENGINE_HPP

#include "ovf/regression.hpp"
#include "ovf/reward.hpp"

#include <string>
#include <vector>

namespace ovf::engine {

// Quantity registry for the forward recursions implemented here:
//   cumulative log-ratio value  V_t  -> relbo_update (regressed as V_hat)
//   its theta derivative        S_t  -> build_grad_datasets / S_hat fits
//   its state derivative        T_t  -> build_grad_datasets / T_hat fits
//   per-step increment          r_t  -> reward / reward_grad
//   pseudo-transition           m_t  -> vfam::pseudo_transition_logpdf
//   per-step theta score        s_t  -> RewardGrad::dtheta
// Each maps to exactly one operation; everything downstream composes these.

enum class KernelKind { Affine, Mlp };
enum class FitBackend { Krr, MlpNet };
enum class PhiOpt { Adam, Sgd };

struct EngineConfig {
  // Inner phi optimization (ascent steps per time index). Adam keeps the
  // published learning rates stable on tight-noise models whose raw gradient
  // curvature scales like 1/variance; plain SGD ascent remains selectable.
  PhiOpt phi_opt = PhiOpt::Adam;
  int inner_iters = 500;
  double phi_lr = 0.01;
  double phi_lr_decay = 0.999;
  double phi_lr_first = 0.1;  // t == 1 starts far from the optimum
  int grad_samples = 10;      // N per stochastic gradient

  // Backward kernel family.
  KernelKind kernel_kind = KernelKind::Affine;
  int mlp_hidden = 100;
  nn::Act mlp_act = nn::Act::Tanh;

  // Recursion-fitting regression.
  FitBackend fit_backend = FitBackend::Krr;
  int fit_samples = 500;
  int val_samples = 32;
  reg::KernelFamily kernel_family = reg::KernelFamily::Matern52;
  double ridge_T = 0.1;
  double ridge_S = 1e-4;
  double ridge_V = 0.1;
  int bw_iters = 25;
  int bw_minibatch = 10;
  double bw_lr = 1e-2;
  int bw_select_every = 1;  // run bandwidth selection every k-th step
  // MlpNet backend settings (used when fit_backend == MlpNet).
  int regnet_hidden = 64;
  int regnet_epochs = 128;
  int regnet_batch = 32;
  double regnet_lr = 1e-3;
  reg::RegLoss regnet_loss_S = reg::RegLoss::Mse;

  // Theta learning.
  bool learn_theta = false;
  double theta_lr = 1e-2;
  double theta_decay_exp = 0.6;  // eta_t = theta_lr * t^-exp
  int theta_samples = 100;
  bool theta_uses_refit_S = false;  // literal update consumes S_hat_{t-1}

  // Online ELBO tracking (adds a third regression per step).
  bool compute_relbo = false;
  int relbo_mc_samples = 1000;

  std::uint64_t seed = 1;
};

// Everything retained between steps; nothing else persists.
struct EngineState {
  int t = 0;  // last processed time index
  model::ModelTheta model;
  vfam::PhiStep phi;
  reg::GradApprox T_hat = reg::GradApprox::zero(0);
  reg::GradApprox S_hat = reg::GradApprox::zero(0);
  reg::GradApprox V_hat = reg::GradApprox::zero(1);
  double relbo = 0.0;
};

struct StepRecord {
  int t = 0;
  VectorXd phi_flat;
  VectorXd theta_flat;
  double relbo = 0.0;
  double grad_norm = 0.0;  // last inner-loop gradient norm
  double step_ms = 0.0;
};

struct RunResult {
  std::vector<StepRecord> records;
  bool aborted = false;
  std::string error;
};

// One pathwise gradient sample of the phi_t ELBO increment:
//   T_prev(x_{t-1}) dx_{t-1}/dphi_t + grad_phi r_t
// at a single reparameterized pairwise draw. Flat layout over phi_t.
VectorXd phi_gradient_sample(const StepContext& ctx, const vfam::PhiStep& phi_t,
                             RngStream rng);

// Monte Carlo estimate: the mean of phi_gradient_sample over the substreams
// rng.substream(0..N-1).
VectorXd phi_gradient_estimate(const StepContext& ctx, const vfam::PhiStep& phi_t, int N,
                               RngStream rng);

// Ascent state shared by the inner loops (engine and surrogate runners).
struct AdamState {
  VectorXd m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int step = 0;
  explicit AdamState(int n) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}
  VectorXd update(const VectorXd& grad, double lr);
};

struct InnerOptResult {
  vfam::PhiStep phi;
  double last_grad_norm = 0.0;
  bool aborted = false;  // non-finite update; phi holds the last good value
};
InnerOptResult inner_optimize_phi(const StepContext& ctx, vfam::PhiStep phi_t, int iters,
                                  double lr, double lr_decay, int N, RngStream rng,
                                  PhiOpt opt = PhiOpt::Adam);

// Simulated datasets for the T/S recursions at time ctx.t. D_S carries zero
// columns when the model has no learnable parameters.
struct GradDatasets {
  reg::RegressionDataset d_T;
  reg::RegressionDataset d_S;
};
GradDatasets build_grad_datasets(const StepContext& ctx, const vfam::PhiStep& phi_t, int N,
                                 RngStream rng);

struct FitResult {
  reg::GradApprox T_hat;
  reg::GradApprox S_hat;
};
FitResult fit_approximators(const StepContext& ctx, const vfam::PhiStep& phi_t,
                            const EngineConfig& cfg, RngStream rng);

// One ascent step on theta from the two-expectation update rule; S_used is
// whichever approximator the configuration selects. Returns the new flat theta.
VectorXd theta_step(const StepContext& ctx, const vfam::PhiStep& phi_t,
                    const reg::GradApprox& S_used, int N, double eta, RngStream rng);

struct RelboResult {
  double relbo = 0.0;
  reg::GradApprox V_hat;
};
RelboResult relbo_update(const StepContext& ctx, const vfam::PhiStep& phi_t,
                         const reg::GradApprox& V_prev, const EngineConfig& cfg,
                         RngStream rng);

// Full-trajectory ELBO by ancestral sampling of the backward factorization
// (steps without kernels sample their own marginals). The gradient variant
// returns per-step flat gradients; it refuses horizons beyond max_grad_t.
double batch_elbo_mc(const vfam::PhiTrajectory& traj, const model::ModelTheta& model,
                     const MatrixXd& obs, int N, RngStream rng);

struct BatchElboGrad {
  double value = 0.0;
  std::vector<VectorXd> dphi;  // per step, flat layout
};
BatchElboGrad batch_elbo_mc_grad(const vfam::PhiTrajectory& traj,
                                 const model::ModelTheta& model, const MatrixXd& obs,
                                 int N, RngStream rng, int max_grad_t = 64);

// Offline trainer: joint gradient ascent on the batch ELBO over all phi
// parameters (the small-horizon comparison oracle).
vfam::PhiTrajectory train_offline(vfam::PhiTrajectory traj, const model::ModelTheta& model,
                                  const MatrixXd& obs, int iters, double lr, int N,
                                  RngStream rng);

// Advances the engine by one observation. RNG streams derive from
// (cfg.seed, time index), so runs are reproducible regardless of threading.
StepRecord engine_step(EngineState& state, const VectorXd& y, const EngineConfig& cfg);

RunResult run_online(const model::ModelTheta& model0, const MatrixXd& obs,
                     const EngineConfig& cfg, EngineState* final_state = nullptr,
                     vfam::PhiTrajectory* traj_out = nullptr);

void save_engine_state(const EngineState& state, const std::string& path);
EngineState load_engine_state(const std::string& path);

}  // namespace ovf::engine

#endif  // OVF_ENGINE_HPP
