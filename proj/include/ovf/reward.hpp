#ifndef OVF_REWARD_HPP
#define OVF_REWARD_HPP

#include "ovf/common.hpp"
#include "ovf/phi.hpp"
#include "ovf/regression.hpp"
#include "ovf/ssm.hpp"

namespace ovf::engine {

// Inputs fixed for the duration of one time step: everything the per-step
// objective needs except the parameters being optimized.
struct StepContext {
  int t = 1;  // 1-based time index
  const model::ModelTheta* model = nullptr;
  const vfam::PhiStep* phi_prev = nullptr;   // frozen; null at t == 1
  const reg::GradApprox* T_prev = nullptr;   // state-derivative approximator
  const reg::GradApprox* S_prev = nullptr;   // theta-derivative approximator
  VectorXd y_t;
};

// Per-step log-ratio increment whose cumulative expectation is the ELBO:
//   t == 1:  r_1(x_1) = log mu(x_1) + log g(y_1 | x_1) - log q_1(x_1)
//   t >= 2:  r_t(x_{t-1}, x_t) = log f + log g - log m_t
// with m_t the pseudo-transition built from (phi_{t-1}, phi_t). x_prev is
// ignored at t == 1.
double reward(const StepContext& ctx, const vfam::PhiStep& phi_t, const VectorXd& x_prev,
              const VectorXd& x_t);

struct RewardGrad {
  double value = 0.0;
  VectorXd dx_prev;  // empty at t == 1
  VectorXd dx_t;
  VectorXd dtheta;  // the per-step theta score; empty unless requested
  // Direct parameter partials w.r.t. phi_t, holding the sample points fixed.
  VectorXd dmu;
  VectorXd dlog_sigma;
  VectorXd dkernel;  // empty at t == 1
};
RewardGrad reward_grad(const StepContext& ctx, const vfam::PhiStep& phi_t,
                       const VectorXd& x_prev, const VectorXd& x_t, bool want_theta);

// One reparameterized draw from the pairwise q_t(x_{t-1}, x_t) plus every
// quantity the recursions consume at that draw. The cotangent into x_{t-1}
// already includes the T_prev feedback term.
struct PairSample {
  VectorXd eps_t, x_t;
  VectorXd eps_prev, x_prev;  // empty at t == 1
  RewardGrad rg;
  VectorXd cot_prev;  // dr/dx_prev + T_prev(x_prev); empty at t == 1
};
PairSample draw_pair_sample(const StepContext& ctx, const vfam::PhiStep& phi_t,
                            RngStream rng, bool want_theta);

}  // namespace ovf::engine

#endif  // OVF_REWARD_HPP
