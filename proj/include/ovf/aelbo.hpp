#ifndef OVF_AELBO_HPP
#define OVF_AELBO_HPP

#include "ovf/engine.hpp"

namespace ovf::baseline {

// Per-step surrogate objectives that replace the true filter by the previous
// variational marginal. Variant 1 pairs independent marginals
// q_{t-1}(x_{t-1}) q_t(x_t); variant 2 uses the conditional pair
// q_t(x_t) q_t(x_{t-1} | x_t). The q_{t-1} factor is frozen (no gradient
// flows into it) in both cases.
struct AelboEval {
  double value = 0.0;
  VectorXd dphi;    // flat over phi_t
  VectorXd dtheta;  // empty unless requested
};

AelboEval aelbo_objective(int variant, const model::ModelTheta& model,
                          const vfam::PhiStep* phi_prev, const vfam::PhiStep& phi_t,
                          const VectorXd& y_t, int t, int N, RngStream rng,
                          bool want_theta);

// Online loop that optimizes each phi_t on its AELBO term (and optionally
// ascends theta on the term's theta-gradient). Records carry the cumulative
// surrogate objective in the relbo field. Mirrors the engine's lr schedule.
engine::RunResult aelbo_run(int variant, const model::ModelTheta& model0,
                            const MatrixXd& obs, const engine::EngineConfig& cfg,
                            vfam::PhiTrajectory* traj_out = nullptr,
                            model::ModelTheta* model_out = nullptr);

}  // namespace ovf::baseline

#endif  // OVF_AELBO_HPP
