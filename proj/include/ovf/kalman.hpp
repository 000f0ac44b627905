#ifndef OVF_KALMAN_HPP
#define OVF_KALMAN_HPP

#include "ovf/common.hpp"
#include "ovf/gaussian.hpp"
#include "ovf/phi.hpp"
#include "ovf/ssm.hpp"

#include <vector>

namespace ovf::baseline {

struct KalmanState {
  VectorXd mean;
  MatrixXd cov;
  double loglik = 0.0;  // accumulated log evidence
};

// Posterior state at time 0 == the model prior with zero log evidence.
KalmanState kf_init(const model::ModelTheta& theta);

// Bayes update of a predictive distribution (mean, cov) on one observation;
// returns the posterior and adds the log-predictive increment.
KalmanState kf_update(const model::ModelTheta& theta, const VectorXd& pred_mean,
                      const MatrixXd& pred_cov, const VectorXd& y, double loglik_base);

// One predict + update cycle from the posterior at t-1.
KalmanState kf_step(const model::ModelTheta& theta, const KalmanState& state,
                    const VectorXd& y);

// Full filter pass; the first observation updates the prior directly.
std::vector<KalmanState> kf_filter(const model::ModelTheta& theta, const MatrixXd& obs);

// Exact joint of (x_{t-1}, x_t) | y^t from the posterior at t-1 (stacked-state
// predict + update); block order is [x_{t-1}; x_t].
math::GaussianDist kf_pairwise_smooth(const model::ModelTheta& theta,
                                      const math::GaussianDist& filter_prev,
                                      const VectorXd& y_t);

// Exact backward kernel p(x_{t-1} | y^{t-1}, x_t) = N(A x_t + c, cov) derived
// from the posterior at t-1.
void kf_backward_kernel(const model::ModelTheta& theta, const KalmanState& prev,
                        MatrixXd& A, VectorXd& c, MatrixXd& cov);

// Builds the variational trajectory whose marginals and backward kernels are
// the exact Kalman quantities. Requires a model whose filter covariances stay
// diagonal (diagonal F, G, U, V).
vfam::PhiTrajectory kalman_phi_trajectory(const model::ModelTheta& theta,
                                          const MatrixXd& obs);

// Closed-form ELBO of an affine-kernel trajectory: log evidence minus the
// final-marginal KL minus the chain-marginal-weighted backward-kernel KLs.
double kl_decomposed_elbo(const model::ModelTheta& theta, const MatrixXd& obs,
                          const vfam::PhiTrajectory& traj);

}  // namespace ovf::baseline

#endif  // OVF_KALMAN_HPP
