#ifndef OVF_RMLE_HPP
#define OVF_RMLE_HPP

#include "ovf/kalman.hpp"

#include <vector>

namespace ovf::baseline {

// Kalman state plus sensitivities of the filter mean/covariance w.r.t. each
// learnable theta coordinate. Sensitivities accumulated under past parameter
// values are carried forward unchanged when theta is updated online.
struct TangentState {
  KalmanState kf;
  std::vector<VectorXd> dmean;
  std::vector<MatrixXd> dcov;
};

TangentState rmle_init(const model::ModelTheta& theta);

// Propagates the filter and its sensitivities through one step at the current
// theta and returns the gradient of the log-predictive increment
// d/dtheta log p(y_t | y^{t-1}). `first` updates the prior directly.
VectorXd rmle_tangent_step(const model::ModelTheta& theta, TangentState& state,
                           const VectorXd& y, bool first);

// Online ascent: propagate, then theta <- theta + eta * grad (eta == 0 leaves
// theta unchanged while the tangent still advances).
VectorXd rmle_exact_step(model::ModelTheta& theta, TangentState& state, const VectorXd& y,
                         double eta, bool first);

}  // namespace ovf::baseline

#endif  // OVF_RMLE_HPP
