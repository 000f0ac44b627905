#ifndef OVF_MLP_HPP
#define OVF_MLP_HPP

#include "ovf/common.hpp"
#include "ovf/rng.hpp"

#include <vector>

namespace ovf::nn {

enum class Act { Tanh, Relu };

// Small dense MLP with an affine output layer and a single hidden activation.
// Parameters expose a flat view (per layer: row-major weights, then bias)
// that round-trips exactly with the structured view.
struct Mlp {
  std::vector<int> sizes;  // [input, hidden..., output]
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
  Act hidden_act = Act::Tanh;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
  int param_count() const;

  VectorXd params_flat() const;
  void set_params_flat(const VectorXd& flat);

  VectorXd forward(const VectorXd& u) const;

  // Reverse accumulation of cot^T * d(forward)/d(params) and
  // cot^T * d(forward)/d(input).
  void vjp(const VectorXd& u, const VectorXd& cot, VectorXd& grad_params,
           VectorXd& grad_input) const;

  MatrixXd input_jacobian(const VectorXd& u) const;
};

// Glorot-uniform initialization: entries in +-sqrt(6 / (fan_in + fan_out)).
Mlp make_mlp(std::vector<int> sizes, Act hidden_act, RngStream& rng);

Mlp make_zero_mlp(std::vector<int> sizes, Act hidden_act);

// params <- params - lr * grad (descent; negate the gradient for ascent).
void sgd_step(Mlp& net, const VectorXd& grad_params, double lr);

}  // namespace ovf::nn

#endif  // OVF_MLP_HPP
