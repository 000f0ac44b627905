#include "ovf/mlp.hpp"

#include <cmath>

namespace ovf::nn {

namespace {

VectorXd activate(const VectorXd& z, Act act) {
  if (act == Act::Tanh) return z.array().tanh().matrix();
  return z.cwiseMax(0.0);
}

// Derivative of the activation expressed through pre-activation z.
VectorXd activate_deriv(const VectorXd& z, Act act) {
  if (act == Act::Tanh) return (1.0 - z.array().tanh().square()).matrix();
  return (z.array() > 0.0).cast<double>().matrix();
}

}  // namespace

int Mlp::param_count() const {
  int n = 0;
  for (int l = 0; l < layer_count(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  return n;
}

VectorXd Mlp::params_flat() const {
  VectorXd flat(param_count());
  Eigen::Index off = 0;
  for (int l = 0; l < layer_count(); ++l) {
    const MatrixXd& W = weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) flat[off++] = W(r, c);
    flat.segment(off, biases[l].size()) = biases[l];
    off += biases[l].size();
  }
  return flat;
}

void Mlp::set_params_flat(const VectorXd& flat) {
  require(flat.size() == param_count(), "Mlp::set_params_flat: length mismatch");
  Eigen::Index off = 0;
  for (int l = 0; l < layer_count(); ++l) {
    MatrixXd& W = weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[off++];
    biases[l] = flat.segment(off, biases[l].size());
    off += biases[l].size();
  }
}

VectorXd Mlp::forward(const VectorXd& u) const {
  require(u.size() == input_dim(), "Mlp::forward: input dimension mismatch");
  VectorXd a = u;
  for (int l = 0; l < layer_count(); ++l) {
    VectorXd z = weights[l] * a + biases[l];
    a = (l + 1 < layer_count()) ? activate(z, hidden_act) : z;
  }
  return a;
}

void Mlp::vjp(const VectorXd& u, const VectorXd& cot, VectorXd& grad_params,
              VectorXd& grad_input) const {
  require(u.size() == input_dim(), "Mlp::vjp: input dimension mismatch");
  require(cot.size() == output_dim(), "Mlp::vjp: cotangent dimension mismatch");
  const int L = layer_count();
  std::vector<VectorXd> acts(L + 1);
  std::vector<VectorXd> pre(L);
  acts[0] = u;
  for (int l = 0; l < L; ++l) {
    pre[l] = weights[l] * acts[l] + biases[l];
    acts[l + 1] = (l + 1 < L) ? activate(pre[l], hidden_act) : pre[l];
  }

  grad_params.resize(param_count());
  VectorXd delta = cot;
  // Walk layers backward, filling the flat gradient in forward layout.
  std::vector<Eigen::Index> offsets(L);
  Eigen::Index off = 0;
  for (int l = 0; l < L; ++l) {
    offsets[l] = off;
    off += weights[l].size() + biases[l].size();
  }
  for (int l = L - 1; l >= 0; --l) {
    const MatrixXd& W = weights[l];
    Eigen::Index o = offsets[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        grad_params[o + r * W.cols() + c] = delta[r] * acts[l][c];
    grad_params.segment(o + W.size(), delta.size()) = delta;
    VectorXd back = W.transpose() * delta;
    if (l > 0) back.array() *= activate_deriv(pre[l - 1], hidden_act).array();
    delta = std::move(back);
  }
  grad_input = std::move(delta);
}

MatrixXd Mlp::input_jacobian(const VectorXd& u) const {
  MatrixXd J(output_dim(), input_dim());
  VectorXd cot = VectorXd::Zero(output_dim());
  VectorXd gp, gx;
  for (int r = 0; r < output_dim(); ++r) {
    cot[r] = 1.0;
    vjp(u, cot, gp, gx);
    J.row(r) = gx.transpose();
    cot[r] = 0.0;
  }
  return J;
}

Mlp make_mlp(std::vector<int> sizes, Act hidden_act, RngStream& rng) {
  require(sizes.size() >= 2, "make_mlp: need at least input and output sizes");
  Mlp net;
  net.sizes = std::move(sizes);
  net.hidden_act = hidden_act;
  for (size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    int fan_in = net.sizes[l];
    int fan_out = net.sizes[l + 1];
    require(fan_in > 0 && fan_out > 0, "make_mlp: layer sizes must be positive");
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    MatrixXd W(fan_out, fan_in);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        W(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    net.weights.push_back(std::move(W));
    net.biases.push_back(VectorXd::Zero(fan_out));
  }
  return net;
}

Mlp make_zero_mlp(std::vector<int> sizes, Act hidden_act) {
  require(sizes.size() >= 2, "make_zero_mlp: need at least input and output sizes");
  Mlp net;
  net.sizes = std::move(sizes);
  net.hidden_act = hidden_act;
  for (size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    net.weights.push_back(MatrixXd::Zero(net.sizes[l + 1], net.sizes[l]));
    net.biases.push_back(VectorXd::Zero(net.sizes[l + 1]));
  }
  return net;
}

void sgd_step(Mlp& net, const VectorXd& grad_params, double lr) {
  require(grad_params.size() == net.param_count(), "sgd_step: gradient length mismatch");
  Eigen::Index off = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    MatrixXd& W = net.weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) -= lr * grad_params[off++];
    net.biases[l] -= lr * grad_params.segment(off, net.biases[l].size());
    off += net.biases[l].size();
  }
}

}  // namespace ovf::nn
