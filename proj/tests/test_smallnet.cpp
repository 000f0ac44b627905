#include "ovf/finite_diff.hpp"
#include "ovf/mlp.hpp"
#include "ovf/rng.hpp"

#include <doctest.h>

using namespace ovf;
using namespace ovf::nn;

namespace {

// Independent forward pass written against the structured views only.
VectorXd naive_forward(const Mlp& net, const VectorXd& u) {
  VectorXd a = u;
  for (int l = 0; l < net.layer_count(); ++l) {
    VectorXd z(net.weights[l].rows());
    for (Eigen::Index r = 0; r < z.size(); ++r) {
      double acc = net.biases[l][r];
      for (Eigen::Index c = 0; c < a.size(); ++c) acc += net.weights[l](r, c) * a[c];
      z[r] = acc;
    }
    if (l + 1 < net.layer_count()) {
      for (Eigen::Index r = 0; r < z.size(); ++r)
        z[r] = net.hidden_act == Act::Tanh ? std::tanh(z[r]) : std::max(0.0, z[r]);
    }
    a = z;
  }
  return a;
}

}  // namespace

TEST_CASE("mlp_forward basics") {
  Mlp zero = make_zero_mlp({3, 4, 2}, Act::Tanh);
  CHECK(zero.forward(VectorXd::Ones(3)).norm() == 0.0);

  // Single affine layer with identity weights passes the input through.
  Mlp lin = make_zero_mlp({3, 3}, Act::Tanh);
  lin.weights[0] = MatrixXd::Identity(3, 3);
  VectorXd u(3);
  u << 0.5, -1.0, 2.0;
  CHECK((lin.forward(u) - u).norm() == 0.0);
}

TEST_CASE("mlp_forward matches naive re-implementation") {
  RngStream rng(101, 0);
  Mlp net = make_mlp({3, 16, 2}, Act::Tanh, rng);
  for (int l = 0; l < net.layer_count(); ++l) net.biases[l] = rng.normal_vec(net.sizes[l + 1]);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd u = rng.normal_vec(3);
    CHECK((net.forward(u) - naive_forward(net, u)).norm() < 1e-12);
  }
}

TEST_CASE("mlp_vjp linear case and zero cotangent") {
  RngStream rng(102, 0);
  Mlp lin = make_mlp({4, 3}, Act::Tanh, rng);
  VectorXd u = rng.normal_vec(4);
  VectorXd cot = rng.normal_vec(3);
  VectorXd gp, gx;
  lin.vjp(u, cot, gp, gx);
  CHECK((gx - lin.weights[0].transpose() * cot).norm() < 1e-14);

  lin.vjp(u, VectorXd::Zero(3), gp, gx);
  CHECK(gp.norm() == 0.0);
  CHECK(gx.norm() == 0.0);
}

TEST_CASE("mlp_vjp matches finite differences across architecture grid") {
  RngStream rng(103, 0);
  std::vector<std::vector<int>> archs = {
      {1, 1, 1}, {1, 8, 1}, {8, 8, 3}, {3, 100, 2}, {2, 8, 8, 2}, {4, 100, 100, 1}};
  for (const auto& sizes : archs) {
    for (Act act : {Act::Tanh, Act::Relu}) {
      for (int rep = 0; rep < 20; ++rep) {
        Mlp net = make_mlp(sizes, act, rng);
        for (int l = 0; l < net.layer_count(); ++l)
          net.biases[l] = 0.3 * rng.normal_vec(net.sizes[l + 1]);
        VectorXd u = rng.normal_vec(sizes.front());
        VectorXd cot = rng.normal_vec(sizes.back());
        VectorXd gp, gx;
        net.vjp(u, cot, gp, gx);

        Mlp probe = net;
        VectorXd fd_params = math::finite_diff_grad(
            [&](const VectorXd& p) {
              probe.set_params_flat(p);
              return cot.dot(probe.forward(u));
            },
            net.params_flat());
        VectorXd fd_input = math::finite_diff_grad(
            [&](const VectorXd& uu) { return cot.dot(net.forward(uu)); }, u);
        CHECK(math::rel_err(gp, fd_params) < 1e-5);
        CHECK(math::rel_err(gx, fd_input) < 1e-5);
      }
    }
  }
}

TEST_CASE("flatten/unflatten round-trips exactly") {
  RngStream rng(104, 0);
  Mlp net = make_mlp({3, 8, 100, 2}, Act::Relu, rng);
  for (int l = 0; l < net.layer_count(); ++l) net.biases[l] = rng.normal_vec(net.sizes[l + 1]);
  VectorXd flat = net.params_flat();
  Mlp other = make_zero_mlp({3, 8, 100, 2}, Act::Relu);
  other.set_params_flat(flat);
  CHECK((other.params_flat() - flat).norm() == 0.0);
  VectorXd u = rng.normal_vec(3);
  CHECK((other.forward(u) - net.forward(u)).norm() == 0.0);
}

TEST_CASE("sgd_step closed-form cases") {
  RngStream rng(105, 0);
  Mlp net = make_mlp({2, 3}, Act::Tanh, rng);
  VectorXd before = net.params_flat();

  Mlp a = net;
  sgd_step(a, rng.normal_vec(net.param_count()), 0.0);
  CHECK((a.params_flat() - before).norm() == 0.0);

  Mlp b = net;
  sgd_step(b, VectorXd::Zero(net.param_count()), 0.5);
  CHECK((b.params_flat() - before).norm() == 0.0);

  // One step on f(w) = 0.5 ||w||^2 shrinks parameters by (1 - lr).
  Mlp c = net;
  sgd_step(c, c.params_flat(), 0.1);
  CHECK((c.params_flat() - 0.9 * before).norm() < 1e-14);
}
