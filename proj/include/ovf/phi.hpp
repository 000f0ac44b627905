#ifndef OVF_PHI_HPP
#define OVF_PHI_HPP

#include "ovf/common.hpp"
#include "ovf/gaussian.hpp"
#include "ovf/mlp.hpp"
#include "ovf/rng.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ovf::vfam {

// Backward kernel q_t(x_{t-1} | x_t) = N(mean(x_t), diag(exp(log_sigma_t)^2))
// with an affine or MLP mean map. The kernel noise scale never depends on x_t.
struct AffineKernel {
  MatrixXd W;
  VectorXd b;
  VectorXd log_sigma_t;
};

struct MlpKernel {
  nn::Mlp net;  // dx -> dx
  VectorXd log_sigma_t;
};

// Per-time-step variational parameters: a diagonal-Gaussian filter marginal
// plus (for t >= 2) a backward kernel. The flat view is
// [mu, log_sigma, kernel mean params, kernel log_sigma_t]; affine mean params
// are [W row-major, b], MLP mean params are the net's flat parameters.
struct PhiStep {
  VectorXd mu;
  VectorXd log_sigma;
  std::optional<std::variant<AffineKernel, MlpKernel>> kernel;

  int dim() const { return static_cast<int>(mu.size()); }
  bool has_kernel() const { return kernel.has_value(); }
  bool kernel_is_affine() const {
    return has_kernel() && std::holds_alternative<AffineKernel>(*kernel);
  }
  const AffineKernel& affine() const { return std::get<AffineKernel>(*kernel); }
  AffineKernel& affine() { return std::get<AffineKernel>(*kernel); }
  const MlpKernel& mlp() const { return std::get<MlpKernel>(*kernel); }
  MlpKernel& mlp() { return std::get<MlpKernel>(*kernel); }

  int kernel_mean_param_count() const;
  int kernel_param_count() const;  // mean params + log_sigma_t
  int flat_size() const { return 2 * dim() + kernel_param_count(); }

  VectorXd flat() const;
  void set_flat(const VectorXd& v);

  // Offsets into the flat view.
  int mu_offset() const { return 0; }
  int log_sigma_offset() const { return dim(); }
  int kernel_offset() const { return 2 * dim(); }
  int kernel_log_sigma_offset() const { return 2 * dim() + kernel_mean_param_count(); }
};

struct PhiTrajectory {
  std::vector<PhiStep> steps;  // steps[k] holds phi_{k+1}
  int length() const { return static_cast<int>(steps.size()); }
};

// x_t = mu + exp(log_sigma) .* eps
VectorXd marginal_sample(const PhiStep& phi, const VectorXd& eps);

VectorXd backward_mean(const PhiStep& phi, const VectorXd& x_t);

// x_{t-1} = backward_mean(x_t) + exp(log_sigma_t) .* eps
VectorXd backward_sample(const PhiStep& phi, const VectorXd& x_t, const VectorXd& eps);

double marginal_logpdf(const PhiStep& phi, const VectorXd& x);

struct MarginalGrad {
  double value = 0.0;
  VectorXd dx;
  VectorXd dmu;
  VectorXd dlog_sigma;
};
MarginalGrad marginal_logpdf_grad(const PhiStep& phi, const VectorXd& x);

double backward_logpdf(const PhiStep& phi, const VectorXd& x_prev, const VectorXd& x_t);

struct BackwardGrad {
  double value = 0.0;
  VectorXd dx_prev;
  VectorXd dx_t;
  VectorXd dkernel;  // over the kernel block of the flat view
};
BackwardGrad backward_logpdf_grad(const PhiStep& phi, const VectorXd& x_prev,
                                  const VectorXd& x_t);

// Pulls a cotangent back through the reparameterized backward draw
// x_{t-1}(phi; eps, x_t): returns cot^T d x_{t-1} / d(kernel params) and
// cot^T d x_{t-1} / d x_t.
void backward_sample_vjp(const PhiStep& phi, const VectorXd& x_t, const VectorXd& eps,
                         const VectorXd& cot, VectorXd& grad_kernel, VectorXd& grad_x_t);

// log m_{t+1}(x_{t+1} | x_t) = log q_{t+1}(x_t | x_{t+1}) + log q_{t+1}(x_{t+1})
//                              - log q_t(x_t).
// Not a normalized transition density in general.
double pseudo_transition_logpdf(const PhiStep& phi_t, const PhiStep& phi_tp1,
                                const VectorXd& x_t, const VectorXd& x_tp1);

struct PseudoTransitionGrad {
  double value = 0.0;
  VectorXd dx_t;
  VectorXd dx_tp1;
  VectorXd dphi_t;    // flat over phi_t (marginal blocks only)
  VectorXd dphi_tp1;  // flat over phi_tp1
};
PseudoTransitionGrad pseudo_transition_logpdf_grad(const PhiStep& phi_t,
                                                   const PhiStep& phi_tp1,
                                                   const VectorXd& x_t,
                                                   const VectorXd& x_tp1);

// Gaussian joint over (x_{t-1}, x_t) implied by an affine-kernel step.
math::GaussianDist affine_pair_joint(const PhiStep& phi_t);

// Closed-form per-step marginals N(mean_k, cov_k) of x_k under the
// backward-factorized joint; affine kernels only. Index k matches steps[].
std::vector<math::GaussianDist> affine_chain_marginals(const PhiTrajectory& traj);

// Kernel construction when a step is first given a backward kernel. The
// affine version starts at the previous marginal (W = 0, b = prev mu); the
// MLP version biases its output layer at the previous marginal mean.
void attach_affine_kernel(PhiStep& phi, const PhiStep& prev);
void attach_mlp_kernel(PhiStep& phi, const PhiStep& prev, int hidden, nn::Act act,
                       RngStream& rng);

// Checkpointing: CSV of per-step flat vectors plus a JSON sidecar with shapes.
void save_phi_trajectory(const PhiTrajectory& traj, const std::string& csv_path,
                         const std::string& json_path);
PhiTrajectory load_phi_trajectory(const std::string& csv_path, const std::string& json_path);

}  // namespace ovf::vfam

#endif  // OVF_PHI_HPP
