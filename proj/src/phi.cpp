#include "ovf/phi.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ovf::vfam {

int PhiStep::kernel_mean_param_count() const {
  if (!has_kernel()) return 0;
  if (kernel_is_affine()) return dim() * dim() + dim();
  return mlp().net.param_count();
}

int PhiStep::kernel_param_count() const {
  return has_kernel() ? kernel_mean_param_count() + dim() : 0;
}

VectorXd PhiStep::flat() const {
  VectorXd v(flat_size());
  const int d = dim();
  v.head(d) = mu;
  v.segment(d, d) = log_sigma;
  if (!has_kernel()) return v;
  Eigen::Index off = kernel_offset();
  if (kernel_is_affine()) {
    const auto& k = affine();
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) v[off++] = k.W(r, c);
    v.segment(off, d) = k.b;
    off += d;
    v.segment(off, d) = k.log_sigma_t;
  } else {
    const auto& k = mlp();
    v.segment(off, k.net.param_count()) = k.net.params_flat();
    off += k.net.param_count();
    v.segment(off, d) = k.log_sigma_t;
  }
  return v;
}

void PhiStep::set_flat(const VectorXd& v) {
  require(v.size() == flat_size(), "PhiStep::set_flat: length mismatch");
  const int d = dim();
  mu = v.head(d);
  log_sigma = v.segment(d, d);
  if (!has_kernel()) return;
  Eigen::Index off = kernel_offset();
  if (kernel_is_affine()) {
    auto& k = affine();
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) k.W(r, c) = v[off++];
    k.b = v.segment(off, d);
    off += d;
    k.log_sigma_t = v.segment(off, d);
  } else {
    auto& k = mlp();
    k.net.set_params_flat(v.segment(off, k.net.param_count()));
    off += k.net.param_count();
    k.log_sigma_t = v.segment(off, d);
  }
}

VectorXd marginal_sample(const PhiStep& phi, const VectorXd& eps) {
  require(eps.size() == phi.dim(), "marginal_sample: eps dimension mismatch");
  return phi.mu + (phi.log_sigma.array().exp() * eps.array()).matrix();
}

VectorXd backward_mean(const PhiStep& phi, const VectorXd& x_t) {
  require(phi.has_kernel(), "backward_mean: step has no kernel");
  require(x_t.size() == phi.dim(), "backward_mean: dimension mismatch");
  if (phi.kernel_is_affine()) return phi.affine().W * x_t + phi.affine().b;
  return phi.mlp().net.forward(x_t);
}

VectorXd backward_sample(const PhiStep& phi, const VectorXd& x_t, const VectorXd& eps) {
  require(eps.size() == phi.dim(), "backward_sample: eps dimension mismatch");
  const VectorXd& ls = phi.kernel_is_affine() ? phi.affine().log_sigma_t
                                              : phi.mlp().log_sigma_t;
  return backward_mean(phi, x_t) + (ls.array().exp() * eps.array()).matrix();
}

double marginal_logpdf(const PhiStep& phi, const VectorXd& x) {
  return math::diag_logpdf(x, phi.mu, phi.log_sigma);
}

MarginalGrad marginal_logpdf_grad(const PhiStep& phi, const VectorXd& x) {
  math::DiagLogpdfGrad g = math::diag_logpdf_grad(x, phi.mu, phi.log_sigma);
  return MarginalGrad{g.value, std::move(g.dx), std::move(g.dmean),
                      std::move(g.dlog_sigma)};
}

double backward_logpdf(const PhiStep& phi, const VectorXd& x_prev, const VectorXd& x_t) {
  const VectorXd& ls = phi.kernel_is_affine() ? phi.affine().log_sigma_t
                                              : phi.mlp().log_sigma_t;
  return math::diag_logpdf(x_prev, backward_mean(phi, x_t), ls);
}

BackwardGrad backward_logpdf_grad(const PhiStep& phi, const VectorXd& x_prev,
                                  const VectorXd& x_t) {
  const int d = phi.dim();
  const VectorXd& ls = phi.kernel_is_affine() ? phi.affine().log_sigma_t
                                              : phi.mlp().log_sigma_t;
  VectorXd mean = backward_mean(phi, x_t);
  math::DiagLogpdfGrad g = math::diag_logpdf_grad(x_prev, mean, ls);

  BackwardGrad out;
  out.value = g.value;
  out.dx_prev = std::move(g.dx);
  out.dkernel = VectorXd::Zero(phi.kernel_param_count());
  if (phi.kernel_is_affine()) {
    const auto& k = phi.affine();
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) out.dkernel[r * d + c] = g.dmean[r] * x_t[c];
    out.dkernel.segment(d * d, d) = g.dmean;
    out.dx_t = k.W.transpose() * g.dmean;
  } else {
    VectorXd gp, gx;
    phi.mlp().net.vjp(x_t, g.dmean, gp, gx);
    out.dkernel.head(gp.size()) = gp;
    out.dx_t = std::move(gx);
  }
  out.dkernel.tail(d) = g.dlog_sigma;
  return out;
}

void backward_sample_vjp(const PhiStep& phi, const VectorXd& x_t, const VectorXd& eps,
                         const VectorXd& cot, VectorXd& grad_kernel, VectorXd& grad_x_t) {
  require(cot.size() == phi.dim(), "backward_sample_vjp: cotangent dimension mismatch");
  const int d = phi.dim();
  grad_kernel = VectorXd::Zero(phi.kernel_param_count());
  if (phi.kernel_is_affine()) {
    const auto& k = phi.affine();
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) grad_kernel[r * d + c] = cot[r] * x_t[c];
    grad_kernel.segment(d * d, d) = cot;
    grad_kernel.tail(d) =
        (cot.array() * k.log_sigma_t.array().exp() * eps.array()).matrix();
    grad_x_t = k.W.transpose() * cot;
  } else {
    const auto& k = phi.mlp();
    VectorXd gp;
    phi.mlp().net.vjp(x_t, cot, gp, grad_x_t);
    grad_kernel.head(gp.size()) = gp;
    grad_kernel.tail(d) =
        (cot.array() * k.log_sigma_t.array().exp() * eps.array()).matrix();
  }
}

double pseudo_transition_logpdf(const PhiStep& phi_t, const PhiStep& phi_tp1,
                                const VectorXd& x_t, const VectorXd& x_tp1) {
  return backward_logpdf(phi_tp1, x_t, x_tp1) + marginal_logpdf(phi_tp1, x_tp1) -
         marginal_logpdf(phi_t, x_t);
}

PseudoTransitionGrad pseudo_transition_logpdf_grad(const PhiStep& phi_t,
                                                   const PhiStep& phi_tp1,
                                                   const VectorXd& x_t,
                                                   const VectorXd& x_tp1) {
  const int d = phi_t.dim();
  BackwardGrad bg = backward_logpdf_grad(phi_tp1, x_t, x_tp1);
  MarginalGrad mg_tp1 = marginal_logpdf_grad(phi_tp1, x_tp1);
  MarginalGrad mg_t = marginal_logpdf_grad(phi_t, x_t);

  PseudoTransitionGrad out;
  out.value = bg.value + mg_tp1.value - mg_t.value;
  out.dx_t = bg.dx_prev - mg_t.dx;
  out.dx_tp1 = bg.dx_t + mg_tp1.dx;
  out.dphi_t = VectorXd::Zero(phi_t.flat_size());
  out.dphi_t.head(d) = -mg_t.dmu;
  out.dphi_t.segment(d, d) = -mg_t.dlog_sigma;
  out.dphi_tp1 = VectorXd::Zero(phi_tp1.flat_size());
  out.dphi_tp1.head(d) = mg_tp1.dmu;
  out.dphi_tp1.segment(d, d) = mg_tp1.dlog_sigma;
  out.dphi_tp1.segment(phi_tp1.kernel_offset(), phi_tp1.kernel_param_count()) = bg.dkernel;
  return out;
}

math::GaussianDist affine_pair_joint(const PhiStep& phi_t) {
  require(phi_t.kernel_is_affine(), "affine_pair_joint: affine kernel required");
  const int d = phi_t.dim();
  const auto& k = phi_t.affine();
  VectorXd var_t = (2.0 * phi_t.log_sigma.array()).exp().matrix();
  VectorXd var_b = (2.0 * k.log_sigma_t.array()).exp().matrix();

  VectorXd mean(2 * d);
  mean.head(d) = k.W * phi_t.mu + k.b;
  mean.tail(d) = phi_t.mu;
  MatrixXd cov(2 * d, 2 * d);
  MatrixXd WD = k.W * var_t.asDiagonal();
  cov.topLeftCorner(d, d) = WD * k.W.transpose() + MatrixXd(var_b.asDiagonal());
  cov.topRightCorner(d, d) = WD;
  cov.bottomLeftCorner(d, d) = WD.transpose();
  cov.bottomRightCorner(d, d) = var_t.asDiagonal();
  return math::GaussianDist::dense(std::move(mean), std::move(cov));
}

std::vector<math::GaussianDist> affine_chain_marginals(const PhiTrajectory& traj) {
  const int T = traj.length();
  std::vector<math::GaussianDist> out(T ? T : 0,
                                      math::GaussianDist::diagonal(VectorXd(), VectorXd()));
  if (T == 0) return out;
  const PhiStep& last = traj.steps.back();
  VectorXd mean = last.mu;
  MatrixXd cov = ((2.0 * last.log_sigma.array()).exp()).matrix().asDiagonal();
  out[T - 1] = math::GaussianDist::dense(mean, cov);
  for (int k = T - 2; k >= 0; --k) {
    const PhiStep& next = traj.steps[k + 1];
    require(next.kernel_is_affine(), "affine_chain_marginals: affine kernels required");
    const auto& ker = next.affine();
    VectorXd var_b = (2.0 * ker.log_sigma_t.array()).exp().matrix();
    mean = ker.W * mean + ker.b;
    cov = ker.W * cov * ker.W.transpose() + MatrixXd(var_b.asDiagonal());
    out[k] = math::GaussianDist::dense(mean, cov);
  }
  return out;
}

void attach_affine_kernel(PhiStep& phi, const PhiStep& prev) {
  AffineKernel k;
  k.W = MatrixXd::Zero(phi.dim(), phi.dim());
  k.b = prev.mu;
  k.log_sigma_t = prev.log_sigma;
  phi.kernel = k;
}

void attach_mlp_kernel(PhiStep& phi, const PhiStep& prev, int hidden, nn::Act act,
                       RngStream& rng) {
  MlpKernel k;
  k.net = nn::make_mlp({phi.dim(), hidden, phi.dim()}, act, rng);
  k.net.biases.back() = prev.mu;
  k.log_sigma_t = prev.log_sigma;
  phi.kernel = std::move(k);
}

void save_phi_trajectory(const PhiTrajectory& traj, const std::string& csv_path,
                         const std::string& json_path) {
  nlohmann::json meta;
  meta["steps"] = nlohmann::json::array();
  std::ofstream csv(csv_path);
  require(csv.good(), "save_phi_trajectory: cannot open " + csv_path);
  csv.precision(17);
  for (const PhiStep& s : traj.steps) {
    nlohmann::json js;
    js["dim"] = s.dim();
    if (!s.has_kernel()) {
      js["kernel"] = "none";
    } else if (s.kernel_is_affine()) {
      js["kernel"] = "affine";
    } else {
      js["kernel"] = "mlp";
      js["mlp_sizes"] = s.mlp().net.sizes;
      js["mlp_act"] = s.mlp().net.hidden_act == nn::Act::Tanh ? "tanh" : "relu";
    }
    meta["steps"].push_back(js);
    VectorXd v = s.flat();
    for (Eigen::Index i = 0; i < v.size(); ++i) csv << (i ? "," : "") << v[i];
    csv << "\n";
  }
  std::ofstream j(json_path);
  require(j.good(), "save_phi_trajectory: cannot open " + json_path);
  j << meta.dump(2) << "\n";
}

PhiTrajectory load_phi_trajectory(const std::string& csv_path, const std::string& json_path) {
  std::ifstream j(json_path);
  require(j.good(), "load_phi_trajectory: cannot open " + json_path);
  nlohmann::json meta = nlohmann::json::parse(j);
  std::ifstream csv(csv_path);
  require(csv.good(), "load_phi_trajectory: cannot open " + csv_path);

  PhiTrajectory traj;
  std::string line;
  for (const auto& js : meta["steps"]) {
    require(static_cast<bool>(std::getline(csv, line)),
            "load_phi_trajectory: csv shorter than sidecar");
    int d = js["dim"].get<int>();
    PhiStep s;
    s.mu = VectorXd::Zero(d);
    s.log_sigma = VectorXd::Zero(d);
    std::string kind = js["kernel"].get<std::string>();
    if (kind == "affine") {
      AffineKernel k;
      k.W = MatrixXd::Zero(d, d);
      k.b = VectorXd::Zero(d);
      k.log_sigma_t = VectorXd::Zero(d);
      s.kernel = std::move(k);
    } else if (kind == "mlp") {
      MlpKernel k;
      k.net = nn::make_zero_mlp(js["mlp_sizes"].get<std::vector<int>>(),
                                js["mlp_act"] == "tanh" ? nn::Act::Tanh : nn::Act::Relu);
      k.log_sigma_t = VectorXd::Zero(d);
      s.kernel = std::move(k);
    }
    VectorXd flat(s.flat_size());
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index i = 0;
    while (std::getline(ss, cell, ',')) {
      require(i < flat.size(), "load_phi_trajectory: row too long");
      flat[i++] = std::stod(cell);
    }
    require(i == flat.size(), "load_phi_trajectory: row too short");
    s.set_flat(flat);
    traj.steps.push_back(std::move(s));
  }
  return traj;
}

}  // namespace ovf::vfam
