#include "ovf/regression.hpp"

#include "ovf/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace ovf::reg {

void RegressionDataset::validate() const {
  require(inputs.rows() == targets.rows(), "RegressionDataset: row count mismatch");
  require(inputs.allFinite() && targets.allFinite(),
          "RegressionDataset: non-finite entries");
}

void RegressionDataset::dump_csv(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "RegressionDataset::dump_csv: cannot open " + path);
  for (int j = 1; j <= input_dim(); ++j) out << (j > 1 ? "," : "") << "x_" << j;
  for (int j = 1; j <= output_dim(); ++j) out << ",target_" << j;
  out << "\n";
  out.precision(17);
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < input_dim(); ++j) out << (j ? "," : "") << inputs(i, j);
    for (int j = 0; j < output_dim(); ++j) out << "," << targets(i, j);
    out << "\n";
  }
}

namespace {

double kernel_from_dist(const KernelSpec& spec, double r) {
  double ell = std::exp(spec.log_bandwidth);
  if (spec.family == KernelFamily::Rbf) {
    double z = r / ell;
    return std::exp(-0.5 * z * z);
  }
  double u = std::sqrt(5.0) * r / ell;
  return (1.0 + u + u * u / 3.0) * std::exp(-u);
}

// d/d(log ell) of kernel_from_dist
double kernel_dlogbw_from_dist(const KernelSpec& spec, double r) {
  double ell = std::exp(spec.log_bandwidth);
  if (spec.family == KernelFamily::Rbf) {
    double z = r / ell;
    return std::exp(-0.5 * z * z) * z * z;
  }
  double u = std::sqrt(5.0) * r / ell;
  return (u * u / 3.0) * (1.0 + u) * std::exp(-u);
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const VectorXd& a, const VectorXd& b) {
  return kernel_from_dist(spec, (a - b).norm());
}

MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& A, const MatrixXd& B) {
  MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j)
      K(i, j) = kernel_from_dist(spec, (A.row(i) - B.row(j)).norm());
  return K;
}

MatrixXd kernel_matrix_dlogbw(const KernelSpec& spec, const MatrixXd& A, const MatrixXd& B) {
  MatrixXd D(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j)
      D(i, j) = kernel_dlogbw_from_dist(spec, (A.row(i) - B.row(j)).norm());
  return D;
}

GradApprox GradApprox::zero(int out_dim) {
  GradApprox g;
  g.backend = ZeroApprox{out_dim};
  return g;
}

GradApprox GradApprox::from_function(std::function<VectorXd(const VectorXd&)> fn,
                                     int out_dim) {
  GradApprox g;
  g.backend = FuncModel{std::move(fn), out_dim};
  return g;
}

int GradApprox::output_dim() const {
  if (is_zero()) return std::get<ZeroApprox>(backend).out_dim;
  if (std::holds_alternative<KrrModel>(backend))
    return static_cast<int>(std::get<KrrModel>(backend).coeff.rows());
  if (std::holds_alternative<FuncModel>(backend))
    return std::get<FuncModel>(backend).out_dim;
  const auto& m = std::get<MlpRegModel>(backend);
  return m.loss == RegLoss::DirLogMag ? m.net.output_dim() - 1 : m.net.output_dim();
}

VectorXd GradApprox::predict(const VectorXd& x) const {
  if (is_zero()) return VectorXd::Zero(output_dim());
  if (std::holds_alternative<FuncModel>(backend))
    return std::get<FuncModel>(backend).fn(x);
  if (std::holds_alternative<KrrModel>(backend)) {
    const auto& m = std::get<KrrModel>(backend);
    VectorXd kstar(m.support.rows());
    for (Eigen::Index i = 0; i < m.support.rows(); ++i)
      kstar[i] = kernel_from_dist(m.spec, (m.support.row(i).transpose() - x).norm());
    return m.coeff * kstar + m.target_mean;
  }
  const auto& m = std::get<MlpRegModel>(backend);
  VectorXd out = m.net.forward(x);
  if (m.loss == RegLoss::Mse) return out;
  const int d = m.net.output_dim() - 1;
  VectorXd dir = out.head(d);
  double norm = std::max(dir.norm(), 1e-12);
  return (std::exp(out[d]) / norm) * dir;
}

MatrixXd GradApprox::predict_batch(const MatrixXd& X) const {
  MatrixXd out(X.rows(), output_dim());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    out.row(i) = predict(X.row(i).transpose()).transpose();
  return out;
}

GradApprox krr_fit(const RegressionDataset& data, const KernelSpec& spec) {
  data.validate();
  require(data.size() >= 1, "krr_fit: empty dataset");
  require(spec.ridge_lambda > 0, "krr_fit: ridge_lambda must be positive");
  const int P = data.size();
  MatrixXd K = kernel_matrix(spec, data.inputs, data.inputs);
  K.diagonal().array() += P * spec.ridge_lambda;
  // Centering keeps constant target components exact; the ridge otherwise
  // shrinks them toward zero, which matters for cumulative value targets.
  VectorXd mean = data.targets.colwise().mean();
  MatrixXd centered = data.targets.rowwise() - mean.transpose();
  MatrixXd sol = math::spd_solve(K, centered);  // P x d_out
  KrrModel model;
  model.support = data.inputs;
  model.coeff = sol.transpose();
  model.target_mean = mean;
  model.spec = spec;
  GradApprox g;
  g.backend = std::move(model);
  return g;
}

double median_heuristic_log_bandwidth(const MatrixXd& inputs, RngStream rng,
                                      int max_pairs) {
  const int n = static_cast<int>(inputs.rows());
  require(n >= 2, "median_heuristic_log_bandwidth: need at least two points");
  std::vector<double> dists;
  dists.reserve(max_pairs);
  for (int k = 0; k < max_pairs; ++k) {
    int i = static_cast<int>(rng.uniform_index(n));
    int j = static_cast<int>(rng.uniform_index(n));
    if (i == j) continue;
    double d = (inputs.row(i) - inputs.row(j)).norm();
    if (d > 0) dists.push_back(d);
  }
  if (dists.empty()) return 0.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return std::log(dists[dists.size() / 2]);
}

KernelSpec select_bandwidth(const RegressionDataset& train, const RegressionDataset& val,
                            const KernelSpec& spec, int iters, int minibatch, double lr,
                            RngStream rng) {
  require(iters >= 0, "select_bandwidth: iters must be >= 0");
  if (iters == 0 || val.size() == 0) return spec;
  const int P = train.size();

  KernelSpec cur = spec;
  KernelSpec best = spec;
  double best_mse = std::numeric_limits<double>::infinity();
  VectorXd tmean = train.targets.colwise().mean();
  MatrixXd centered = train.targets.rowwise() - tmean.transpose();

  for (int it = 0; it < iters; ++it) {
    MatrixXd K = kernel_matrix(cur, train.inputs, train.inputs);
    K.diagonal().array() += P * cur.ridge_lambda;
    Eigen::LLT<MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) {
      KernelSpec out = spec;
      out.degenerate_fallback = true;
      return out;
    }
    MatrixXd coeff = llt.solve(centered).transpose();  // d_out x P
    MatrixXd dK = kernel_matrix_dlogbw(cur, train.inputs, train.inputs);

    // Full-set validation MSE for best-seen tracking.
    MatrixXd Kval = kernel_matrix(cur, train.inputs, val.inputs);  // P x n_val
    MatrixXd preds = (coeff * Kval).transpose().rowwise() + tmean.transpose();
    double mse = (preds - val.targets).squaredNorm() / val.size();
    if (mse < best_mse) {
      best_mse = mse;
      best = cur;
    }

    // Minibatch gradient of the validation MSE w.r.t. log_bandwidth.
    double grad = 0.0;
    int m = std::min(minibatch, val.size());
    for (int b = 0; b < m; ++b) {
      int idx = static_cast<int>(rng.uniform_index(val.size()));
      VectorXd xs = val.inputs.row(idx).transpose();
      VectorXd kstar(P), dkstar(P);
      for (int i = 0; i < P; ++i) {
        double r = (train.inputs.row(i).transpose() - xs).norm();
        kstar[i] = kernel_from_dist(cur, r);
        dkstar[i] = kernel_dlogbw_from_dist(cur, r);
      }
      VectorXd alpha = llt.solve(kstar);
      VectorXd pred = coeff * kstar + tmean;
      VectorXd dpred = coeff * (dkstar - dK * alpha);
      VectorXd resid = pred - val.targets.row(idx).transpose();
      grad += 2.0 * resid.dot(dpred) / m;
    }
    cur.log_bandwidth -= lr * grad;
  }

  // Score the final iterate too.
  MatrixXd K = kernel_matrix(cur, train.inputs, train.inputs);
  K.diagonal().array() += P * cur.ridge_lambda;
  Eigen::LLT<MatrixXd> llt(K);
  if (llt.info() == Eigen::Success) {
    MatrixXd coeff = llt.solve(centered).transpose();
    MatrixXd Kval = kernel_matrix(cur, train.inputs, val.inputs);
    MatrixXd preds = (coeff * Kval).transpose().rowwise() + tmean.transpose();
    double mse = (preds - val.targets).squaredNorm() / val.size();
    if (mse < best_mse) best = cur;
  }
  return best;
}

GradApprox mlp_regressor_fit(const RegressionDataset& data, nn::Mlp net, RegLoss loss,
                             int epochs, int batch, double lr, RngStream rng) {
  data.validate();
  require(net.input_dim() == data.input_dim(), "mlp_regressor_fit: input dim mismatch");
  const int expected_out =
      loss == RegLoss::DirLogMag ? data.output_dim() + 1 : data.output_dim();
  require(net.output_dim() == expected_out, "mlp_regressor_fit: output dim mismatch");
  require(batch >= 1, "mlp_regressor_fit: batch must be >= 1");

  const int N = data.size();
  VectorXd grad = VectorXd::Zero(net.param_count());
  VectorXd gp, gx;
  for (int e = 0; e < epochs; ++e) {
    grad.setZero();
    int m = std::min(batch, N);
    double loss_val = 0.0;
    for (int b = 0; b < m; ++b) {
      int idx = static_cast<int>(rng.uniform_index(N));
      VectorXd x = data.inputs.row(idx).transpose();
      VectorXd y = data.targets.row(idx).transpose();
      VectorXd out = net.forward(x);
      VectorXd cot(out.size());
      if (loss == RegLoss::Mse) {
        VectorXd resid = out - y;
        loss_val += resid.squaredNorm() / m;
        cot = 2.0 * resid / m;
      } else {
        const int d = static_cast<int>(y.size());
        VectorXd u = out.head(d);
        double lm = out[d];
        double ynorm = y.norm();
        double unorm = std::max(u.norm(), 1e-12);
        double target_lm = std::log(std::max(ynorm, 1e-12));
        VectorXd yhat = ynorm > 0 ? VectorXd(y / ynorm) : VectorXd::Zero(d);
        double cossim = u.dot(yhat) / unorm;
        loss_val += (-cossim + (lm - target_lm) * (lm - target_lm)) / m;
        VectorXd dcos = yhat / unorm - (u.dot(yhat) / (unorm * unorm * unorm)) * u;
        cot.head(d) = -dcos / m;
        cot[d] = 2.0 * (lm - target_lm) / m;
      }
      net.vjp(x, cot, gp, gx);
      grad += gp;
    }
    if (!std::isfinite(loss_val))
      throw NumericalError("mlp_regressor_fit: non-finite loss at epoch " +
                           std::to_string(e));
    nn::sgd_step(net, grad, lr);
  }
  GradApprox g;
  g.backend = MlpRegModel{std::move(net), loss};
  return g;
}

}  // namespace ovf::reg
