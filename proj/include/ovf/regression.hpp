#ifndef OVF_REGRESSION_HPP
#define OVF_REGRESSION_HPP

#include "ovf/common.hpp"
#include "ovf/mlp.hpp"
#include "ovf/rng.hpp"

#include <string>
#include <variant>

namespace ovf::reg {

struct RegressionDataset {
  MatrixXd inputs;   // N x d_in
  MatrixXd targets;  // N x d_out
  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int output_dim() const { return static_cast<int>(targets.cols()); }
  void validate() const;
  void dump_csv(const std::string& path) const;
};

enum class KernelFamily { Rbf, Matern52 };

struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  double log_bandwidth = 0.0;
  double ridge_lambda = 0.1;
  // Set when select_bandwidth hit a degenerate kernel matrix and kept the
  // initial spec.
  bool degenerate_fallback = false;
};

double kernel_eval(const KernelSpec& spec, const VectorXd& a, const VectorXd& b);
// K_ij = k(A_i, B_j) for row-stacked inputs.
MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& A, const MatrixXd& B);
// Elementwise derivative of kernel_matrix w.r.t. log_bandwidth.
MatrixXd kernel_matrix_dlogbw(const KernelSpec& spec, const MatrixXd& A, const MatrixXd& B);

struct KrrModel {
  MatrixXd support;      // P x d_in
  MatrixXd coeff;        // d_out x P, fitted on mean-centered targets
  VectorXd target_mean;  // added back at prediction time
  KernelSpec spec;
};

enum class RegLoss { Mse, DirLogMag };

struct MlpRegModel {
  nn::Mlp net;
  RegLoss loss = RegLoss::Mse;
};

// Base case of every recursion: predicts the zero vector.
struct ZeroApprox {
  int out_dim = 0;
};

// Arbitrary callable backend; lets exact reference functions stand in for a
// fitted model (test oracles, closed-form special cases).
struct FuncModel {
  std::function<VectorXd(const VectorXd&)> fn;
  int out_dim = 0;
};

// A fitted function approximator for the value/gradient recursions.
struct GradApprox {
  std::variant<ZeroApprox, KrrModel, MlpRegModel, FuncModel> backend;

  static GradApprox zero(int out_dim);
  static GradApprox from_function(std::function<VectorXd(const VectorXd&)> fn,
                                  int out_dim);
  bool is_zero() const { return std::holds_alternative<ZeroApprox>(backend); }
  const KrrModel& krr() const { return std::get<KrrModel>(backend); }
  int output_dim() const;
  VectorXd predict(const VectorXd& x) const;
  MatrixXd predict_batch(const MatrixXd& X) const;  // row per input
};

GradApprox krr_fit(const RegressionDataset& data, const KernelSpec& spec);

// Standard starting point for the bandwidth: median pairwise distance over a
// subsample of the inputs.
double median_heuristic_log_bandwidth(const MatrixXd& inputs, RngStream rng,
                                      int max_pairs = 500);

// Gradient descent on validation MSE w.r.t. log_bandwidth using the analytic
// derivative of the KRR prediction through the kernel matrices. Returns the
// best spec seen; falls back to the input spec (flagged) on degenerate
// kernel matrices.
KernelSpec select_bandwidth(const RegressionDataset& train, const RegressionDataset& val,
                            const KernelSpec& spec, int iters, int minibatch, double lr,
                            RngStream rng);

// Minibatch SGD on MSE or the direction + log-magnitude loss. For DirLogMag
// the net output dimension is d_out + 1 (direction head, renormalized at
// prediction time, plus a log-magnitude head).
GradApprox mlp_regressor_fit(const RegressionDataset& data, nn::Mlp net, RegLoss loss,
                             int epochs, int batch, double lr, RngStream rng);

}  // namespace ovf::reg

#endif  // OVF_REGRESSION_HPP
