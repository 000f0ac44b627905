#ifndef OVF_GAUSSIAN_HPP
#define OVF_GAUSSIAN_HPP

#include "ovf/common.hpp"

namespace ovf::math {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Gaussian with either diagonal (variances) or dense SPD covariance.
struct GaussianDist {
  VectorXd mean;
  bool is_diag = true;
  VectorXd var;   // used when is_diag
  MatrixXd cov;   // used when !is_diag

  static GaussianDist diagonal(VectorXd mean, VectorXd variances);
  static GaussianDist diagonal_log_sigma(const VectorXd& mean, const VectorXd& log_sigma);
  static GaussianDist dense(VectorXd mean, MatrixXd cov);

  int dim() const { return static_cast<int>(mean.size()); }
  MatrixXd cov_dense() const;
  // Checks the type invariants: finite mean, strictly positive variances,
  // symmetric dense covariance with a successful Cholesky factorization.
  void validate() const;
};

// log N(x; mean, diag(exp(log_sigma)^2)). Hot-path form used by the
// variational family; log-scale parameterization keeps sigma > 0 structurally.
double diag_logpdf(const VectorXd& x, const VectorXd& mean, const VectorXd& log_sigma);

struct DiagLogpdfGrad {
  double value = 0.0;
  VectorXd dx;
  VectorXd dmean;
  VectorXd dlog_sigma;  // chain-ruled through sigma = exp(log_sigma)
};
DiagLogpdfGrad diag_logpdf_grad(const VectorXd& x, const VectorXd& mean,
                                const VectorXd& log_sigma);

double gaussian_logpdf(const VectorXd& x, const GaussianDist& dist);

struct GaussLogpdfGrad {
  double value = 0.0;
  VectorXd dx;
  VectorXd dmean;
  VectorXd dlog_sigma;  // empty for dense covariance
};
GaussLogpdfGrad gaussian_logpdf_grad(const VectorXd& x, const GaussianDist& dist);

// Closed-form KL(p || q); handles diagonal and dense operands in any mix.
double gaussian_kl(const GaussianDist& p, const GaussianDist& q);

// Solves A X = B for SPD A via Cholesky; throws NumericalError when the
// factorization fails (non-SPD input).
MatrixXd spd_solve(const MatrixXd& A, const MatrixXd& B);

}  // namespace ovf::math

#endif  // OVF_GAUSSIAN_HPP
