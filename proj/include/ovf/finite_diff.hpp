#ifndef OVF_FINITE_DIFF_HPP
#define OVF_FINITE_DIFF_HPP

#include "ovf/common.hpp"

#include <cmath>
#include <string>

namespace ovf::math {

// Central-difference gradient of a scalar function; O(h^2) error for smooth f.
template <typename F>
VectorXd finite_diff_grad(F&& f, const VectorXd& x, double h = 1e-5) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    double fp = f(xp);
    xp[i] = x[i] - h;
    double fm = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("finite_diff_grad: non-finite evaluation at coordinate " +
                  std::to_string(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central-difference Jacobian of a vector-valued function, one column per
// input coordinate.
template <typename F>
MatrixXd finite_diff_jacobian(F&& f, const VectorXd& x, double h = 1e-5) {
  VectorXd xp = x;
  xp[0] = x[0] + h;
  VectorXd probe = f(xp);
  xp[0] = x[0];
  MatrixXd J(probe.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    VectorXd fp = f(xp);
    xp[i] = x[i] - h;
    VectorXd fm = f(xp);
    xp[i] = x[i];
    if (!fp.allFinite() || !fm.allFinite())
      throw Error("finite_diff_jacobian: non-finite evaluation at coordinate " +
                  std::to_string(i));
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  return J;
}

inline double rel_err(double got, double want) {
  double denom = std::max(std::abs(want), 1e-12);
  return std::abs(got - want) / denom;
}

inline double rel_err(const VectorXd& got, const VectorXd& want) {
  double denom = std::max(want.norm(), 1e-12);
  return (got - want).norm() / denom;
}

}  // namespace ovf::math

#endif  // OVF_FINITE_DIFF_HPP
