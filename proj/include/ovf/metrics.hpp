#ifndef OVF_METRICS_HPP
#define OVF_METRICS_HPP

#include "ovf/common.hpp"

#include <limits>
#include <string>
#include <vector>

namespace ovf::bench {

// One row of the per-step metrics stream; NaN fields are written as empty
// cells and mean "not applicable to this method/experiment".
struct MetricsRow {
  int t = 0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double pair_kl = std::numeric_limits<double>::quiet_NaN();
  double mae_f = std::numeric_limits<double>::quiet_NaN();
  double mae_g = std::numeric_limits<double>::quiet_NaN();
  double relbo = std::numeric_limits<double>::quiet_NaN();
  double step_ms = std::numeric_limits<double>::quiet_NaN();
};

inline const char* kMetricsHeader = "t,rmse,pair_kl,mae_f,mae_g,relbo,step_ms";

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Root mean squared error between an estimate and the truth, per time step.
double rmse(const VectorXd& estimate, const VectorXd& truth);
// Elementwise mean absolute error between matrices.
double mat_mae(const MatrixXd& a, const MatrixXd& b);

}  // namespace ovf::bench

#endif  // OVF_METRICS_HPP
