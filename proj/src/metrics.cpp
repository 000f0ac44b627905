#include "ovf/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ovf::bench {

namespace {

void put(std::ostream& os, double v) {
  os << ",";
  if (std::isfinite(v)) os << v;
}

double take(const std::string& cell) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(cell);
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  require(out.good(), "write_metrics_csv: cannot open " + path);
  out.precision(12);
  out << kMetricsHeader << "\n";
  for (const MetricsRow& r : rows) {
    out << r.t;
    put(out, r.rmse);
    put(out, r.pair_kl);
    put(out, r.mae_f);
    put(out, r.mae_g);
    put(out, r.relbo);
    put(out, r.step_ms);
    out << "\n";
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_metrics_csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "read_metrics_csv: empty file");
  require(line == kMetricsHeader, "read_metrics_csv: unexpected header '" + line + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    MetricsRow r;
    std::getline(ss, cell, ',');
    r.t = std::stoi(cell);
    std::getline(ss, cell, ',');
    r.rmse = take(cell);
    std::getline(ss, cell, ',');
    r.pair_kl = take(cell);
    std::getline(ss, cell, ',');
    r.mae_f = take(cell);
    std::getline(ss, cell, ',');
    r.mae_g = take(cell);
    std::getline(ss, cell, ',');
    r.relbo = take(cell);
    std::getline(ss, cell, ',');
    r.step_ms = take(cell);
    rows.push_back(r);
  }
  return rows;
}

double rmse(const VectorXd& estimate, const VectorXd& truth) {
  require(estimate.size() == truth.size(), "rmse: length mismatch");
  return std::sqrt((estimate - truth).squaredNorm() / estimate.size());
}

double mat_mae(const MatrixXd& a, const MatrixXd& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mat_mae: shape mismatch");
  return (a - b).cwiseAbs().mean();
}

}  // namespace ovf::bench
