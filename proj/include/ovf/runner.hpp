#ifndef OVF_RUNNER_HPP
#define OVF_RUNNER_HPP

#include "ovf/config.hpp"
#include "ovf/metrics.hpp"

namespace ovf::bench {

struct RunSummary {
  std::string experiment;
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  double kf_loglik = std::numeric_limits<double>::quiet_NaN();
  double log_evidence_estimate = std::numeric_limits<double>::quiet_NaN();  // BPF
  double final_elbo = std::numeric_limits<double>::quiet_NaN();   // batch MC
  double final_relbo = std::numeric_limits<double>::quiet_NaN();  // engine / surrogate
  double mean_rmse = std::numeric_limits<double>::quiet_NaN();
  double final_mae_f = std::numeric_limits<double>::quiet_NaN();
  double final_mae_g = std::numeric_limits<double>::quiet_NaN();
  double total_ms = 0.0;
  bool aborted = false;
  std::string error;
};

// Deterministic models and data shared by every method under one config.
model::ModelTheta build_truth_model(const RunConfig& cfg);
model::Trajectory build_dataset(const RunConfig& cfg, const model::ModelTheta& truth);

// Published budgets behind the desk-scale defaults.
void apply_paper_scale(RunConfig& cfg);

std::string config_hash(const RunConfig& cfg);

// Runs the configured method, writes metrics.csv / summary.json (and optional
// plot_*.svg) into cfg.out_dir, and returns the summary.
RunSummary run_experiment(const RunConfig& cfg);

}  // namespace ovf::bench

#endif  // OVF_RUNNER_HPP
