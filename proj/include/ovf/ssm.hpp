#ifndef OVF_SSM_HPP
#define OVF_SSM_HPP

#include "ovf/common.hpp"
#include "ovf/rng.hpp"

#include <string>
#include <variant>

namespace ovf::model {

// Which model parameters form the learnable flat vector theta.
enum class LearnSet { None, FgDiag, FgFull };

struct LinearGaussian {
  MatrixXd F;           // dx x dx transition matrix
  MatrixXd G;           // dy x dx observation matrix
  VectorXd U;           // diagonal transition noise variances
  VectorXd V;           // diagonal observation noise variances
  VectorXd prior_mean;  // initial state mean
  VectorXd prior_var;   // diagonal initial state variances
};

// Euler-discretized continuous-time RNN with linear observations corrupted
// by independent Student-t noise per coordinate.
struct ChaoticRnn {
  MatrixXd W;  // dx x dx recurrent weights
  double gamma = 2.5;
  double tau = 0.1;
  double delta = 0.01;
  VectorXd U;  // diagonal transition noise variances
  MatrixXd C;  // dy x dx observation matrix
  double t_scale = 0.1;
  double t_dof = 3.0;
  VectorXd prior_mean;
  VectorXd prior_var;
};

struct ModelTheta {
  std::variant<LinearGaussian, ChaoticRnn> spec;
  LearnSet learn = LearnSet::None;

  bool is_linear() const { return std::holds_alternative<LinearGaussian>(spec); }
  const LinearGaussian& lg() const { return std::get<LinearGaussian>(spec); }
  LinearGaussian& lg() { return std::get<LinearGaussian>(spec); }
  const ChaoticRnn& crnn() const { return std::get<ChaoticRnn>(spec); }
  ChaoticRnn& crnn() { return std::get<ChaoticRnn>(spec); }

  int dx() const;
  int dy() const;
  void validate() const;

  // Flat view of the learnable subset. FgFull is [vec(F); vec(G)] row-major,
  // FgDiag is [diag(F); diag(G)] and requires square F, G.
  int theta_dim() const;
  VectorXd theta_flat() const;
  void set_theta_flat(const VectorXd& theta);
};

struct Trajectory {
  MatrixXd states;        // T x dx
  MatrixXd observations;  // T x dy
  int length() const { return static_cast<int>(states.rows()); }
};

Trajectory sample_trajectory(const ModelTheta& model, int T, RngStream rng);

void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path, int dx, int dy);

double prior_logpdf(const ModelTheta& model, const VectorXd& x1);
struct PriorGrad {
  double value = 0.0;
  VectorXd dx;
};
PriorGrad prior_logpdf_grad(const ModelTheta& model, const VectorXd& x1);

double transition_logpdf(const ModelTheta& model, const VectorXd& x_prev,
                         const VectorXd& x);
struct TransitionGrad {
  double value = 0.0;
  VectorXd dtheta;  // length theta_dim()
  VectorXd dx_prev;
  VectorXd dx;
};
TransitionGrad transition_logpdf_grad(const ModelTheta& model, const VectorXd& x_prev,
                                      const VectorXd& x);

double observation_logpdf(const ModelTheta& model, const VectorXd& x, const VectorXd& y);
struct ObservationGrad {
  double value = 0.0;
  VectorXd dtheta;
  VectorXd dx;
};
ObservationGrad observation_logpdf_grad(const ModelTheta& model, const VectorXd& x,
                                        const VectorXd& y);

// x + delta/tau * (-x + gamma * W * tanh(x)); chaotic-RNN one-step mean.
VectorXd crnn_drift(const ModelTheta& model, const VectorXd& x);
// cot^T * d(crnn_drift)/dx
VectorXd crnn_drift_vjp(const ModelTheta& model, const VectorXd& x, const VectorXd& cot);

// Joint log density of a full trajectory assembled from the per-step terms.
double trajectory_logpdf(const ModelTheta& model, const Trajectory& traj);

// Model builders used by benchmarks and tests.
ModelTheta make_diag_lg(int d, const VectorXd& f_diag, const VectorXd& g_diag,
                        double u_var, double v_var, LearnSet learn = LearnSet::None);
// Diagonal F, G entries drawn uniformly in [0.5, 1.0].
ModelTheta make_random_diag_lg(int d, double u_var, double v_var, RngStream& rng,
                               LearnSet learn = LearnSet::None);
ModelTheta make_default_crnn(int dx, int dy, RngStream& rng);

}  // namespace ovf::model

#endif  // OVF_SSM_HPP
