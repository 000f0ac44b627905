#include "ovf/ssm.hpp"

#include "ovf/gaussian.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ovf::model {

namespace {

// log density of one Student-t coordinate with location loc and scale s.
double student_t_logpdf1(double r, double scale, double dof) {
  double z = r / scale;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
         0.5 * std::log(dof * M_PI) - std::log(scale) -
         0.5 * (dof + 1.0) * std::log1p(z * z / dof);
}

// d/dr of student_t_logpdf1
double student_t_dlogpdf1(double r, double scale, double dof) {
  return -(dof + 1.0) * r / (dof * scale * scale + r * r);
}

}  // namespace

int ModelTheta::dx() const {
  return is_linear() ? static_cast<int>(lg().F.rows())
                     : static_cast<int>(crnn().W.rows());
}

int ModelTheta::dy() const {
  return is_linear() ? static_cast<int>(lg().G.rows())
                     : static_cast<int>(crnn().C.rows());
}

void ModelTheta::validate() const {
  if (is_linear()) {
    const auto& m = lg();
    require(m.F.rows() == m.F.cols(), "ModelTheta: F must be square");
    require(m.G.cols() == m.F.rows(), "ModelTheta: G column mismatch");
    require(m.U.size() == m.F.rows() && m.V.size() == m.G.rows(),
            "ModelTheta: noise diagonal size mismatch");
    require((m.U.array() > 0).all() && (m.V.array() > 0).all(),
            "ModelTheta: noise variances must be positive");
    require(m.prior_mean.size() == m.F.rows() && m.prior_var.size() == m.F.rows(),
            "ModelTheta: prior size mismatch");
    require((m.prior_var.array() > 0).all(), "ModelTheta: prior variances must be positive");
  } else {
    const auto& m = crnn();
    require(m.W.rows() == m.W.cols(), "ModelTheta: W must be square");
    require(m.C.cols() == m.W.rows(), "ModelTheta: C column mismatch");
    require(m.tau > 0 && m.delta > 0 && m.t_dof > 0 && m.t_scale > 0,
            "ModelTheta: CRNN constants must be positive");
    require((m.U.array() > 0).all() && (m.prior_var.array() > 0).all(),
            "ModelTheta: CRNN variances must be positive");
    require(learn == LearnSet::None, "ModelTheta: CRNN parameters are not learnable");
  }
}

int ModelTheta::theta_dim() const {
  if (learn == LearnSet::None) return 0;
  const auto& m = lg();
  if (learn == LearnSet::FgDiag)
    return static_cast<int>(m.F.rows() + m.G.rows());
  return static_cast<int>(m.F.size() + m.G.size());
}

VectorXd ModelTheta::theta_flat() const {
  VectorXd theta(theta_dim());
  if (learn == LearnSet::None) return theta;
  const auto& m = lg();
  if (learn == LearnSet::FgDiag) {
    require(m.G.rows() == m.G.cols(), "theta_flat: FgDiag needs square G");
    theta.head(m.F.rows()) = m.F.diagonal();
    theta.tail(m.G.rows()) = m.G.diagonal();
    return theta;
  }
  Eigen::Index off = 0;
  for (Eigen::Index r = 0; r < m.F.rows(); ++r)
    for (Eigen::Index c = 0; c < m.F.cols(); ++c) theta[off++] = m.F(r, c);
  for (Eigen::Index r = 0; r < m.G.rows(); ++r)
    for (Eigen::Index c = 0; c < m.G.cols(); ++c) theta[off++] = m.G(r, c);
  return theta;
}

void ModelTheta::set_theta_flat(const VectorXd& theta) {
  require(theta.size() == theta_dim(), "set_theta_flat: length mismatch");
  if (learn == LearnSet::None) return;
  auto& m = lg();
  if (learn == LearnSet::FgDiag) {
    m.F.diagonal() = theta.head(m.F.rows());
    m.G.diagonal() = theta.tail(m.G.rows());
    return;
  }
  Eigen::Index off = 0;
  for (Eigen::Index r = 0; r < m.F.rows(); ++r)
    for (Eigen::Index c = 0; c < m.F.cols(); ++c) m.F(r, c) = theta[off++];
  for (Eigen::Index r = 0; r < m.G.rows(); ++r)
    for (Eigen::Index c = 0; c < m.G.cols(); ++c) m.G(r, c) = theta[off++];
}

Trajectory sample_trajectory(const ModelTheta& model, int T, RngStream rng) {
  require(T >= 0, "sample_trajectory: T must be >= 0");
  model.validate();
  const int dx = model.dx();
  const int dy = model.dy();
  Trajectory traj;
  traj.states.resize(T, dx);
  traj.observations.resize(T, dy);
  if (T == 0) return traj;

  VectorXd x;
  for (int t = 0; t < T; ++t) {
    if (model.is_linear()) {
      const auto& m = model.lg();
      if (t == 0)
        x = m.prior_mean + (m.prior_var.array().sqrt() * rng.normal_vec(dx).array()).matrix();
      else
        x = m.F * x + (m.U.array().sqrt() * rng.normal_vec(dx).array()).matrix();
      traj.states.row(t) = x.transpose();
      VectorXd y = m.G * x + (m.V.array().sqrt() * rng.normal_vec(dy).array()).matrix();
      traj.observations.row(t) = y.transpose();
    } else {
      const auto& m = model.crnn();
      if (t == 0)
        x = m.prior_mean + (m.prior_var.array().sqrt() * rng.normal_vec(dx).array()).matrix();
      else
        x = crnn_drift(model, x) + (m.U.array().sqrt() * rng.normal_vec(dx).array()).matrix();
      traj.states.row(t) = x.transpose();
      VectorXd y = m.C * x;
      for (int j = 0; j < dy; ++j) y[j] += m.t_scale * rng.student_t(m.t_dof);
      traj.observations.row(t) = y.transpose();
    }
  }
  return traj;
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "save_trajectory_csv: cannot open " + path);
  const int dx = static_cast<int>(traj.states.cols());
  const int dy = static_cast<int>(traj.observations.cols());
  out << "t";
  for (int i = 1; i <= dx; ++i) out << ",x_" << i;
  for (int j = 1; j <= dy; ++j) out << ",y_" << j;
  out << "\n";
  out.precision(17);
  for (int t = 0; t < traj.length(); ++t) {
    out << (t + 1);
    for (int i = 0; i < dx; ++i) out << "," << traj.states(t, i);
    for (int j = 0; j < dy; ++j) out << "," << traj.observations(t, j);
    out << "\n";
  }
}

Trajectory load_trajectory_csv(const std::string& path, int dx, int dy) {
  std::ifstream in(path);
  require(in.good(), "load_trajectory_csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "load_trajectory_csv: empty file");
  std::vector<VectorXd> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    VectorXd row(1 + dx + dy);
    int k = 0;
    while (std::getline(ss, cell, ',')) {
      require(k < row.size(), "load_trajectory_csv: too many columns");
      row[k++] = std::stod(cell);
    }
    require(k == row.size(), "load_trajectory_csv: too few columns");
    rows.push_back(std::move(row));
  }
  Trajectory traj;
  traj.states.resize(rows.size(), dx);
  traj.observations.resize(rows.size(), dy);
  for (size_t t = 0; t < rows.size(); ++t) {
    traj.states.row(t) = rows[t].segment(1, dx).transpose();
    traj.observations.row(t) = rows[t].segment(1 + dx, dy).transpose();
  }
  return traj;
}

double prior_logpdf(const ModelTheta& model, const VectorXd& x1) {
  const VectorXd& mean = model.is_linear() ? model.lg().prior_mean : model.crnn().prior_mean;
  const VectorXd& var = model.is_linear() ? model.lg().prior_var : model.crnn().prior_var;
  return math::gaussian_logpdf(x1, math::GaussianDist::diagonal(mean, var));
}

PriorGrad prior_logpdf_grad(const ModelTheta& model, const VectorXd& x1) {
  const VectorXd& mean = model.is_linear() ? model.lg().prior_mean : model.crnn().prior_mean;
  const VectorXd& var = model.is_linear() ? model.lg().prior_var : model.crnn().prior_var;
  PriorGrad g;
  VectorXd resid_over_var = (x1 - mean).array() / var.array();
  g.value = -0.5 * (x1.size() * math::kLog2Pi + var.array().log().sum() +
                    (x1 - mean).dot(resid_over_var));
  g.dx = -resid_over_var;
  return g;
}

double transition_logpdf(const ModelTheta& model, const VectorXd& x_prev,
                         const VectorXd& x) {
  require(x_prev.size() == model.dx() && x.size() == model.dx(),
          "transition_logpdf: dimension mismatch");
  VectorXd mean;
  const VectorXd* U;
  if (model.is_linear()) {
    mean = model.lg().F * x_prev;
    U = &model.lg().U;
  } else {
    mean = crnn_drift(model, x_prev);
    U = &model.crnn().U;
  }
  VectorXd r = x - mean;
  return -0.5 * (model.dx() * math::kLog2Pi + U->array().log().sum() +
                 (r.array().square() / U->array()).sum());
}

TransitionGrad transition_logpdf_grad(const ModelTheta& model, const VectorXd& x_prev,
                                      const VectorXd& x) {
  require(x_prev.size() == model.dx() && x.size() == model.dx(),
          "transition_logpdf_grad: dimension mismatch");
  TransitionGrad g;
  if (model.is_linear()) {
    const auto& m = model.lg();
    VectorXd r = x - m.F * x_prev;
    VectorXd w = r.array() / m.U.array();  // = -dlogf/dmean
    g.value = -0.5 * (model.dx() * math::kLog2Pi + m.U.array().log().sum() +
                      r.dot(w));
    g.dx = -w;
    g.dx_prev = m.F.transpose() * w;
    g.dtheta = VectorXd::Zero(model.theta_dim());
    if (model.learn == LearnSet::FgDiag) {
      g.dtheta.head(model.dx()) = (w.array() * x_prev.array()).matrix();
    } else if (model.learn == LearnSet::FgFull) {
      Eigen::Index off = 0;
      for (int r_i = 0; r_i < model.dx(); ++r_i)
        for (int c_i = 0; c_i < model.dx(); ++c_i)
          g.dtheta[off++] = w[r_i] * x_prev[c_i];
    }
  } else {
    const auto& m = model.crnn();
    VectorXd mean = crnn_drift(model, x_prev);
    VectorXd r = x - mean;
    VectorXd w = r.array() / m.U.array();
    g.value = -0.5 * (model.dx() * math::kLog2Pi + m.U.array().log().sum() +
                      r.dot(w));
    g.dx = -w;
    g.dx_prev = crnn_drift_vjp(model, x_prev, w);
    g.dtheta = VectorXd::Zero(0);
  }
  return g;
}

double observation_logpdf(const ModelTheta& model, const VectorXd& x, const VectorXd& y) {
  require(x.size() == model.dx() && y.size() == model.dy(),
          "observation_logpdf: dimension mismatch");
  if (model.is_linear()) {
    const auto& m = model.lg();
    VectorXd r = y - m.G * x;
    return -0.5 * (model.dy() * math::kLog2Pi + m.V.array().log().sum() +
                   (r.array().square() / m.V.array()).sum());
  }
  const auto& m = model.crnn();
  VectorXd r = y - m.C * x;
  double lp = 0.0;
  for (int j = 0; j < model.dy(); ++j) lp += student_t_logpdf1(r[j], m.t_scale, m.t_dof);
  return lp;
}

ObservationGrad observation_logpdf_grad(const ModelTheta& model, const VectorXd& x,
                                        const VectorXd& y) {
  require(x.size() == model.dx() && y.size() == model.dy(),
          "observation_logpdf_grad: dimension mismatch");
  ObservationGrad g;
  if (model.is_linear()) {
    const auto& m = model.lg();
    VectorXd r = y - m.G * x;
    VectorXd w = r.array() / m.V.array();
    g.value = -0.5 * (model.dy() * math::kLog2Pi + m.V.array().log().sum() + r.dot(w));
    g.dx = m.G.transpose() * w;
    g.dtheta = VectorXd::Zero(model.theta_dim());
    if (model.learn == LearnSet::FgDiag) {
      g.dtheta.tail(model.dy()) = (w.array() * x.array()).matrix();
    } else if (model.learn == LearnSet::FgFull) {
      Eigen::Index off = model.dx() * model.dx();
      for (int r_i = 0; r_i < model.dy(); ++r_i)
        for (int c_i = 0; c_i < model.dx(); ++c_i)
          g.dtheta[off++] = w[r_i] * x[c_i];
    }
  } else {
    const auto& m = model.crnn();
    VectorXd r = y - m.C * x;
    g.value = 0.0;
    VectorXd w(model.dy());
    for (int j = 0; j < model.dy(); ++j) {
      g.value += student_t_logpdf1(r[j], m.t_scale, m.t_dof);
      w[j] = student_t_dlogpdf1(r[j], m.t_scale, m.t_dof);
    }
    // dr/dx = -C, so dx = -C^T * dlogp/dr
    g.dx = -m.C.transpose() * w;
    g.dtheta = VectorXd::Zero(0);
  }
  return g;
}

VectorXd crnn_drift(const ModelTheta& model, const VectorXd& x) {
  require(!model.is_linear(), "crnn_drift: not a chaotic-RNN model");
  const auto& m = model.crnn();
  double a = m.delta / m.tau;
  return x + a * (-x + m.gamma * (m.W * x.array().tanh().matrix()));
}

VectorXd crnn_drift_vjp(const ModelTheta& model, const VectorXd& x, const VectorXd& cot) {
  require(!model.is_linear(), "crnn_drift_vjp: not a chaotic-RNN model");
  const auto& m = model.crnn();
  double a = m.delta / m.tau;
  // J = I + a*(-I + gamma * W * diag(1 - tanh(x)^2))
  VectorXd sech2 = (1.0 - x.array().tanh().square()).matrix();
  VectorXd wt_cot = m.W.transpose() * cot;
  return cot - a * cot + (a * m.gamma) * (sech2.array() * wt_cot.array()).matrix();
}

double trajectory_logpdf(const ModelTheta& model, const Trajectory& traj) {
  require(traj.states.rows() == traj.observations.rows(),
          "trajectory_logpdf: state/observation length mismatch");
  const int T = traj.length();
  if (T == 0) return 0.0;
  double lp = prior_logpdf(model, traj.states.row(0).transpose());
  lp += observation_logpdf(model, traj.states.row(0).transpose(),
                           traj.observations.row(0).transpose());
  for (int t = 1; t < T; ++t) {
    lp += transition_logpdf(model, traj.states.row(t - 1).transpose(),
                            traj.states.row(t).transpose());
    lp += observation_logpdf(model, traj.states.row(t).transpose(),
                             traj.observations.row(t).transpose());
  }
  return lp;
}

ModelTheta make_diag_lg(int d, const VectorXd& f_diag, const VectorXd& g_diag,
                        double u_var, double v_var, LearnSet learn) {
  LinearGaussian m;
  m.F = f_diag.asDiagonal();
  m.G = g_diag.asDiagonal();
  m.U = VectorXd::Constant(d, u_var);
  m.V = VectorXd::Constant(d, v_var);
  m.prior_mean = VectorXd::Zero(d);
  m.prior_var = VectorXd::Ones(d);
  ModelTheta theta;
  theta.spec = std::move(m);
  theta.learn = learn;
  theta.validate();
  return theta;
}

ModelTheta make_random_diag_lg(int d, double u_var, double v_var, RngStream& rng,
                               LearnSet learn) {
  VectorXd f(d), g(d);
  for (int i = 0; i < d; ++i) f[i] = 0.5 + 0.5 * rng.uniform();
  for (int i = 0; i < d; ++i) g[i] = 0.5 + 0.5 * rng.uniform();
  return make_diag_lg(d, f, g, u_var, v_var, learn);
}

ModelTheta make_default_crnn(int dx, int dy, RngStream& rng) {
  require(dy <= dx, "make_default_crnn: dy must be <= dx");
  ChaoticRnn m;
  m.W.resize(dx, dx);
  double sd = 1.0 / std::sqrt(static_cast<double>(dx));
  for (int r = 0; r < dx; ++r)
    for (int c = 0; c < dx; ++c) m.W(r, c) = sd * rng.normal();
  m.U = VectorXd::Constant(dx, 0.01);
  m.C = MatrixXd::Identity(dy, dx);
  m.prior_mean = VectorXd::Zero(dx);
  m.prior_var = VectorXd::Constant(dx, 0.1);
  ModelTheta theta;
  theta.spec = std::move(m);
  theta.learn = LearnSet::None;
  theta.validate();
  return theta;
}

}  // namespace ovf::model
