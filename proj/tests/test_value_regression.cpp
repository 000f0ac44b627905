#include "ovf/regression.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace ovf;
using namespace ovf::reg;

namespace {

MatrixXd random_matrix(int rows, int cols, RngStream& rng, double scale = 1.0) {
  MatrixXd A(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) A(r, c) = scale * (2.0 * rng.uniform() - 1.0);
  return A;
}

RegressionDataset linear_map_dataset(const MatrixXd& A, int n, double noise,
                                     RngStream& rng) {
  RegressionDataset d;
  d.inputs.resize(n, A.cols());
  d.targets.resize(n, A.rows());
  for (int i = 0; i < n; ++i) {
    VectorXd x = rng.normal_vec(static_cast<int>(A.cols()));
    VectorXd y = A * x;
    for (Eigen::Index j = 0; j < y.size(); ++j) y[j] += noise * rng.normal();
    d.inputs.row(i) = x.transpose();
    d.targets.row(i) = y.transpose();
  }
  return d;
}

}  // namespace

TEST_CASE("krr_fit zero targets predict zero") {
  RngStream rng(41, 0);
  RegressionDataset d;
  d.inputs = MatrixXd::Random(20, 3);
  d.targets = MatrixXd::Zero(20, 2);
  GradApprox g = krr_fit(d, KernelSpec{KernelFamily::Matern52, 0.0, 0.1});
  for (int i = 0; i < 5; ++i)
    CHECK(g.predict(rng.normal_vec(3)).norm() < 1e-12);
}

TEST_CASE("krr interpolation limit reproduces targets at support") {
  RngStream rng(42, 0);
  MatrixXd A = random_matrix(2, 3, rng);
  RegressionDataset d = linear_map_dataset(A, 30, 0.0, rng);
  GradApprox g = krr_fit(d, KernelSpec{KernelFamily::Rbf, std::log(1.5), 1e-10});
  for (int i = 0; i < d.size(); ++i) {
    VectorXd pred = g.predict(d.inputs.row(i).transpose());
    CHECK((pred - d.targets.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("krr learns a linear map inside the training hull") {
  RngStream rng(43, 0);
  MatrixXd A = random_matrix(5, 5, rng, 1.0 / std::sqrt(5.0));
  RegressionDataset d = linear_map_dataset(A, 200, 0.0, rng);
  GradApprox g = krr_fit(d, KernelSpec{KernelFamily::Rbf, std::log(2.0), 1e-10});
  double max_err = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    VectorXd x = 0.25 * rng.normal_vec(5);  // well inside the hull
    max_err = std::max(max_err, (g.predict(x) - A * x).cwiseAbs().maxCoeff());
  }
  CHECK(max_err < 1e-2);
}

TEST_CASE("zero backend and batch-predict consistency") {
  GradApprox z = GradApprox::zero(4);
  CHECK(z.predict(VectorXd::Ones(7)).isZero());
  CHECK(z.predict(VectorXd::Ones(7)).size() == 4);

  RngStream rng(44, 0);
  MatrixXd A = random_matrix(2, 3, rng);
  RegressionDataset d = linear_map_dataset(A, 40, 0.05, rng);
  GradApprox g = krr_fit(d, KernelSpec{KernelFamily::Matern52, 0.3, 0.01});
  MatrixXd X = MatrixXd::Random(15, 3);
  MatrixXd batch = g.predict_batch(X);
  for (int i = 0; i < 15; ++i)
    CHECK((batch.row(i).transpose() - g.predict(X.row(i).transpose())).norm() < 1e-14);
}

TEST_CASE("select_bandwidth trivial cases") {
  RngStream rng(45, 0);
  MatrixXd A = random_matrix(1, 2, rng);
  RegressionDataset train = linear_map_dataset(A, 30, 0.0, rng);
  RegressionDataset val = linear_map_dataset(A, 10, 0.0, rng);
  KernelSpec spec{KernelFamily::Rbf, 0.7, 0.01};

  KernelSpec out = select_bandwidth(train, val, spec, 0, 10, 1e-2, RngStream(1, 1));
  CHECK(out.log_bandwidth == spec.log_bandwidth);

  RegressionDataset ztrain = train, zval = val;
  ztrain.targets.setZero();
  zval.targets.setZero();
  KernelSpec zout = select_bandwidth(ztrain, zval, spec, 10, 10, 1e-2, RngStream(1, 2));
  CHECK(zout.log_bandwidth == doctest::Approx(spec.log_bandwidth));
}

TEST_CASE("select_bandwidth beats bracketing bandwidths on smooth 1-d data") {
  RngStream rng(46, 0);
  auto f = [](double x) { return std::sin(3.0 * x); };
  auto make = [&](int n) {
    RegressionDataset d;
    d.inputs.resize(n, 1);
    d.targets.resize(n, 1);
    for (int i = 0; i < n; ++i) {
      double x = 2.0 * rng.uniform() - 1.0;
      d.inputs(i, 0) = x;
      d.targets(i, 0) = f(x) + 0.01 * rng.normal();
    }
    return d;
  };
  RegressionDataset train = make(60);
  RegressionDataset val = make(40);
  KernelSpec spec{KernelFamily::Rbf, std::log(0.5), 1e-4};
  KernelSpec sel = select_bandwidth(train, val, spec, 40, 10, 0.05, RngStream(2, 7));

  auto val_mse = [&](const KernelSpec& s) {
    GradApprox g = krr_fit(train, s);
    double sum = 0.0;
    for (int i = 0; i < val.size(); ++i) {
      VectorXd p = g.predict(val.inputs.row(i).transpose());
      sum += (p - val.targets.row(i).transpose()).squaredNorm();
    }
    return sum / val.size();
  };
  KernelSpec wide = sel, narrow = sel;
  wide.log_bandwidth = sel.log_bandwidth + std::log(10.0);
  narrow.log_bandwidth = sel.log_bandwidth - std::log(10.0);
  CHECK(val_mse(sel) <= val_mse(wide));
  CHECK(val_mse(sel) <= val_mse(narrow));
}

TEST_CASE("median heuristic is finite and positive-scale") {
  RngStream rng(47, 0);
  MatrixXd X = MatrixXd::Random(50, 3);
  double lb = median_heuristic_log_bandwidth(X, RngStream(3, 3));
  CHECK(std::isfinite(lb));
  CHECK(std::exp(lb) > 0.0);
}

TEST_CASE("mlp_regressor_fit trivial cases") {
  RngStream rng(48, 0);
  MatrixXd A = random_matrix(2, 3, rng);
  RegressionDataset d = linear_map_dataset(A, 32, 0.0, rng);

  nn::Mlp net = nn::make_mlp({3, 8, 2}, nn::Act::Relu, rng);
  VectorXd before = net.params_flat();
  GradApprox g0 = mlp_regressor_fit(d, net, RegLoss::Mse, 0, 8, 1e-2, RngStream(4, 4));
  CHECK((std::get<MlpRegModel>(g0.backend).net.params_flat() - before).norm() == 0.0);

  RegressionDataset zd = d;
  zd.targets.setZero();
  nn::Mlp zero = nn::make_zero_mlp({3, 8, 2}, nn::Act::Relu);
  GradApprox gz = mlp_regressor_fit(zd, zero, RegLoss::Mse, 50, 8, 1e-2, RngStream(4, 5));
  CHECK(std::get<MlpRegModel>(gz.backend).net.params_flat().norm() == 0.0);
}

TEST_CASE("mlp_regressor_fit converges on a linear problem") {
  RngStream rng(49, 0);
  MatrixXd A = random_matrix(2, 3, rng);
  RegressionDataset d = linear_map_dataset(A, 64, 0.0, rng);
  nn::Mlp net = nn::make_zero_mlp({3, 2}, nn::Act::Relu);

  auto train_mse = [&](const nn::Mlp& m) {
    double sum = 0.0;
    for (int i = 0; i < d.size(); ++i)
      sum += (m.forward(d.inputs.row(i).transpose()) - d.targets.row(i).transpose())
                 .squaredNorm();
    return sum / d.size();
  };
  double initial = train_mse(net);
  GradApprox g =
      mlp_regressor_fit(d, net, RegLoss::Mse, 500, d.size(), 1e-2, RngStream(5, 5));
  double final_mse = train_mse(std::get<MlpRegModel>(g.backend).net);
  CHECK(final_mse <= 1e-3 * initial);
}

TEST_CASE("dir_logmag regressor recovers direction and magnitude") {
  RngStream rng(50, 0);
  // Targets with position-dependent direction and magnitude.
  RegressionDataset d;
  const int n = 256;
  d.inputs.resize(n, 2);
  d.targets.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    VectorXd x = rng.normal_vec(2);
    VectorXd y(2);
    double scale = std::exp(0.5 * x[0]);
    y << scale * std::cos(x[1]), scale * std::sin(x[1]);
    d.inputs.row(i) = x.transpose();
    d.targets.row(i) = y.transpose();
  }
  nn::Mlp net = nn::make_mlp({2, 64, 3}, nn::Act::Relu, rng);
  GradApprox g =
      mlp_regressor_fit(d, net, RegLoss::DirLogMag, 4000, 32, 1e-2, RngStream(6, 6));
  double cos_sum = 0.0;
  double logmag_err = 0.0;
  const int probes = 100;
  for (int i = 0; i < probes; ++i) {
    VectorXd x = d.inputs.row(i).transpose();
    VectorXd want = d.targets.row(i).transpose();
    VectorXd got = g.predict(x);
    cos_sum += got.dot(want) / (got.norm() * want.norm());
    logmag_err += std::abs(std::log(got.norm()) - std::log(want.norm()));
  }
  CHECK(cos_sum / probes > 0.95);
  CHECK(logmag_err / probes < 0.3);
}

TEST_CASE("krr prediction approaches the conditional mean with more data") {
  // Noisy deterministic function: h(x) = E[target | x].
  auto h = [](double x) { return std::cos(2.0 * x); };
  double prev_mse = std::numeric_limits<double>::infinity();
  for (int n : {10, 100, 1000}) {
    double mse = 0.0;
    for (int seed = 0; seed < 3; ++seed) {
      RngStream rng(51 + seed, n);
      RegressionDataset d;
      d.inputs.resize(n, 1);
      d.targets.resize(n, 1);
      for (int i = 0; i < n; ++i) {
        double x = 2.0 * rng.uniform() - 1.0;
        d.inputs(i, 0) = x;
        d.targets(i, 0) = h(x) + 0.3 * rng.normal();
      }
      GradApprox g = krr_fit(d, KernelSpec{KernelFamily::Matern52, std::log(0.4), 0.01});
      for (int k = 0; k < 200; ++k) {
        double x = -0.9 + 1.8 * k / 199.0;
        VectorXd xv(1);
        xv << x;
        double p = g.predict(xv)[0];
        mse += (p - h(x)) * (p - h(x)) / 600.0;
      }
    }
    CHECK(mse < prev_mse);
    prev_mse = mse;
  }
}

TEST_CASE("dataset csv dump has the documented schema") {
  RegressionDataset d;
  d.inputs = MatrixXd::Random(3, 2);
  d.targets = MatrixXd::Random(3, 1);
  d.dump_csv("reg_test.csv");
  std::ifstream in("reg_test.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "x_1,x_2,target_1");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::remove("reg_test.csv");
}
