#ifndef OVF_COMMON_HPP
#define OVF_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace ovf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Raised on precondition violations (dimension mismatches, invalid
// parameters). Numerical failures (non-SPD factorizations, non-finite
// intermediates) use NumericalError so callers can map them to distinct
// exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Worker cap honored by parallel_for. Resolution order: explicit set_threads,
// then OVFILT_THREADS, then hardware concurrency.
int max_threads();
void set_threads(int n);

// Runs fn(i) for i in [0, n). Work is split into contiguous blocks; callers
// must make per-index work independent (e.g. via RNG substreams) and reduce
// results in ascending index order to keep runs bitwise reproducible.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace ovf

#endif  // OVF_COMMON_HPP
