#ifndef OVF_RNG_HPP
#define OVF_RNG_HPP

#include "ovf/common.hpp"

#include <cmath>
#include <cstdint>

namespace ovf {

// Counter-based random stream. Each draw is a hash of (seed, stream_id,
// counter), so streams can be split and consumed independently of execution
// order: identical (seed, stream_id, counter) always yields identical draws,
// and distinct stream_ids give independent streams.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t counter = 0;

  RngStream() = default;
  RngStream(std::uint64_t seed_, std::uint64_t stream_id_, std::uint64_t counter_ = 0)
      : seed(seed_), stream_id(stream_id_), counter(counter_) {}

  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    std::uint64_t z = mix(seed);
    z = mix(z ^ stream_id);
    z = mix(z ^ counter);
    ++counter;
    return z;
  }

  // Child stream with an unrelated stream_id; the parent is not advanced.
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed, mix(mix(stream_id) ^ (id + 0x51ed2701a9e5c33bULL)), 0);
  }

  // Uniform on (0, 1]; never returns 0 so log() is safe.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  VectorXd normal_vec(int d) {
    VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  // Bailey's polar method: exact Student-t draw from two uniforms.
  double student_t(double dof) {
    double u = uniform();
    double v = uniform();
    double radius = std::sqrt(dof * (std::pow(u, -2.0 / dof) - 1.0));
    return radius * std::cos(6.283185307179586477 * v);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return next_u64() % n;
  }
};

}  // namespace ovf

#endif  // OVF_RNG_HPP
