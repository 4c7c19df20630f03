#pragma once

// Shared scalar types, small dense linear algebra aliases, deterministic RNG,
// deterministic summation, error taxonomy and process exit codes.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nonlocal {

using real = double;
using cplx = std::complex<double>;

inline constexpr real pi = 3.14159265358979323846264338327950288;
inline constexpr real two_pi = 2.0 * pi;

// Dense d x d / d-vector types, d <= 3: dynamic extents with fixed max size
// so no heap traffic occurs in per-mode loops.
using MatR = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
using MatC = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
using VecR = Eigen::Matrix<real, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;
using VecC = Eigen::Matrix<cplx, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

// Error taxonomy. The CLI maps these to distinct exit codes.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& m) : std::runtime_error(m) {}
};
struct io_error : std::runtime_error {
  explicit io_error(const std::string& m) : std::runtime_error(m) {}
};
struct solver_error : std::runtime_error {
  explicit solver_error(const std::string& m) : std::runtime_error(m) {}
};
struct convergence_error : solver_error {
  explicit convergence_error(const std::string& m) : solver_error(m) {}
};

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_io = 3;
inline constexpr int exit_solver = 4;

// SplitMix64. One 64-bit master seed per run; sub-streams are derived by
// counter so ensembles are reproducible regardless of thread schedule.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  real uniform01() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal pair, Box-Muller; deterministic across platforms
  std::array<real, 2> normal_pair() {
    real u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const real u2 = uniform01();
    const real r = std::sqrt(-2.0 * std::log(u1));
    return {r * std::cos(two_pi * u2), r * std::sin(two_pi * u2)};
  }
};

inline Rng sub_rng(std::uint64_t master_seed, std::uint64_t counter) {
  // hash the counter through one SplitMix64 round keyed by the master seed
  Rng h(master_seed ^ (0xD1B54A32D192ED03ull * (counter + 1)));
  return Rng(h.next_u64());
}

// Deterministic pairwise summation (order fixed by the data layout, not by
// thread schedule); used for every norm/reduction that feeds a tolerance.
real pairwise_sum(const real* x, std::size_t n);
inline real pairwise_sum(const std::vector<real>& v) {
  return pairwise_sum(v.data(), v.size());
}

// Compensated accumulator for streaming sums.
struct Kahan {
  real sum = 0.0;
  real carry = 0.0;
  void add(real x) {
    const real y = x - carry;
    const real t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  real total() const { return sum; }
};

// Worker count: NONLOCAL_THREADS wins over the OpenMP default.
int resolve_threads();

// 17-significant-digit decimal (lossless double round trip) for CSV output.
std::string fmt17(real x);

std::string csv_join(const std::vector<std::string>& cells);

}  // namespace nonlocal
