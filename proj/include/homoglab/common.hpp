#pragma once

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace homoglab {

using Real = double;

/// d x N deformation-gradient style matrix (d, N <= 3).
using GradMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
/// Point in R^N, N <= 3.
using Point = Eigen::Matrix<Real, Eigen::Dynamic, 1, 0, 3, 1>;
/// Quadratic form acting on vec(xi), size (d*N) x (d*N) <= 9 x 9.
using QuadForm = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, 0, 9, 9>;

/// Violated precondition or data contract. CLI maps this to exit code 2.
struct ContractViolation : std::runtime_error {
  explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value produced while evaluating an integrand. Exit code 2.
struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Solver failed to converge and no usable iterate remains. Exit code 3.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem failure while writing results. Exit code 4.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

/// Reduce a coordinate to the unit cell [0,1).
inline Real wrap_unit(Real u) {
  Real w = u - std::floor(u);
  return (w >= 1.0) ? 0.0 : w;
}

inline Point wrap_unit(const Point& u) {
  Point w = u;
  for (int i = 0; i < w.size(); ++i) w[i] = wrap_unit(w[i]);
  return w;
}

inline std::string point_to_string(const Point& u) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < u.size(); ++i) os << (i ? "," : "") << u[i];
  os << ")";
  return os.str();
}

/// Seeded RNG wrapper used everywhere randomness is needed. A fixed seed
/// fully determines every draw, which keeps reruns byte-identical.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  Real uniform(Real a, Real b) {
    std::uniform_real_distribution<Real> d(a, b);
    return d(gen_);
  }
  Real normal() {
    std::normal_distribution<Real> d(0.0, 1.0);
    return d(gen_);
  }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(gen_);
  }
  /// Dyadic rational in [0,1) with 26 significand bits. Adding a small
  /// integer to such a value is exact in double precision, so periodic
  /// wrap-around equalities can be asserted bitwise.
  Real dyadic01() {
    const std::int64_t den = std::int64_t(1) << 26;
    return Real(integer(0, den - 1)) / Real(den);
  }
  std::mt19937_64& engine() { return gen_; }

  /// Independent child stream; (seed, index) -> stream is order-free.
  Rng spawn(std::uint64_t index) const {
    return Rng(seed_mix(gen_seed_, index));
  }

  static std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27; x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

  explicit Rng(std::uint64_t seed, bool) : gen_(seed), gen_seed_(seed) {}

 private:
  std::mt19937_64 gen_;
  std::uint64_t gen_seed_ = 0;
};

inline Rng make_rng(std::uint64_t seed) { return Rng(seed, true); }

/// Run fn(i) for i in [0,n) on up to `threads` workers. Each index writes
/// its own slot, so the result is independent of scheduling; reductions
/// happen afterwards in index order.
inline void parallel_for_indexed(std::size_t n, int threads,
                                 const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int k = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::atomic<std::size_t> next{0};
  pool.reserve(k);
  for (int t = 0; t < k; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace homoglab
