// Shared vocabulary types, error classes and a deterministic parallel loop.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace xrt {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point left the region where the metric is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Geodesic integration failed (step underflow, trapping timeout).
class TraceError : public Error {
 public:
  using Error::Error;
};

/// Shooting for the inverse exponential map did not converge.
class ShootingError : public Error {
 public:
  using Error::Error;
};

/// A Jacobi matrix became singular where it must not (conjugate point).
class ConjugatePointError : public Error {
 public:
  using Error::Error;
};

/// Invalid user input: bad configuration, grid mismatch, violated precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Number of workers used when a caller passes 0.
inline unsigned default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

/// Runs body(i) for i in [0, n) on `workers` threads.
///
/// Indices are split into contiguous blocks; every index is processed by
/// exactly one call, so results written per index are independent of the
/// worker count. Exceptions from workers are rethrown on the caller.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  if (workers == 0) workers = default_workers();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t lo = n * w / workers;
    std::size_t hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi, w] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline double sqr(double x) { return x * x; }

/// Cotangent norm sqrt(xi^T g^{-1} xi).
inline double cotangent_norm(const Mat2& g, const Vec2& xi) {
  return std::sqrt(xi.dot(g.inverse() * xi));
}

/// Tangent norm sqrt(v^T g v).
inline double tangent_norm(const Mat2& g, const Vec2& v) {
  return std::sqrt(v.dot(g * v));
}

}  // namespace xrt
