// core.hpp - shared scalar types, error classes and the operator concept
#pragma once

#include <complex>
#include <concepts>
#include <cstdint>
#include <functional>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ethdyn {

using Complex = std::complex<double>;
using StateVector = std::vector<Complex>;

/// Largest chain length whose 3^L basis indices still fit the 32-bit column
/// indices of SparseOperator.
inline constexpr int kMaxSites = 20;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input (dimension mismatch, invalid descriptor, out-of-range site ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Dense work requested above the configured size cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed (eigensolver, Chebyshev divergence, underflow).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Warnings go through a replaceable sink so tests and the CLI can capture them.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink =
      [](const std::string& msg) { std::cerr << "[ethdyn] warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

/// Anything that can act on a state vector: out = A * in.
template <typename Op>
concept LinearOperator = requires(const Op& op, std::span<const Complex> in, std::span<Complex> out) {
  { op.dim() } -> std::convertible_to<std::size_t>;
  op.apply(in, out);
};

inline std::uint64_t ipow3(int n) {
  std::uint64_t r = 1;
  for (int i = 0; i < n; ++i) r *= 3;
  return r;
}

inline Complex dot(std::span<const Complex> a, std::span<const Complex> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: dimension mismatch");
  // split accumulators keep the loop vectorizable
  double re = 0.0, im = 0.0;
  const double* pa = reinterpret_cast<const double*>(a.data());
  const double* pb = reinterpret_cast<const double*>(b.data());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ar = pa[2 * i], ai = pa[2 * i + 1];
    const double br = pb[2 * i], bi = pb[2 * i + 1];
    re += ar * br + ai * bi;
    im += ar * bi - ai * br;
  }
  return {re, im};
}

inline double norm2(std::span<const Complex> a) {
  const double* p = reinterpret_cast<const double*>(a.data());
  double s = 0.0;
  for (std::size_t i = 0; i < 2 * a.size(); ++i) s += p[i] * p[i];
  return s;
}

}  // namespace ethdyn
