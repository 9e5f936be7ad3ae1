// dense.hpp - column-major dense matrices and thin LAPACK/BLAS wrappers
#pragma once

#include <cblas.h>
#include <lapacke.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "ethdyn/core.hpp"

namespace ethdyn {

template <typename T>
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{}) {}

  T& operator()(std::size_t i, std::size_t j) { return data[j * rows + i]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[j * rows + i]; }
  std::span<const T> column(std::size_t j) const { return {data.data() + j * rows, rows}; }
  std::span<T> column(std::size_t j) { return {data.data() + j * rows, rows}; }
};

using RealMatrix = DenseMatrix<double>;
using ComplexMatrix = DenseMatrix<Complex>;

/// Compares a small dgemm against a naive product. Some OpenBLAS builds pick
/// a kernel at load time that silently returns wrong results on newer CPUs.
inline bool blas_gives_correct_products() {
  constexpr int n = 256;
  std::vector<double> a(n * n), b(n * n), c(n * n, 0.0);
  for (int i = 0; i < n * n; ++i) {
    a[i] = std::sin(0.37 * i + 0.1);
    b[i] = std::cos(0.23 * i - 0.4);
  }
  cblas_dgemm(CblasColMajor, CblasNoTrans, CblasNoTrans, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double ref = 0.0;
      for (int k = 0; k < n; ++k) ref += a[k * n + i] * b[j * n + k];
      if (std::abs(ref - c[j * n + i]) > 1e-10 * n) return false;
    }
  return true;
}

inline void require_working_blas() {
  static const bool ok = blas_gives_correct_products();
  if (!ok)
    throw Error("BLAS self-check failed: dgemm returns wrong products on this CPU; "
                "set OPENBLAS_CORETYPE (for example SkylakeX or Haswell) and rerun");
}

/// For executables: when the BLAS self-check fails and OPENBLAS_CORETYPE is
/// unset, restart the process with a core type matching the CPU features.
/// Returns normally when no restart is needed or possible.
inline void reexec_with_working_blas(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr || blas_gives_correct_products()) return;
  __builtin_cpu_init();
  const char* core = __builtin_cpu_supports("avx512f") ? "SkylakeX" : __builtin_cpu_supports("avx2") ? "Haswell" : "Prescott";
  ::setenv("OPENBLAS_CORETYPE", core, 1);
  ::execv("/proc/self/exe", argv);
}

/// Eigenvalues ascending; on return `a` holds the orthonormal eigenvectors
/// (column j belongs to eigenvalue j) when `vectors` is set.
inline std::vector<double> symmetric_eigen(RealMatrix& a, bool vectors) {
  if (a.rows != a.cols) throw InvalidArgument("symmetric_eigen: matrix not square");
  require_working_blas();
  const auto n = static_cast<lapack_int>(a.rows);
  std::vector<double> w(a.rows);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'U', n, a.data.data(), n, w.data());
  if (info != 0) throw ConvergenceError("dsyevd failed with info = " + std::to_string(info));
  if (!vectors) a = RealMatrix();
  return w;
}

inline std::vector<double> hermitian_eigen(ComplexMatrix& a, bool vectors) {
  if (a.rows != a.cols) throw InvalidArgument("hermitian_eigen: matrix not square");
  require_working_blas();
  const auto n = static_cast<lapack_int>(a.rows);
  std::vector<double> w(a.rows);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'U', n,
                                         reinterpret_cast<lapack_complex_double*>(a.data.data()), n, w.data());
  if (info != 0) throw ConvergenceError("zheevd failed with info = " + std::to_string(info));
  if (!vectors) a = ComplexMatrix();
  return w;
}

/// C = op(A) * B with op = transpose when `trans_a`.
inline RealMatrix matmul(const RealMatrix& a, const RealMatrix& b, bool trans_a = false) {
  const std::size_t m = trans_a ? a.cols : a.rows, k = trans_a ? a.rows : a.cols;
  if (k != b.rows) throw InvalidArgument("matmul: inner dimension mismatch");
  RealMatrix c(m, b.cols);
  if (m == 0 || b.cols == 0 || k == 0) return c;
  require_working_blas();
  cblas_dgemm(CblasColMajor, trans_a ? CblasTrans : CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(b.cols), static_cast<int>(k), 1.0, a.data.data(), static_cast<int>(a.rows),
              b.data.data(), static_cast<int>(b.rows), 0.0, c.data.data(), static_cast<int>(m));
  return c;
}

inline ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b, bool adjoint_a = false) {
  const std::size_t m = adjoint_a ? a.cols : a.rows, k = adjoint_a ? a.rows : a.cols;
  if (k != b.rows) throw InvalidArgument("matmul: inner dimension mismatch");
  ComplexMatrix c(m, b.cols);
  if (m == 0 || b.cols == 0 || k == 0) return c;
  require_working_blas();
  const Complex one = 1.0, zero = 0.0;
  cblas_zgemm(CblasColMajor, adjoint_a ? CblasConjTrans : CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(b.cols), static_cast<int>(k), &one, a.data.data(), static_cast<int>(a.rows),
              b.data.data(), static_cast<int>(b.rows), &zero, c.data.data(), static_cast<int>(m));
  return c;
}

inline void split_complex(const ComplexMatrix& z, RealMatrix& re, RealMatrix& im) {
  re = RealMatrix(z.rows, z.cols);
  im = RealMatrix(z.rows, z.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    re.data[i] = z.data[i].real();
    im.data[i] = z.data[i].imag();
  }
}

}  // namespace ethdyn
