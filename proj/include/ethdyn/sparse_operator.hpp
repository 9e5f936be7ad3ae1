// sparse_operator.hpp - row-compressed complex operator over the spin-1 trit basis
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <utility>

#include "ethdyn/core.hpp"

namespace ethdyn {

struct SparseEntry {
  std::uint32_t col;
  Complex value;
};

/// Entries with magnitude at or below this are never stored.
inline constexpr double kPruneThreshold = 1e-15;

/// Immutable CSR matrix: column-sorted rows, complex amplitudes.
class SparseOperator {
 public:
  SparseOperator() : offsets_{0} {}

  /// Builds the operator row by row. `row_fn(row, entries)` appends the
  /// entries of `row` in any order; duplicates are summed and tiny values
  /// dropped.
  template <typename RowFn>
  static SparseOperator from_rows(std::size_t dim, RowFn&& row_fn, bool hermitian) {
    if (dim > std::numeric_limits<std::uint32_t>::max())
      throw InvalidArgument("SparseOperator: dimension exceeds 32-bit column index range");
    SparseOperator op;
    op.dim_ = dim;
    op.hermitian_ = hermitian;
    op.offsets_.assign(dim + 1, 0);
    std::vector<SparseEntry> row;
    for (std::size_t r = 0; r < dim; ++r) {
      row.clear();
      row_fn(r, row);
      std::sort(row.begin(), row.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.col < b.col; });
      std::size_t i = 0;
      while (i < row.size()) {
        std::uint32_t c = row[i].col;
        Complex v = 0.0;
        while (i < row.size() && row[i].col == c) v += row[i++].value;
        if (std::abs(v) > kPruneThreshold) {
          if (c >= dim) throw InvalidArgument("SparseOperator: column index out of range");
          op.cols_.push_back(c);
          op.vals_.push_back(v);
        }
      }
      op.offsets_[r + 1] = op.cols_.size();
    }
    return op;
  }

  static SparseOperator identity(std::size_t dim) {
    return from_rows(dim, [](std::size_t r, std::vector<SparseEntry>& e) {
      e.push_back({static_cast<std::uint32_t>(r), 1.0});
    }, true);
  }

  static SparseOperator diagonal(std::span<const double> d) {
    return from_rows(d.size(), [&](std::size_t r, std::vector<SparseEntry>& e) {
      e.push_back({static_cast<std::uint32_t>(r), d[r]});
    }, true);
  }

  std::size_t dim() const { return dim_; }
  std::size_t nnz() const { return cols_.size(); }
  bool hermitian() const { return hermitian_; }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {cols_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  std::span<const Complex> row_values(std::size_t r) const {
    return {vals_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  /// Returns A(r, c), zero when not stored.
  Complex at(std::size_t r, std::size_t c) const {
    auto cols = row_cols(r);
    auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(c));
    if (it == cols.end() || *it != c) return 0.0;
    return row_values(r)[static_cast<std::size_t>(it - cols.begin())];
  }

  /// out = A * in. Each row accumulates in a fixed order, so the result is
  /// bitwise reproducible.
  void apply(std::span<const Complex> in, std::span<Complex> out) const {
    check_vectors(in, out);
    apply_rows(in, out, 0, dim_);
  }

  /// Row-partitioned apply on `workers` threads; identical output to apply().
  void apply_parallel(std::span<const Complex> in, std::span<Complex> out, unsigned workers) const {
    check_vectors(in, out);
    if (workers <= 1 || dim_ < 4096) {
      apply_rows(in, out, 0, dim_);
      return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (dim_ + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk, hi = std::min(dim_, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([=, this] { apply_rows(in, out, lo, hi); });
    }
  }

  /// <bra| A |ket> without materialising A|ket>.
  Complex matrix_element(std::span<const Complex> bra, std::span<const Complex> ket) const {
    if (bra.size() != dim_ || ket.size() != dim_) throw InvalidArgument("matrix_element: dimension mismatch");
    Complex acc = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
      Complex s = 0.0;
      for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) s += vals_[k] * ket[cols_[k]];
      acc += std::conj(bra[r]) * s;
    }
    return acc;
  }

  Complex trace() const {
    Complex t = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) t += at(r, r);
    return t;
  }

  bool is_real(double tol = 0.0) const {
    return std::all_of(vals_.begin(), vals_.end(), [tol](const Complex& v) { return std::abs(v.imag()) <= tol; });
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : vals_) m = std::max(m, std::abs(v));
    return m;
  }

  /// max |A_ij - conj(A_ji)| over stored entries (and their mirrors).
  double hermiticity_defect() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
      auto cols = row_cols(r);
      auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k)
        worst = std::max(worst, std::abs(vals[k] - std::conj(at(cols[k], r))));
    }
    return worst;
  }

  /// Interval containing the spectrum from Gershgorin discs (Hermitian case).
  std::pair<double, double> gershgorin_bounds() const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r = 0; r < dim_; ++r) {
      double centre = 0.0, radius = 0.0;
      auto cols = row_cols(r);
      auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == r) centre = vals[k].real();
        else radius += std::abs(vals[k]);
      }
      lo = std::min(lo, centre - radius);
      hi = std::max(hi, centre + radius);
    }
    if (dim_ == 0) return {0.0, 0.0};
    return {lo, hi};
  }

  SparseOperator scaled(Complex s, bool hermitian_result) const {
    SparseOperator r = *this;
    for (auto& v : r.vals_) v *= s;
    r.hermitian_ = hermitian_result;
    return r;
  }

  /// alpha*A + beta*B.
  static SparseOperator combine(Complex alpha, const SparseOperator& a, Complex beta, const SparseOperator& b,
                                bool hermitian_result) {
    if (a.dim() != b.dim()) throw InvalidArgument("combine: dimension mismatch");
    return from_rows(a.dim(), [&](std::size_t r, std::vector<SparseEntry>& e) {
      auto ac = a.row_cols(r);
      auto av = a.row_values(r);
      for (std::size_t k = 0; k < ac.size(); ++k) e.push_back({ac[k], alpha * av[k]});
      auto bc = b.row_cols(r);
      auto bv = b.row_values(r);
      for (std::size_t k = 0; k < bc.size(); ++k) e.push_back({bc[k], beta * bv[k]});
    }, hermitian_result);
  }

  /// alpha*A*B + beta*B*A, row by row with a dense accumulator.
  static SparseOperator product_sum(Complex alpha, const SparseOperator& a, const SparseOperator& b, Complex beta,
                                    bool hermitian_result) {
    if (a.dim() != b.dim()) throw InvalidArgument("product: dimension mismatch");
    const std::size_t n = a.dim();
    std::vector<Complex> acc(n, 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<char> mark(n, 0);
    auto add_row_product = [&](const SparseOperator& x, const SparseOperator& y, std::size_t r, Complex coef) {
      auto xc = x.row_cols(r);
      auto xv = x.row_values(r);
      for (std::size_t k = 0; k < xc.size(); ++k) {
        auto yc = y.row_cols(xc[k]);
        auto yv = y.row_values(xc[k]);
        const Complex f = coef * xv[k];
        for (std::size_t q = 0; q < yc.size(); ++q) {
          if (!mark[yc[q]]) {
            mark[yc[q]] = 1;
            touched.push_back(yc[q]);
          }
          acc[yc[q]] += f * yv[q];
        }
      }
    };
    return from_rows(n, [&](std::size_t r, std::vector<SparseEntry>& e) {
      touched.clear();
      if (alpha != 0.0) add_row_product(a, b, r, alpha);
      if (beta != 0.0) add_row_product(b, a, r, beta);
      for (auto c : touched) {
        e.push_back({c, acc[c]});
        acc[c] = 0.0;
        mark[c] = 0;
      }
    }, hermitian_result);
  }

 private:
  void check_vectors(std::span<const Complex> in, std::span<Complex> out) const {
    if (in.size() != dim_ || out.size() != dim_) throw InvalidArgument("apply: dimension mismatch");
  }

  void apply_rows(std::span<const Complex> in, std::span<Complex> out, std::size_t lo, std::size_t hi) const {
    for (std::size_t r = lo; r < hi; ++r) {
      Complex s = 0.0;
      for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) s += vals_[k] * in[cols_[k]];
      out[r] = s;
    }
  }

  std::size_t dim_ = 0;
  bool hermitian_ = false;
  std::vector<std::uint64_t> offsets_;
  std::vector<std::uint32_t> cols_;
  std::vector<Complex> vals_;
};

/// Checked apply: rejects non-finite input.
template <LinearOperator Op>
StateVector apply(const Op& op, std::span<const Complex> v) {
  if (v.size() != op.dim()) throw InvalidArgument("apply: dimension mismatch");
  for (const auto& x : v)
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) throw InvalidArgument("apply: non-finite input vector");
  StateVector out(v.size());
  op.apply(v, out);
  return out;
}

}  // namespace ethdyn
