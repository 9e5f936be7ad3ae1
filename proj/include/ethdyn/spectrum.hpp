// spectrum.hpp - exact diagonalization and eigenbasis statistics of observables
#pragma once

#include <map>
#include <memory>
#include <numeric>
#include <optional>

#include "ethdyn/dense.hpp"
#include "ethdyn/sectors.hpp"

namespace ethdyn {

/// Largest matrix handed to the dense eigensolver unless overridden.
inline constexpr std::size_t kDefaultDenseCap = 6561;

/// Eigenvalues (ascending) and optional eigenvectors of H, either on the full
/// space or inside one symmetry sector. Eigenvector matrices are shared
/// between conjugate sectors.
struct Spectrum {
  std::vector<double> energies;
  std::shared_ptr<const RealMatrix> vectors;              // sector coordinates, or full space when H is real
  std::shared_ptr<const ComplexMatrix> complex_vectors;   // full space, complex H
  std::shared_ptr<const SectorBasis> basis;               // null for the full space
  std::optional<SectorLabel> label;

  std::size_t dim() const { return energies.size(); }
  bool has_vectors() const { return vectors != nullptr || complex_vectors != nullptr; }
  std::size_t full_dim() const {
    if (basis) return basis->full_dim();
    return dim();
  }

  /// Eigenvector i as a full-space state.
  StateVector full_vector(std::size_t i) const {
    require_vectors();
    StateVector v(full_dim(), 0.0);
    if (complex_vectors) {
      auto c = complex_vectors->column(i);
      std::copy(c.begin(), c.end(), v.begin());
    } else if (basis) {
      basis->embed(vectors->column(i), v);
    } else {
      auto c = vectors->column(i);
      std::copy(c.begin(), c.end(), v.begin());
    }
    return v;
  }

  void require_vectors() const {
    if (!has_vectors()) throw InvalidArgument("spectrum has no eigenvectors");
  }
};

using EigenSystem = std::vector<Spectrum>;

inline void check_cap(std::size_t n, std::size_t cap) {
  if (n > cap)
    throw CapExceeded("dense diagonalization of dimension " + std::to_string(n) + " exceeds cap " +
                      std::to_string(cap) + "; use symmetry sectors or the typicality path");
}

inline Spectrum diagonalize(const SparseOperator& H, bool want_vectors, std::size_t cap = kDefaultDenseCap) {
  check_cap(H.dim(), cap);
  if (!H.hermitian()) throw InvalidArgument("diagonalize: operator is not flagged Hermitian");
  const std::size_t n = H.dim();
  Spectrum s;
  if (H.is_real()) {
    RealMatrix A(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      auto c = H.row_cols(r);
      auto v = H.row_values(r);
      for (std::size_t k = 0; k < c.size(); ++k) A(r, c[k]) = v[k].real();
    }
    s.energies = symmetric_eigen(A, want_vectors);
    if (want_vectors) s.vectors = std::make_shared<RealMatrix>(std::move(A));
  } else {
    ComplexMatrix A(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      auto c = H.row_cols(r);
      auto v = H.row_values(r);
      for (std::size_t k = 0; k < c.size(); ++k) A(r, c[k]) = v[k];
    }
    s.energies = hermitian_eigen(A, want_vectors);
    if (want_vectors) s.complex_vectors = std::make_shared<ComplexMatrix>(std::move(A));
  }
  return s;
}

/// Diagonalizes every sector block; conjugate partners reuse one eigensolve.
inline EigenSystem diagonalize_sectors(const SparseOperator& H, std::vector<SectorBasis> sectors, bool want_vectors,
                                       std::size_t cap = kDefaultDenseCap) {
  EigenSystem out(sectors.size());
  std::vector<std::shared_ptr<const SectorBasis>> bases;
  for (auto& b : sectors) bases.push_back(std::make_shared<const SectorBasis>(std::move(b)));
  for (std::size_t i = 0; i < bases.size(); ++i) {
    out[i].basis = bases[i];
    out[i].label = bases[i]->label;
  }


  for (std::size_t i = 0; i < bases.size(); ++i) {
    // the partner with k <= L/2 holds the eigensolve
    const auto& lab = bases[i]->label;
    const int L = bases[i]->L();
    if (2 * lab.k > L) continue;
    check_cap(bases[i]->dim(), cap);
    RealMatrix A = hamiltonian_block(H, *bases[i]);
    out[i].energies = symmetric_eigen(A, want_vectors);
    if (want_vectors) out[i].vectors = std::make_shared<const RealMatrix>(std::move(A));
  }
  for (std::size_t i = 0; i < bases.size(); ++i) {
    const auto& lab = bases[i]->label;
    if (2 * lab.k <= bases[i]->L()) continue;
    SectorLabel p = lab;
    p.k = bases[i]->L() - lab.k;
    for (std::size_t j = 0; j < bases.size(); ++j)
      if (bases[j]->label == p) {
        out[i].energies = out[j].energies;
        out[i].vectors = out[j].vectors;
      }
  }
  return out;
}

inline EigenSystem diagonalize_sectors(const SpinChainSpec& spec, bool want_vectors, std::size_t cap = kDefaultDenseCap,
                                       const SectorOptions& opt = {}) {
  return diagonalize_sectors(build_hamiltonian(spec), sector_decompose(spec, opt), want_vectors, cap);
}

inline std::vector<double> all_energies(const EigenSystem& sys) {
  std::vector<double> e;
  for (const auto& s : sys) e.insert(e.end(), s.energies.begin(), s.energies.end());
  std::sort(e.begin(), e.end());
  return e;
}

// --- eigenbasis matrix elements -----------------------------------------------------

namespace detail {

struct SplitMatrix {
  RealMatrix re, im;
  bool has_im = false;
};

inline SplitMatrix split(const ComplexMatrix& z) {
  SplitMatrix s;
  split_complex(z, s.re, s.im);
  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    scale = std::max(scale, std::abs(z.data[i].real()));
    worst = std::max(worst, std::abs(z.data[i].imag()));
  }
  s.has_im = worst > 1e-14 * std::max(scale, 1e-300);
  if (!s.has_im) s.im = RealMatrix();
  return s;
}

/// W = B_a^dagger O B_b C_b (n_a x n_b before the left eigenvector product).
inline SplitMatrix right_product(const SparseOperator& O, const Spectrum& a, const Spectrum& b) {
  if (a.basis && b.basis) {
    // sparse block times dense eigenvectors, one eigenvector column at a time
    const SparseBlock M = operator_block_sparse(O, *a.basis, *b.basis);
    const RealMatrix& U = *b.vectors;
    SplitMatrix W;
    W.has_im = !M.is_real();
    W.re = RealMatrix(M.rows, U.cols);
    if (W.has_im) W.im = RealMatrix(M.rows, U.cols);
    for (std::size_t j = 0; j < U.cols; ++j) {
      auto u = U.column(j);
      auto wr = W.re.column(j);
      auto wi = W.has_im ? W.im.column(j) : std::span<double>();
      for (std::size_t c = 0; c < M.cols; ++c) {
        const double x = u[c];
        for (std::size_t e = M.col_start[c]; e < M.col_start[c + 1]; ++e) {
          wr[M.row[e]] += M.value[e].real() * x;
          if (W.has_im) wi[M.row[e]] += M.value[e].imag() * x;
        }
      }
    }
    return W;
  }
  if (a.basis || b.basis) throw InvalidArgument("matrix elements: mixing sector and full-space spectra");
  // full space: apply O to each eigenvector column
  const std::size_t n = b.dim();
  ComplexMatrix W(O.dim(), n);
  StateVector col(O.dim());
  for (std::size_t j = 0; j < n; ++j) {
    auto v = b.full_vector(j);
    O.apply(v, col);
    std::copy(col.begin(), col.end(), W.column(j).begin());
  }
  return split(W);
}

}  // namespace detail

/// Y = V_a^dagger O V_b for two parts of an eigensystem.
inline ComplexMatrix matrix_elements(const SparseOperator& O, const Spectrum& a, const Spectrum& b) {
  a.require_vectors();
  b.require_vectors();
  if (a.complex_vectors || b.complex_vectors) {
    ComplexMatrix Vb(b.full_dim(), b.dim()), Va(a.full_dim(), a.dim());
    for (std::size_t j = 0; j < b.dim(); ++j) {
      StateVector col(O.dim());
      O.apply(b.full_vector(j), col);
      std::copy(col.begin(), col.end(), Vb.column(j).begin());
    }
    for (std::size_t j = 0; j < a.dim(); ++j) {
      auto v = a.full_vector(j);
      std::copy(v.begin(), v.end(), Va.column(j).begin());
    }
    return matmul(Va, Vb, true);
  }
  auto W = detail::right_product(O, a, b);
  const RealMatrix& Ca = *a.vectors;
  RealMatrix yr = matmul(Ca, W.re, true);
  ComplexMatrix Y(yr.rows, yr.cols);
  if (W.has_im) {
    RealMatrix yi = matmul(Ca, W.im, true);
    for (std::size_t i = 0; i < Y.data.size(); ++i) Y.data[i] = {yr.data[i], yi.data[i]};
  } else {
    for (std::size_t i = 0; i < Y.data.size(); ++i) Y.data[i] = yr.data[i];
  }
  return Y;
}

/// Selected elements <a_i|O|b_j> for pairs accepted by `want(i, j)`, without
/// the full left product.
template <typename Want, typename Sink>
void selected_elements(const SparseOperator& O, const Spectrum& a, const Spectrum& b, Want&& want, Sink&& sink) {
  a.require_vectors();
  b.require_vectors();
  if (a.complex_vectors || b.complex_vectors) {
    for (std::size_t j = 0; j < b.dim(); ++j) {
      StateVector ob(O.dim());
      bool any = false;
      for (std::size_t i = 0; i < a.dim(); ++i) {
        if (!want(i, j)) continue;
        if (!any) {
          O.apply(b.full_vector(j), ob);
          any = true;
        }
        sink(i, j, dot(a.full_vector(i), ob));
      }
    }
    return;
  }
  auto W = detail::right_product(O, a, b);
  const RealMatrix& Ca = *a.vectors;
  for (std::size_t j = 0; j < b.dim(); ++j)
    for (std::size_t i = 0; i < a.dim(); ++i) {
      if (!want(i, j)) continue;
      auto ci = Ca.column(i);
      double re = 0.0, im = 0.0;
      for (std::size_t q = 0; q < ci.size(); ++q) {
        re += ci[q] * W.re(q, j);
        if (W.has_im) im += ci[q] * W.im(q, j);
      }
      sink(i, j, Complex{re, im});
    }
}

/// Index of the part whose eigenvectors are the complex conjugates of part i
/// (itself when none).
inline std::size_t conjugate_part(const EigenSystem& sys, std::size_t i) {
  if (!sys[i].label) return i;
  SectorLabel p = *sys[i].label;
  const int L = sys[i].basis->L();
  p.k = (L - p.k) % L;
  for (std::size_t j = 0; j < sys.size(); ++j)
    if (sys[j].label && *sys[j].label == p) return j;
  return i;
}

/// Calls visit(E_row, E_col, |Y|^2, multiplicity) once per distinct block of
/// squared eigenbasis matrix elements, covering every ordered eigenpair of
/// the full space exactly `multiplicity` times in total. Blocks related by
/// Hermiticity are delivered transposed; for real O, conjugate sector pairs
/// are folded into a multiplicity of 2.
template <typename Visit>
void visit_pair_blocks(const SparseOperator& O, const EigenSystem& sys, Visit&& visit) {
  const bool fold = O.is_real();
  const std::size_t n = sys.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      double mult = 1.0;
      if (fold) {
        std::size_t ca = conjugate_part(sys, a), cb = conjugate_part(sys, b);
        if (ca > cb) std::swap(ca, cb);
        if (std::pair(ca, cb) < std::pair(a, b)) continue;
        if (std::pair(ca, cb) != std::pair(a, b)) mult = 2.0;
      }
      if (sys[a].dim() == 0 || sys[b].dim() == 0) continue;
      ComplexMatrix Y = matrix_elements(O, sys[a], sys[b]);
      RealMatrix P(Y.rows, Y.cols);
      for (std::size_t i = 0; i < Y.data.size(); ++i) P.data[i] = std::norm(Y.data[i]);
      Y = ComplexMatrix();
      visit(std::span<const double>(sys[a].energies), std::span<const double>(sys[b].energies), P, mult, a == b);
      if (a != b) {
        RealMatrix T(P.cols, P.rows);
        for (std::size_t j = 0; j < P.cols; ++j)
          for (std::size_t i = 0; i < P.rows; ++i) T(j, i) = P(i, j);
        P = RealMatrix();
        visit(std::span<const double>(sys[b].energies), std::span<const double>(sys[a].energies), T, mult, false);
      }
    }
}

// --- thermal weights ------------------------------------------------------------------

struct ThermalWeights {
  double e_ref = 0.0;  // energies are shifted by e_ref before exponentiation
  double Z = 0.0;      // sum_i exp(-beta (E_i - e_ref))
};

inline ThermalWeights thermal_weights(const EigenSystem& sys, double beta) {
  ThermalWeights w;
  double emin = std::numeric_limits<double>::infinity();
  for (const auto& s : sys)
    for (double e : s.energies) emin = std::min(emin, e);
  double emax = -emin;
  for (const auto& s : sys)
    for (double e : s.energies) emax = std::max(emax, e);
  w.e_ref = beta >= 0 ? emin : emax;
  for (const auto& s : sys)
    for (double e : s.energies) w.Z += std::exp(-beta * (e - w.e_ref));
  return w;
}

// --- diagonal ETH profile -----------------------------------------------------------

/// <E_i|O|E_i> for every eigenvector of one part.
inline std::vector<double> diagonal_elements(const SparseOperator& O, const Spectrum& s) {
  std::vector<double> d(s.dim(), 0.0);
  selected_elements(O, s, s, [](std::size_t i, std::size_t j) { return i == j; },
                    [&](std::size_t i, std::size_t, Complex v) { d[i] = v.real(); });
  return d;
}

struct DiagonalProfile {
  std::vector<double> eps;     // E_i / L, ascending
  std::vector<double> values;  // O_ii
  int window = 27;
  std::vector<double> smoothed_eps;
  std::vector<double> smoothed;
};

inline std::vector<double> moving_average(std::span<const double> x, int window) {
  if (window < 1) throw InvalidArgument("moving_average: window must be positive");
  if (static_cast<std::size_t>(window) > x.size()) throw InvalidArgument("moving_average: window larger than series");
  std::vector<double> out(x.size() - window + 1);
  double s = std::accumulate(x.begin(), x.begin() + window, 0.0);
  out[0] = s / window;
  for (std::size_t i = 1; i < out.size(); ++i) {
    s += x[i + window - 1] - x[i - 1];
    out[i] = s / window;
  }
  // re-sum periodically against drift
  for (std::size_t i = 0; i < out.size(); i += 1024)
    out[i] = std::accumulate(x.begin() + static_cast<long>(i), x.begin() + static_cast<long>(i) + window, 0.0) / window;
  return out;
}

inline DiagonalProfile diagonal_profile(const EigenSystem& sys, const SparseOperator& O, int L, int window = 27) {
  if (window < 1 || window % 2 == 0) throw InvalidArgument("diagonal_profile: window must be odd and positive");
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : sys) {
    if (s.dim() == 0) continue;
    s.require_vectors();
    auto d = diagonal_elements(O, s);
    for (std::size_t i = 0; i < s.dim(); ++i) pts.emplace_back(s.energies[i] / L, d[i]);
  }
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  DiagonalProfile p;
  p.window = window;
  for (const auto& [e, v] : pts) {
    p.eps.push_back(e);
    p.values.push_back(v);
  }
  p.smoothed = moving_average(p.values, window);
  p.smoothed_eps = moving_average(p.eps, window);
  return p;
}

// --- off-diagonal estimator -----------------------------------------------------------

struct FrequencyBin {
  double omega = 0.0;
  double value = 0.0;
  std::uint64_t count = 0;
};

struct FrequencyProfile {
  double beta = 0.0;
  double bin_width = 0.0;
  std::vector<FrequencyBin> bins;  // ascending omega
};

/// Default coarse-graining width 0.025 (E_max - E_min) / L.
inline double default_bin_width(const EigenSystem& sys, int L) {
  auto e = all_energies(sys);
  if (e.empty()) throw InvalidArgument("default_bin_width: empty spectrum");
  return 0.025 * (e.back() - e.front()) / L;
}

/// Binned (1/Z) sum_{i != j} e^{-beta (E_i + E_j)/2} |O_ij|^2 / eps over
/// disjoint bins centred at multiples of eps.
inline FrequencyProfile f2_binned(const EigenSystem& sys, const SparseOperator& O, double beta, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("f2_binned: bin width must be positive");
  auto e = all_energies(sys);
  if (e.empty()) throw InvalidArgument("f2_binned: empty spectrum");
  const double span_e = e.back() - e.front();
  const long nmax = std::lround(span_e / eps) + 1;
  std::vector<double> sum(2 * nmax + 1, 0.0);
  std::vector<std::uint64_t> cnt(2 * nmax + 1, 0);
  const auto tw = thermal_weights(sys, beta);
  visit_pair_blocks(O, sys, [&](std::span<const double> Er, std::span<const double> Ec, const RealMatrix& P,
                                double mult, bool same_part) {
    std::vector<double> wr(Er.size()), wc(Ec.size());
    for (std::size_t i = 0; i < Er.size(); ++i) wr[i] = std::exp(-0.5 * beta * (Er[i] - tw.e_ref));
    for (std::size_t j = 0; j < Ec.size(); ++j) wc[j] = std::exp(-0.5 * beta * (Ec[j] - tw.e_ref));
    const auto m = static_cast<std::uint64_t>(mult);
    for (std::size_t j = 0; j < Ec.size(); ++j)
      for (std::size_t i = 0; i < Er.size(); ++i) {
        if (same_part && i == j) continue;
        const long bin = std::lround((Er[i] - Ec[j]) / eps) + nmax;
        sum[bin] += mult * wr[i] * wc[j] * P(i, j);
        cnt[bin] += m;
      }
  });
  FrequencyProfile prof;
  prof.beta = beta;
  prof.bin_width = eps;
  for (long b = 0; b <= 2 * nmax; ++b)
    prof.bins.push_back({(b - nmax) * eps, sum[b] / (tw.Z * eps), cnt[b]});
  return prof;
}

// --- exact dynamics -------------------------------------------------------------------

/// <O>_beta from the diagonal elements.
inline double thermal_expectation(const EigenSystem& sys, const SparseOperator& O, double beta);

/// Exact C(t) = (1/Z) sum_ij e^{-beta E_i} e^{i(E_i - E_j)t} |O_ij|^2 minus
/// <O>_beta^2, on the given times.
inline std::vector<Complex> exact_autocorrelator(const EigenSystem& sys, const SparseOperator& O, double beta,
                                                 std::span<const double> times) {
  const auto tw = thermal_weights(sys, beta);
  const std::size_t K = times.size();
  std::vector<Complex> C(K, 0.0);
  visit_pair_blocks(O, sys, [&](std::span<const double> Er, std::span<const double> Ec, const RealMatrix& P,
                                double mult, bool) {
    // Q = P * exp(-i E_c t)
    RealMatrix cs(Ec.size(), K), sn(Ec.size(), K);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < Ec.size(); ++j) {
        cs(j, k) = std::cos(Ec[j] * times[k]);
        sn(j, k) = -std::sin(Ec[j] * times[k]);
      }
    RealMatrix qr = matmul(P, cs), qi = matmul(P, sn);
    for (std::size_t k = 0; k < K; ++k) {
      Complex acc = 0.0;
      for (std::size_t i = 0; i < Er.size(); ++i) {
        const Complex u = std::exp(Complex(-beta * (Er[i] - tw.e_ref), Er[i] * times[k]));
        acc += u * Complex(qr(i, k), qi(i, k));
      }
      C[k] += mult * acc;
    }
  });
  const double mean = thermal_expectation(sys, O, beta);
  for (auto& c : C) c = c / tw.Z - mean * mean;
  return C;
}

/// Infinite-time average of the connected autocorrelator, degeneracies within
/// `tol` included: (1/Z) sum_{|E_i - E_j| < tol} e^{-beta E_i} |O_ij|^2 - <O>^2.
inline double diagonal_ensemble_plateau(const EigenSystem& sys, const SparseOperator& O, double beta,
                                        double tol = 1e-9) {
  const auto tw = thermal_weights(sys, beta);
  double acc = 0.0;
  // degeneracies across parts only occur between conjugate sectors
  for (std::size_t a = 0; a < sys.size(); ++a) {
    std::vector<std::size_t> partners{a};
    const std::size_t c = conjugate_part(sys, a);
    if (c != a) partners.push_back(c);
    for (std::size_t b : partners) {
      const auto& Ea = sys[a].energies;
      const auto& Eb = sys[b].energies;
      if (Ea.empty() || Eb.empty()) continue;
      selected_elements(O, sys[a], sys[b],
                        [&](std::size_t i, std::size_t j) { return std::abs(Ea[i] - Eb[j]) < tol; },
                        [&](std::size_t i, std::size_t, Complex v) {
                          acc += std::exp(-beta * (Ea[i] - tw.e_ref)) * std::norm(v);
                        });
    }
  }
  const double mean = thermal_expectation(sys, O, beta);
  return acc / tw.Z - mean * mean;
}

inline double thermal_expectation(const EigenSystem& sys, const SparseOperator& O, double beta) {
  const auto tw = thermal_weights(sys, beta);
  double acc = 0.0;
  for (const auto& s : sys) {
    if (s.dim() == 0) continue;
    auto d = diagonal_elements(O, s);
    for (std::size_t i = 0; i < s.dim(); ++i) acc += std::exp(-beta * (s.energies[i] - tw.e_ref)) * d[i];
  }
  return acc / tw.Z;
}

// --- level statistics -----------------------------------------------------------------

struct GapRatioResult {
  double mean_r = 0.0;
  std::size_t count = 0;
  std::size_t degenerate = 0;
};

/// Mean adjacent-gap ratio over the central `middle_fraction` of the levels (by index).
inline GapRatioResult gap_ratio(std::span<const double> energies, double middle_fraction = 0.5) {
  if (!(middle_fraction > 0.0 && middle_fraction <= 1.0))
    throw InvalidArgument("gap_ratio: middle fraction must lie in (0, 1]");
  std::vector<double> e(energies.begin(), energies.end());
  std::sort(e.begin(), e.end());
  const std::size_t n = e.size();
  const auto keep = static_cast<std::size_t>(std::llround(middle_fraction * static_cast<double>(n)));
  const std::size_t lo = (n - keep) / 2, hi = lo + keep;
  if (keep < 4) throw InvalidArgument("gap_ratio: fewer than 4 levels in the window");
  GapRatioResult r;
  double sum = 0.0;
  for (std::size_t i = lo + 1; i + 1 < hi; ++i) {
    const double d1 = e[i] - e[i - 1], d2 = e[i + 1] - e[i];
    const double mx = std::max(d1, d2);
    if (mx <= 0.0 || std::min(d1, d2) <= 0.0) {
      ++r.degenerate;
      ++r.count;
      continue;
    }
    sum += std::min(d1, d2) / mx;
    ++r.count;
  }
  if (r.degenerate > 0) warn("gap_ratio: " + std::to_string(r.degenerate) + " degenerate spacings counted as r = 0");
  r.mean_r = sum / static_cast<double>(r.count);
  return r;
}

}  // namespace ethdyn
