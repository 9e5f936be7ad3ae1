// sectors.hpp - momentum / reflection / field-flip symmetry sectors
//
// Each sector basis vector is invariant under P*K (site reflection followed by
// complex conjugation). H is real and reflection symmetric, so its blocks in
// these bases are real symmetric.
#pragma once

#include <map>
#include <memory>
#include <numbers>

#include "ethdyn/dense.hpp"
#include "ethdyn/lattice.hpp"

namespace ethdyn {

struct SectorLabel {
  int k = 0;       // quasimomentum index, momentum 2*pi*k/L
  int parity = 0;  // reflection parity +-1, 0 when not resolved
  int flip = 0;    // field-flip parity +-1, 0 when not resolved

  std::string to_string() const {
    std::string s = "k=" + std::to_string(k);
    if (parity != 0) s += ",p=" + std::to_string(parity);
    if (flip != 0) s += ",pz=" + std::to_string(flip);
    return s;
  }
  auto operator<=>(const SectorLabel&) const = default;
};

struct SectorOptions {
  bool reflection = true;  // split k = 0, pi into parity blocks
  bool flip = false;       // resolve the field-flip Z2 (needs h_z = 0)
};

/// Sparse set of orthonormal full-space vectors spanning one sector.
class SectorBasis {
 public:
  SectorLabel label;

  std::size_t dim() const { return offsets_.size() - 1; }
  std::size_t full_dim() const { return full_dim_; }
  int L() const { return L_; }

  std::span<const std::uint32_t> states(std::size_t b) const {
    return {states_.data() + offsets_[b], offsets_[b + 1] - offsets_[b]};
  }
  std::span<const Complex> amplitudes(std::size_t b) const {
    return {amps_.data() + offsets_[b], offsets_[b + 1] - offsets_[b]};
  }

  /// Basis vectors containing full-space state s: up to two (index, amplitude).
  struct Slot {
    std::int32_t index = -1;
    Complex amp = 0.0;
  };
  std::span<const Slot> slots(std::uint64_t s) const { return {rev_.data() + 2 * s, 2}; }

  /// full += B * c
  template <typename Scalar>
  void embed(std::span<const Scalar> c, std::span<Complex> full) const {
    if (c.size() != dim() || full.size() != full_dim_) throw InvalidArgument("embed: dimension mismatch");
    for (std::size_t b = 0; b < dim(); ++b) {
      auto st = states(b);
      auto am = amplitudes(b);
      for (std::size_t q = 0; q < st.size(); ++q) full[st[q]] += am[q] * c[b];
    }
  }

  /// B^dagger * full
  StateVector project(std::span<const Complex> full) const {
    if (full.size() != full_dim_) throw InvalidArgument("project: dimension mismatch");
    StateVector c(dim(), 0.0);
    for (std::size_t b = 0; b < dim(); ++b) {
      auto st = states(b);
      auto am = amplitudes(b);
      Complex s = 0.0;
      for (std::size_t q = 0; q < st.size(); ++q) s += std::conj(am[q]) * full[st[q]];
      c[b] = s;
    }
    return c;
  }

  /// Elementwise complex conjugate basis (the sector with opposite momentum).
  SectorBasis conjugated(SectorLabel new_label) const {
    SectorBasis r = *this;
    r.label = new_label;
    for (auto& a : r.amps_) a = std::conj(a);
    for (auto& s : r.rev_) s.amp = std::conj(s.amp);
    return r;
  }

 private:
  friend class SectorBuilder;
  int L_ = 0;
  std::size_t full_dim_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> states_;
  std::vector<Complex> amps_;
  std::vector<Slot> rev_;

  void push_vector(const std::vector<std::pair<std::uint32_t, Complex>>& v) {
    const auto idx = static_cast<std::int32_t>(dim());
    for (const auto& [s, a] : v) {
      states_.push_back(s);
      amps_.push_back(a);
      auto* slot = &rev_[2 * s];
      if (slot->index >= 0) ++slot;
      if (slot->index >= 0) throw Error("sector basis: state shared by more than two vectors");
      *slot = {idx, a};
    }
    offsets_.push_back(states_.size());
  }
};

/// Enumerates orbit representatives once and builds sector bases from them.
class SectorBuilder {
 public:
  SectorBuilder(int L, bool with_flip) : L_(L), flip_(with_flip), dim_(ipow3(L)) {
    if (L < 1 || L > kMaxSites) throw InvalidArgument("SectorBuilder: L out of range");
    for (std::uint64_t s = 0; s < dim_; ++s)
      if (orbit_min(s) == s) reps_.push_back(static_cast<std::uint32_t>(s));
  }

  std::size_t representative_count() const { return reps_.size(); }

  SectorBasis build(SectorLabel label) const {
    const bool real_char = (label.k == 0) || (2 * label.k == L_);
    if (label.parity != 0 && !real_char)
      throw InvalidArgument("sector: reflection parity is only resolved at k = 0 or pi");
    if ((label.flip != 0) != flip_) throw InvalidArgument("sector: field-flip resolution mismatch with builder");

    SectorBasis B;
    B.label = label;
    B.L_ = L_;
    B.full_dim_ = dim_;
    B.rev_.assign(2 * dim_, {});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (auto r : reps_) {
      auto v = sector_vector(r, label);
      if (v.empty()) continue;
      const std::uint64_t pr = reflect(r);
      const std::uint32_t rp = static_cast<std::uint32_t>(orbit_min(pr));
      if (rp < r) continue;  // emitted together with its partner
      // lambda: P K |r> = lambda |r'>
      auto vp = rp == r ? v : sector_vector(rp, label);
      const Complex pk_at_rp = std::conj(lookup(v, static_cast<std::uint32_t>(reflect(rp))));
      const Complex lambda = pk_at_rp / lookup(vp, rp);
      if (rp == r) {
        const Complex phase = std::polar(1.0, 0.5 * std::arg(lambda));
        if (label.parity != 0 && static_cast<int>(std::lround(lambda.real())) != label.parity) continue;
        for (auto& [s, a] : v) a *= phase;
        B.push_vector(v);
      } else {
        if (label.parity != -1) B.push_vector(combine(v, vp, 1.0, lambda, inv_sqrt2));
        if (label.parity != 1) {
          const Complex i{0.0, 1.0};
          B.push_vector(combine(v, vp, i, -i * lambda, inv_sqrt2));
        }
      }
    }
    return B;
  }

  /// g|s> for g = T^l F^f.
  std::uint64_t act(std::uint64_t s, int l, int f) const {
    for (int i = 0; i < l; ++i) s = translate_state(s, L_);
    return f ? (dim_ - 1 - s) : s;
  }

  std::uint64_t reflect(std::uint64_t s) const {
    std::uint64_t out = 0;
    std::uint64_t rest = s;
    for (int j = 0; j < L_; ++j) {
      const std::uint64_t t = rest % 3;
      rest /= 3;
      out += t * ipow3((L_ - j) % L_);
    }
    return out;
  }

 private:
  using SparseVec = std::vector<std::pair<std::uint32_t, Complex>>;

  std::uint64_t orbit_min(std::uint64_t s) const {
    std::uint64_t best = s, t = s;
    for (int l = 0; l < L_; ++l) {
      best = std::min(best, t);
      if (flip_) best = std::min(best, dim_ - 1 - t);
      t = translate_state(t, L_);
    }
    return best;
  }

  // N * sum_g chi(g)^* g|r>, empty if it vanishes.
  SparseVec sector_vector(std::uint32_t r, const SectorLabel& label) const {
    std::map<std::uint32_t, Complex> acc;
    std::uint64_t t = r;
    for (int l = 0; l < L_; ++l) {
      const Complex chi_t = std::polar(1.0, -2.0 * std::numbers::pi * label.k * l / L_);
      acc[static_cast<std::uint32_t>(t)] += chi_t;
      if (flip_) acc[static_cast<std::uint32_t>(dim_ - 1 - t)] += chi_t * static_cast<double>(label.flip);
      t = translate_state(t, L_);
    }
    double n2 = 0.0;
    for (const auto& [s, a] : acc) n2 += std::norm(a);
    if (n2 < 1e-10) return {};
    SparseVec v;
    const double inv = 1.0 / std::sqrt(n2);
    for (const auto& [s, a] : acc)
      if (std::abs(a) * inv > 1e-13) v.emplace_back(s, a * inv);
    return v;
  }

  static Complex lookup(const SparseVec& v, std::uint32_t s) {
    auto it = std::lower_bound(v.begin(), v.end(), s, [](const auto& e, std::uint32_t x) { return e.first < x; });
    if (it == v.end() || it->first != s) throw Error("sector basis: inconsistent reflection partner");
    return it->second;
  }

  // (ca*a + cb*b) * scale, a and b have disjoint supports
  static SparseVec combine(const SparseVec& a, const SparseVec& b, Complex ca, Complex cb, double scale) {
    SparseVec out;
    for (const auto& [s, x] : a) out.emplace_back(s, ca * x * scale);
    for (const auto& [s, x] : b) out.emplace_back(s, cb * x * scale);
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    return out;
  }

  int L_;
  bool flip_;
  std::uint64_t dim_;
  std::vector<std::uint32_t> reps_;
};

/// All sector labels for a chain of length L.
inline std::vector<SectorLabel> sector_labels(int L, const SectorOptions& opt) {
  std::vector<SectorLabel> out;
  const std::vector<int> flips = opt.flip ? std::vector<int>{1, -1} : std::vector<int>{0};
  for (int f : flips)
    for (int k = 0; k < L; ++k) {
      const bool real_char = k == 0 || 2 * k == L;
      if (real_char && opt.reflection) {
        out.push_back({k, 1, f});
        out.push_back({k, -1, f});
      } else {
        out.push_back({k, 0, f});
      }
    }
  return out;
}

/// Sector bases of the chain. Sectors with k > L/2 are conjugates of L - k,
/// so their real Hamiltonian blocks coincide.
inline std::vector<SectorBasis> sector_decompose(const SpinChainSpec& spec, const SectorOptions& opt = {}) {
  spec.validate();
  if (opt.flip && spec.model == Model::TiltedIsing && spec.hz != 0.0)
    throw InvalidArgument("field-flip sectors require h_z = 0");
  SectorBuilder builder(spec.L, opt.flip);
  std::vector<SectorBasis> out;
  std::map<SectorLabel, std::size_t> where;
  for (const auto& lab : sector_labels(spec.L, opt)) {
    if (2 * lab.k > spec.L) {
      SectorLabel partner = lab;
      partner.k = spec.L - lab.k;
      out.push_back(out[where.at(partner)].conjugated(lab));
    } else {
      out.push_back(builder.build(lab));
    }
    where[lab] = out.size() - 1;
  }
  return out;
}

/// Index of the sector whose Hamiltonian block is identical (conjugate partner), or itself.
inline std::size_t block_partner(const std::vector<SectorBasis>& sectors, std::size_t i) {
  const auto& lab = sectors[i].label;
  const int L = sectors[i].L();
  SectorLabel p = lab;
  p.k = (L - lab.k) % L;
  for (std::size_t j = 0; j < sectors.size(); ++j)
    if (sectors[j].label == p) return j;
  return i;
}

/// Column-compressed sector block of an operator.
struct SparseBlock {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> col_start{0};  // entries of column b: [col_start[b], col_start[b + 1])
  std::vector<std::uint32_t> row;
  std::vector<Complex> value;

  /// True when every imaginary part is below 1e-14 of the largest real part.
  bool is_real() const {
    double scale = 0.0, worst = 0.0;
    for (const auto& v : value) {
      scale = std::max(scale, std::abs(v.real()));
      worst = std::max(worst, std::abs(v.imag()));
    }
    return worst <= 1e-14 * std::max(scale, 1e-300);
  }

  ComplexMatrix to_dense() const {
    ComplexMatrix M(rows, cols);
    for (std::size_t b = 0; b < cols; ++b)
      for (std::size_t e = col_start[b]; e < col_start[b + 1]; ++e) M(row[e], b) = value[e];
    return M;
  }
};

/// M = B_row^dagger O B_col for Hermitian O, keeping only the nonzero entries.
inline SparseBlock operator_block_sparse(const SparseOperator& O, const SectorBasis& row, const SectorBasis& col) {
  if (O.dim() != row.full_dim() || O.dim() != col.full_dim()) throw InvalidArgument("operator_block: dimension mismatch");
  if (!O.hermitian()) throw InvalidArgument("operator_block: operator must be Hermitian");
  SparseBlock M;
  M.rows = row.dim();
  M.cols = col.dim();
  std::vector<Complex> w(O.dim(), 0.0), acc(row.dim(), 0.0);
  std::vector<std::uint32_t> touched, hit;
  std::vector<char> mark(O.dim(), 0), mark_row(row.dim(), 0);
  for (std::size_t b = 0; b < col.dim(); ++b) {
    touched.clear();
    hit.clear();
    auto st = col.states(b);
    auto am = col.amplitudes(b);
    for (std::size_t q = 0; q < st.size(); ++q) {
      // column s of a Hermitian O is the conjugate of row s
      auto rc = O.row_cols(st[q]);
      auto rv = O.row_values(st[q]);
      for (std::size_t e = 0; e < rc.size(); ++e) {
        if (!mark[rc[e]]) {
          mark[rc[e]] = 1;
          touched.push_back(rc[e]);
        }
        w[rc[e]] += std::conj(rv[e]) * am[q];
      }
    }
    for (auto s : touched) {
      for (const auto& slot : row.slots(s))
        if (slot.index >= 0) {
          const auto i = static_cast<std::uint32_t>(slot.index);
          if (!mark_row[i]) {
            mark_row[i] = 1;
            hit.push_back(i);
          }
          acc[i] += std::conj(slot.amp) * w[s];
        }
      w[s] = 0.0;
      mark[s] = 0;
    }
    std::sort(hit.begin(), hit.end());
    for (auto i : hit) {
      if (acc[i] != 0.0) {
        M.row.push_back(i);
        M.value.push_back(acc[i]);
      }
      acc[i] = 0.0;
      mark_row[i] = 0;
    }
    M.col_start.push_back(M.row.size());
  }
  return M;
}

inline ComplexMatrix operator_block(const SparseOperator& O, const SectorBasis& row, const SectorBasis& col) {
  return operator_block_sparse(O, row, col).to_dense();
}

/// Real symmetric Hamiltonian block; throws if the block is not real.
inline RealMatrix hamiltonian_block(const SparseOperator& H, const SectorBasis& sector) {
  ComplexMatrix M = operator_block(H, sector, sector);
  RealMatrix R(M.rows, M.cols);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < M.data.size(); ++i) {
    R.data[i] = M.data[i].real();
    worst = std::max(worst, std::abs(M.data[i].imag()));
    scale = std::max(scale, std::abs(M.data[i]));
  }
  if (worst > 1e-10 * std::max(scale, 1.0))
    throw Error("hamiltonian_block: block is not real (" + std::to_string(worst) + "); H must be real and reflection symmetric");
  for (std::size_t i = 0; i < R.rows; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double a = 0.5 * (R(i, j) + R(j, i));
      R(i, j) = R(j, i) = a;
    }
  return R;
}

}  // namespace ethdyn
