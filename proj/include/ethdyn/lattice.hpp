// lattice.hpp - spin-1 chain models, local observables and spectral bounds
//
// Basis: product states of S^z eigenstates, one trit per site, site 1 is the
// least significant trit. Trit t carries magnetisation m = 1 - t, so the
// single-site matrices below are written in the order (m = +1, 0, -1).
#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include <lapacke.h>

#include "ethdyn/sparse_operator.hpp"

namespace ethdyn {

enum class Model { TiltedIsing, LongRangeIsing };

inline std::string to_string(Model m) { return m == Model::TiltedIsing ? "tilted-ising" : "long-range-ising"; }

struct SpinChainSpec {
  int L = 8;
  Model model = Model::TiltedIsing;
  double J = 0.707;
  double hx = 1.1;
  double hz = 0.9;
  double alpha = 1.5;

  void validate() const {
    if (L < 2) throw InvalidArgument("SpinChainSpec: L must be at least 2");
    if (L > kMaxSites) throw InvalidArgument("SpinChainSpec: L exceeds the 32-bit index range (max 20)");
    if (model == Model::LongRangeIsing && !(alpha > 0.0)) throw InvalidArgument("SpinChainSpec: alpha must be positive");
    for (double v : {J, hx, hz, alpha})
      if (!std::isfinite(v)) throw InvalidArgument("SpinChainSpec: non-finite coupling");
  }

  std::uint64_t dim() const { return ipow3(L); }

  /// Canonical text form, also used as the cache key.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "model=" << to_string(model) << ";L=" << L << ";J=" << J << ";hx=" << hx;
    if (model == Model::TiltedIsing) os << ";hz=" << hz;
    else os << ";alpha=" << alpha;
    os << ";boundary=periodic";
    return os.str();
  }

  bool operator==(const SpinChainSpec&) const = default;
};

inline SpinChainSpec tilted_ising_preset(int L) {
  return {L, Model::TiltedIsing, 0.707, 1.1, 0.9, 1.5};
}

inline SpinChainSpec long_range_ising_preset(int L) {
  return {L, Model::LongRangeIsing, 2.0, 1.1, 0.0, 1.5};
}

inline SpinChainSpec preset(std::string_view name, int L) {
  if (name == "tilted-ising-paper") return tilted_ising_preset(L);
  if (name == "long-range-ising-paper") return long_range_ising_preset(L);
  throw InvalidArgument("unknown model preset '" + std::string(name) + "'");
}

/// Periodic chord distance between sites i and j (1-based or 0-based alike).
inline int chord_distance(int i, int j, int L) {
  const int d = std::abs(j - i);
  return std::min(d, L - d);
}

/// N_alpha = (sum_{i=2..L} r_{i1}^{-2 alpha})^{-1/2}.
inline double long_range_normalization(int L, double alpha) {
  double s = 0.0;
  for (int i = 2; i <= L; ++i) s += std::pow(static_cast<double>(chord_distance(i, 1, L)), -2.0 * alpha);
  return 1.0 / std::sqrt(s);
}

inline int trit(std::uint64_t state, int site0) { return static_cast<int>((state / ipow3(site0)) % 3); }

/// Decodes all trits of `state` into m-values (+1, 0, -1).
inline void magnetisations(std::uint64_t state, int L, std::span<int> m) {
  for (int l = 0; l < L; ++l) {
    m[l] = 1 - static_cast<int>(state % 3);
    state /= 3;
  }
}

// --- single-site spin-1 operators -------------------------------------------------

enum class SpinAxis { X, Y, Z };

using LocalMatrix = std::array<std::array<Complex, 3>, 3>;

inline LocalMatrix local_matrix(SpinAxis a) {
  const double r = 1.0 / std::sqrt(2.0);
  const Complex i{0.0, 1.0};
  switch (a) {
    case SpinAxis::X:
      return {{{0.0, r, 0.0}, {r, 0.0, r}, {0.0, r, 0.0}}};
    case SpinAxis::Y:
      return {{{0.0, -i * r, 0.0}, {i * r, 0.0, -i * r}, {0.0, i * r, 0.0}}};
    case SpinAxis::Z:
      return {{{1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, -1.0}}};
  }
  return {};
}

inline char axis_char(SpinAxis a) { return a == SpinAxis::X ? 'x' : a == SpinAxis::Y ? 'y' : 'z'; }

// --- Hamiltonian ------------------------------------------------------------------

/// Matrix-free H = diag(E_zz + E_z) + c * sum_l (S^x_l * sqrt 2), c = hx/sqrt 2.
/// Both models share this structure; only the diagonal differs.
class SpinChainKernel {
 public:
  explicit SpinChainKernel(const SpinChainSpec& spec) : spec_(spec) {
    spec.validate();
    if (spec.L == 2 && spec.model == Model::TiltedIsing)
      warn("L = 2 periodic chain: both bonds couple the same pair of sites and are summed");
    L_ = spec.L;
    dim_ = spec.dim();
    c_ = spec.hx / std::sqrt(2.0);
    build_diagonal();
    chunk_sites_ = std::min(L_, 8);
    chunk_ = ipow3(chunk_sites_);
  }

  std::size_t dim() const { return dim_; }
  const SpinChainSpec& spec() const { return spec_; }
  std::span<const double> diagonal() const { return diag_; }
  double transverse_coefficient() const { return c_; }

  void apply(std::span<const Complex> in, std::span<Complex> out) const {
    if (in.size() != dim_ || out.size() != dim_) throw InvalidArgument("apply: dimension mismatch");
    const double* x = reinterpret_cast<const double*>(in.data());
    double* y = reinterpret_cast<double*>(out.data());
    const double c = c_;
    for (std::uint64_t s0 = 0; s0 < dim_; s0 += chunk_) {
      double* yc = y + 2 * s0;
      const double* xc = x + 2 * s0;
      const double* dc = diag_.data() + s0;
      for (std::uint64_t i = 0; i < chunk_; ++i) {
        yc[2 * i] = dc[i] * xc[2 * i];
        yc[2 * i + 1] = dc[i] * xc[2 * i + 1];
      }
      // sites inside the chunk
      site_pass<2>(yc, xc, c, chunk_, 2);
      if (chunk_sites_ > 1) site_pass<6>(yc, xc, c, chunk_, 6);
      if (chunk_sites_ > 2) site_pass<18>(yc, xc, c, chunk_, 18);
      for (int l = 3; l < chunk_sites_; ++l) site_pass<0>(yc, xc, c, chunk_, 2 * ipow3(l));
      // sites above the chunk: the trit is constant over the whole chunk
      for (int l = chunk_sites_; l < L_; ++l) {
        const std::uint64_t s = ipow3(l);
        const int t = static_cast<int>((s0 / s) % 3);
        const std::uint64_t n = 2 * chunk_;
        if (t > 0) {
          const double* xn = x + 2 * (s0 - s);
          for (std::uint64_t k = 0; k < n; ++k) yc[k] += c * xn[k];
        }
        if (t < 2) {
          const double* xn = x + 2 * (s0 + s);
          for (std::uint64_t k = 0; k < n; ++k) yc[k] += c * xn[k];
        }
      }
    }
  }

  std::pair<double, double> gershgorin_bounds() const {
    const double radius = 2.0 * std::abs(c_) * L_;
    auto [lo, hi] = std::minmax_element(diag_.begin(), diag_.end());
    return {*lo - radius, *hi + radius};
  }

  SparseOperator to_sparse() const {
    return SparseOperator::from_rows(dim_, [&](std::size_t r, std::vector<SparseEntry>& e) {
      e.push_back({static_cast<std::uint32_t>(r), diag_[r]});
      std::uint64_t rest = r;
      for (int l = 0; l < L_; ++l) {
        const int t = static_cast<int>(rest % 3);
        rest /= 3;
        const std::uint64_t s = ipow3(l);
        if (t > 0) e.push_back({static_cast<std::uint32_t>(r - s), c_});
        if (t < 2) e.push_back({static_cast<std::uint32_t>(r + s), c_});
      }
    }, true);
  }

 private:
  // One site with trit stride n/2 (in complex units) over a contiguous block.
  template <std::uint64_t N>
  static void site_pass(double* __restrict y, const double* __restrict x, double c, std::uint64_t len,
                        std::uint64_t n_runtime) {
    const std::uint64_t n = N ? N : n_runtime;
    for (std::uint64_t b = 0; b < 2 * len; b += 3 * n) {
      double* y0 = y + b;
      const double* x0 = x + b;
      for (std::uint64_t k = 0; k < n; ++k) {
        y0[k] += c * x0[n + k];
        y0[n + k] += c * (x0[k] + x0[2 * n + k]);
        y0[2 * n + k] += c * x0[n + k];
      }
    }
  }

  void build_diagonal() {
    diag_.assign(dim_, 0.0);
    std::vector<double> coupling;  // coupling[d] for chord distance d
    if (spec_.model == Model::TiltedIsing) {
      coupling.assign(L_ / 2 + 1, 0.0);
    } else {
      const double norm = long_range_normalization(L_, spec_.alpha);
      coupling.assign(L_ / 2 + 1, 0.0);
      for (int d = 1; d <= L_ / 2; ++d) coupling[d] = spec_.J / (norm * std::pow(static_cast<double>(d), spec_.alpha));
    }
    std::vector<int> m(L_);
    for (std::uint64_t s = 0; s < dim_; ++s) {
      magnetisations(s, L_, m);
      double e = 0.0;
      if (spec_.model == Model::TiltedIsing) {
        for (int l = 0; l < L_; ++l) e += spec_.J * m[l] * m[(l + 1) % L_] + spec_.hz * m[l];
      } else {
        for (int i = 0; i < L_; ++i)
          for (int j = i + 1; j < L_; ++j) e += coupling[chord_distance(i, j, L_)] * m[i] * m[j];
      }
      diag_[s] = e;
    }
  }

  SpinChainSpec spec_;
  int L_ = 0;
  std::uint64_t dim_ = 0;
  double c_ = 0.0;
  int chunk_sites_ = 0;
  std::uint64_t chunk_ = 1;
  std::vector<double> diag_;
};

inline SparseOperator build_hamiltonian(const SpinChainSpec& spec) { return SpinChainKernel(spec).to_sparse(); }

// --- observables ------------------------------------------------------------------

struct SiteFactor {
  int site;  // 1-based
  SpinAxis axis;
  bool operator==(const SiteFactor&) const = default;
};

/// Product of single-site spin operators, optionally wrapped as i[H, product].
struct ObservableDescriptor {
  std::vector<SiteFactor> factors;
  bool commutator = false;

  /// Parses "Sx1", "Sx1Sx2", "Sz3", "i[H,Sx1]" (whitespace ignored, case-insensitive axis).
  static ObservableDescriptor parse(std::string_view text) {
    std::string s;
    for (char ch : text)
      if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
    ObservableDescriptor d;
    std::string_view body = s;
    if (body.starts_with("i[H,") || body.starts_with("i[h,")) {
      if (!body.ends_with("]")) throw InvalidArgument("observable: unterminated commutator in '" + s + "'");
      d.commutator = true;
      body = body.substr(4, body.size() - 5);
    }
    std::size_t p = 0;
    while (p < body.size()) {
      if (body[p] != 'S' && body[p] != 's') throw InvalidArgument("observable: expected 'S' in '" + s + "'");
      if (p + 1 >= body.size()) throw InvalidArgument("observable: missing axis in '" + s + "'");
      SpinAxis axis;
      switch (std::tolower(static_cast<unsigned char>(body[p + 1]))) {
        case 'x': axis = SpinAxis::X; break;
        case 'y': axis = SpinAxis::Y; break;
        case 'z': axis = SpinAxis::Z; break;
        default: throw InvalidArgument("observable: axis must be x, y or z in '" + s + "'");
      }
      p += 2;
      std::size_t q = p;
      while (q < body.size() && std::isdigit(static_cast<unsigned char>(body[q]))) ++q;
      if (q == p) throw InvalidArgument("observable: missing site index in '" + s + "'");
      d.factors.push_back({std::stoi(std::string(body.substr(p, q - p))), axis});
      p = q;
    }
    if (d.factors.empty()) throw InvalidArgument("observable: empty descriptor");
    return d;
  }

  /// S^x string of length n starting at site 1.
  static ObservableDescriptor sx_string(int n) {
    ObservableDescriptor d;
    for (int l = 1; l <= n; ++l) d.factors.push_back({l, SpinAxis::X});
    return d;
  }

  std::string to_string() const {
    std::string s;
    for (const auto& f : factors) s += std::string("S") + axis_char(f.axis) + std::to_string(f.site);
    return commutator ? "i[H," + s + "]" : s;
  }

  void validate(int L) const {
    if (factors.empty()) throw InvalidArgument("observable: empty descriptor");
    for (std::size_t a = 0; a < factors.size(); ++a) {
      if (factors[a].site < 1 || factors[a].site > L)
        throw InvalidArgument("observable: site " + std::to_string(factors[a].site) + " out of range [1, " +
                              std::to_string(L) + "]");
      for (std::size_t b = 0; b < a; ++b)
        if (factors[a].site == factors[b].site)
          throw InvalidArgument("observable: repeated site " + std::to_string(factors[a].site));
    }
  }
};

/// Tensor-product observable (the commutator flag is ignored here, see build_observable).
inline SparseOperator build_product_observable(const ObservableDescriptor& desc, int L) {
  desc.validate(L);
  const std::size_t dim = ipow3(L);
  std::vector<LocalMatrix> mats;
  std::vector<std::uint64_t> strides;
  for (const auto& f : desc.factors) {
    mats.push_back(local_matrix(f.axis));
    strides.push_back(ipow3(f.site - 1));
  }
  const std::size_t nf = mats.size();
  return SparseOperator::from_rows(dim, [&](std::size_t r, std::vector<SparseEntry>& e) {
    // enumerate all output trit combinations of the acted-on sites
    std::vector<int> tin(nf);
    std::uint64_t base = r;
    for (std::size_t a = 0; a < nf; ++a) {
      tin[a] = static_cast<int>((r / strides[a]) % 3);
      base -= static_cast<std::uint64_t>(tin[a]) * strides[a];
    }
    std::uint64_t combos = ipow3(static_cast<int>(nf));
    for (std::uint64_t c = 0; c < combos; ++c) {
      Complex amp = 1.0;
      std::uint64_t col = base, cc = c;
      for (std::size_t a = 0; a < nf && amp != 0.0; ++a) {
        const int tc = static_cast<int>(cc % 3);
        cc /= 3;
        amp *= mats[a][tin[a]][tc];
        col += static_cast<std::uint64_t>(tc) * strides[a];
      }
      if (amp != 0.0) e.push_back({static_cast<std::uint32_t>(col), amp});
    }
  }, true);
}

/// i(HO - OH).
inline SparseOperator commutator_observable(const SparseOperator& H, const SparseOperator& O) {
  if (H.dim() != O.dim()) throw InvalidArgument("commutator: dimension mismatch");
  const Complex i{0.0, 1.0};
  return SparseOperator::product_sum(i, H, O, -i, H.hermitian() && O.hermitian());
}

inline SparseOperator build_observable(const ObservableDescriptor& desc, const SpinChainSpec& spec,
                                       const SparseOperator* H = nullptr) {
  SparseOperator base = build_product_observable(desc, spec.L);
  if (!desc.commutator) return base;
  if (H) return commutator_observable(*H, base);
  return commutator_observable(build_hamiltonian(spec), base);
}

/// One-site translation T: site l -> l+1 (periodic), as a basis-state map.
inline std::uint64_t translate_state(std::uint64_t s, int L) {
  const std::uint64_t top = ipow3(L - 1);
  return (s % top) * 3 + s / top;
}

// --- spectral bounds --------------------------------------------------------------

struct SpectralInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool from_lanczos = false;
  double centre() const { return 0.5 * (lo + hi); }
  double half_width() const { return 0.5 * (hi - lo); }
};

inline constexpr double kBoundsWidening = 1.01;

namespace detail {

inline SpectralInterval widen(double lo, double hi) {
  const double c = 0.5 * (lo + hi), h = std::max(0.5 * (hi - lo), 1e-12) * kBoundsWidening;
  return {c - h, c + h, false};
}

}  // namespace detail

/// Interval containing the spectrum of Hermitian `op`. Lanczos extremal Ritz
/// values are pushed outward by their residual bounds before widening; when
/// the residuals do not settle within `max_iter` steps the Gershgorin interval
/// is used instead.
template <LinearOperator Op>
SpectralInterval spectral_bounds(const Op& op, int max_iter = 200, double tol = 1e-6) {
  const std::size_t n = op.dim();
  const auto gersh = op.gershgorin_bounds();
  if (n <= 1) return detail::widen(gersh.first, gersh.second);

  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> g;
  StateVector v(n), w(n), vprev(n, 0.0);
  for (auto& x : v) x = {g(rng), g(rng)};
  double nv = std::sqrt(norm2(v));
  for (auto& x : v) x /= nv;

  std::vector<double> alpha, beta;
  const int kmax = static_cast<int>(std::min<std::size_t>(max_iter, n));
  double lo = 0.0, hi = 0.0;
  bool converged = false;
  for (int k = 0; k < kmax; ++k) {
    op.apply(v, w);
    const double a = dot(v, w).real();
    alpha.push_back(a);
    const double bprev = beta.empty() ? 0.0 : beta.back();
    for (std::size_t i = 0; i < n; ++i) w[i] -= a * v[i] + bprev * vprev[i];
    const double b = std::sqrt(norm2(w));

    if (k >= 4 && (k % 5 == 4 || k + 1 == kmax || b < 1e-12)) {
      const int m = static_cast<int>(alpha.size());
      std::vector<double> d(alpha), e(beta.begin(), beta.end()), z(static_cast<std::size_t>(m) * m);
      e.resize(std::max(m - 1, 1));
      if (LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', m, d.data(), e.data(), z.data(), m) != 0) break;
      // residual of a Ritz pair: |b * last component of its eigenvector|
      const double r_lo = std::abs(b * z[static_cast<std::size_t>(m - 1)]);
      const double r_hi = std::abs(b * z[static_cast<std::size_t>(m - 1) * m + (m - 1)]);
      lo = d[0] - r_lo;
      hi = d[m - 1] + r_hi;
      const double scale = std::max(std::abs(lo), std::abs(hi)) + 1e-300;
      if (std::max(r_lo, r_hi) <= tol * scale) {
        converged = true;
        break;
      }
    }
    if (b < 1e-12) break;
    beta.push_back(b);
    std::swap(vprev, v);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;
  }
  if (!converged) {
    warn("spectral_bounds: Lanczos did not converge, using Gershgorin bounds");
    return detail::widen(gersh.first, gersh.second);
  }
  auto out = detail::widen(std::max(lo, gersh.first), std::min(hi, gersh.second));
  out.from_lanczos = true;
  return out;
}

}  // namespace ethdyn
