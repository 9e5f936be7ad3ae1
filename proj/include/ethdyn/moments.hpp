// moments.hpp - joint moments of H and an observable, connected cumulants,
// overlap orders and the Gaussian variance constants
#pragma once

#include <boost/math/special_functions/erf.hpp>
#include <limits>
#include <numbers>

#include "ethdyn/spectrum.hpp"
#include "ethdyn/typicality.hpp"

namespace ethdyn {

enum class MomentMethod { ExactDense, ExactSparseColumns, Stochastic };

inline std::string to_string(MomentMethod m) {
  switch (m) {
    case MomentMethod::ExactDense: return "exact-dense";
    case MomentMethod::ExactSparseColumns: return "exact-sparse-columns";
    case MomentMethod::Stochastic: return "stochastic-trace";
  }
  return "?";
}

struct MomentOptions {
  MomentMethod method = MomentMethod::ExactDense;
  std::size_t samples = 16;  // stochastic: random vectors
  std::uint64_t seed = 1;
  double cheb_tol = 1e-12;
  std::size_t dense_cap = kDefaultDenseCap;
};

/// <H^m O>_beta and <H^m>_beta for m = 0..m_max with their joint connected
/// cumulants once `connected_cumulants` has run.
struct MomentTable {
  double beta = 0.0;
  int m_max = 0;
  std::vector<double> raw;         // <H^m O>
  std::vector<double> raw_stderr;  // zero for exact methods
  std::vector<double> h_moments;   // <H^m>
  std::vector<double> cc;          // <H^m O>_cc, empty until computed
  double o2 = 0.0;                 // <O^2>, for normalization
  double zero_threshold = 1e-8;
  MomentMethod method = MomentMethod::ExactDense;
  std::vector<std::uint64_t> seeds;

  /// <(H - <H>)^2>
  double h_variance() const { return h_moments.at(2) - h_moments.at(1) * h_moments.at(1); }
};

namespace detail {

// accumulates <x|H^k O|x>, <x|H^k|x> (k <= m_max) and <x|O^2|x>, <x|x>
// for one vector x, with H scaled by 1/s to keep powers in range
struct VectorMoments {
  std::vector<double> raw, h;
  double o2 = 0.0, norm = 0.0;
};

template <LinearOperator Op>
VectorMoments vector_moments(const Op& H, double s, const SparseOperator& O, std::span<const Complex> x, int m_max) {
  const std::size_t n = x.size();
  VectorMoments r;
  r.raw.assign(m_max + 1, 0.0);
  r.h.assign(m_max + 1, 0.0);
  StateVector y(n), w(n), tmp(n);
  O.apply(x, y);
  r.norm = norm2(x);
  r.o2 = norm2(y);
  // <x|H^k y> via w_k = H^k y; <x|H^k x> via u_k = H^k x
  StateVector u(x.begin(), x.end());
  std::copy(y.begin(), y.end(), w.begin());
  for (int k = 0; k <= m_max; ++k) {
    if (k > 0) {
      H.apply(w, tmp);
      for (std::size_t i = 0; i < n; ++i) w[i] = tmp[i] / s;
      H.apply(u, tmp);
      for (std::size_t i = 0; i < n; ++i) u[i] = tmp[i] / s;
    }
    r.raw[k] = dot(x, w).real();
    r.h[k] = dot(x, u).real();
  }
  return r;
}

inline double operator_scale(const SparseOperator& H) {
  const auto [lo, hi] = H.gershgorin_bounds();
  return std::max({std::abs(lo), std::abs(hi), 1e-300});
}

}  // namespace detail

/// Moments from a diagonalized Hamiltonian (full space or symmetry sectors):
/// only the eigenbasis diagonal of O and the norms |O|i>|^2 enter.
inline MomentTable moment_table(const EigenSystem& sys, const SparseOperator& O, int m_max, double beta) {
  if (m_max < 0) throw InvalidArgument("moment_table: m_max must be non-negative");
  MomentTable t;
  t.beta = beta;
  t.m_max = m_max;
  t.method = MomentMethod::ExactDense;
  t.raw.assign(m_max + 1, 0.0);
  t.raw_stderr.assign(m_max + 1, 0.0);
  t.h_moments.assign(m_max + 1, 0.0);
  const auto tw = thermal_weights(sys, beta);
  // energies scaled by the largest |E| so E^m stays representable
  double emax = 1e-300;
  for (const auto& s : sys)
    for (double e : s.energies) emax = std::max(emax, std::abs(e));
  std::vector<double> raw(m_max + 1, 0.0), hm(m_max + 1, 0.0);
  for (const auto& s : sys) {
    if (s.dim() == 0) continue;
    if (s.full_dim() != O.dim()) throw InvalidArgument("moment_table: operator dimensions differ");
    const auto od = diagonal_elements(O, s);
    StateVector ov(O.dim());
    for (std::size_t i = 0; i < s.dim(); ++i) {
      const double w = std::exp(-beta * (s.energies[i] - tw.e_ref)) / tw.Z;
      const double x = s.energies[i] / emax;
      double p = 1.0;
      for (int k = 0; k <= m_max; ++k) {
        raw[k] += w * p * od[i];
        hm[k] += w * p;
        p *= x;
      }
      auto v = s.full_vector(i);
      O.apply(v, ov);
      t.o2 += w * norm2(ov);
    }
  }
  for (int k = 0; k <= m_max; ++k) {
    t.raw[k] = raw[k] * std::pow(emax, k);
    t.h_moments[k] = hm[k] * std::pow(emax, k);
  }
  return t;
}

/// Raw joint moments up to m_max by the selected method.
inline MomentTable moment_table(const SparseOperator& H, const SparseOperator& O, int m_max, double beta,
                                const MomentOptions& opt = {}) {
  if (m_max < 0) throw InvalidArgument("moment_table: m_max must be non-negative");
  if (H.dim() != O.dim()) throw InvalidArgument("moment_table: operator dimensions differ");
  MomentTable t;
  t.beta = beta;
  t.m_max = m_max;
  t.method = opt.method;
  t.raw.assign(m_max + 1, 0.0);
  t.raw_stderr.assign(m_max + 1, 0.0);
  t.h_moments.assign(m_max + 1, 0.0);
  const std::size_t D = H.dim();

  if (opt.method == MomentMethod::ExactDense) {
    EigenSystem sys{diagonalize(H, true, opt.dense_cap)};
    return moment_table(sys, O, m_max, beta);
  }

  const double s = detail::operator_scale(H);
  const auto bounds = spectral_bounds(H);
  ChebyshevPropagator prop(H, bounds, opt.cheb_tol);
  std::vector<double> raw(m_max + 1, 0.0), hm(m_max + 1, 0.0);
  double z = 0.0, o2 = 0.0;

  if (opt.method == MomentMethod::ExactSparseColumns) {
    StateVector x(D);
    for (std::size_t j = 0; j < D; ++j) {
      std::fill(x.begin(), x.end(), Complex(0.0));
      x[j] = 1.0;
      prop.evolve_imaginary(x, 0.5 * beta);
      auto r = detail::vector_moments(H, s, O, x, m_max);
      for (int k = 0; k <= m_max; ++k) {
        raw[k] += r.raw[k];
        hm[k] += r.h[k];
      }
      z += r.norm;
      o2 += r.o2;
    }
    for (int k = 0; k <= m_max; ++k) {
      t.raw[k] = raw[k] / z * std::pow(s, k);
      t.h_moments[k] = hm[k] / z * std::pow(s, k);
    }
    t.o2 = o2 / z;
    return t;
  }

  // stochastic trace: per-vector ratios, shared vectors across all m
  if (opt.samples < 2) throw InvalidArgument("moment_table: stochastic method needs at least two samples");
  std::vector<std::vector<double>> per(opt.samples);
  for (std::size_t r = 0; r < opt.samples; ++r) {
    const std::uint64_t seed = opt.seed + r;
    t.seeds.push_back(seed);
    auto x = haar_state(D, seed);
    prop.evolve_imaginary(x, 0.5 * beta);
    auto vm = detail::vector_moments(H, s, O, x, m_max);
    if (!(vm.norm > 1e-280)) throw ConvergenceError("moment_table: thermal vector norm underflowed; reduce beta");
    per[r] = vm.raw;
    for (int k = 0; k <= m_max; ++k) {
      per[r][k] = vm.raw[k] / vm.norm * std::pow(s, k);
      hm[k] += vm.h[k] / vm.norm * std::pow(s, k);
    }
    o2 += vm.o2 / vm.norm;
  }
  const auto R = static_cast<double>(opt.samples);
  for (int k = 0; k <= m_max; ++k) {
    double mean = 0.0, var = 0.0;
    for (const auto& p : per) mean += p[k];
    mean /= R;
    for (const auto& p : per) var += (p[k] - mean) * (p[k] - mean);
    t.raw[k] = mean;
    t.raw_stderr[k] = std::sqrt(var / (R - 1) / R);
    t.h_moments[k] = hm[k] / R;
  }
  t.o2 = o2 / R;
  return t;
}

struct MomentValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// <H^m O>_beta = Tr(e^{-beta H} H^m O) / Tr(e^{-beta H}).
inline MomentValue moment_trace(const SparseOperator& H, const SparseOperator& O, int m, double beta,
                                const MomentOptions& opt = {}) {
  if (m < 0) throw InvalidArgument("moment_trace: m must be non-negative");
  auto t = moment_table(H, O, m, beta, opt);
  return {t.raw[m], t.raw_stderr[m]};
}

/// Joint cumulants <H^m O>_cc from <H^m O> = sum_k C(m,k) <H^k O>_cc <H^{m-k}>.
inline MomentTable connected_cumulants(MomentTable t) {
  const int M = t.m_max;
  if (static_cast<int>(t.raw.size()) != M + 1 || static_cast<int>(t.h_moments.size()) != M + 1)
    throw InvalidArgument("connected_cumulants: moments missing for some order");
  t.cc.assign(M + 1, 0.0);
  for (int m = 0; m <= M; ++m) {
    double v = t.raw[m];
    double binom = 1.0;  // C(m, k)
    for (int k = 0; k < m; ++k) {
      v -= binom * t.cc[k] * t.h_moments[m - k];
      binom = binom * (m - k) / (k + 1);
    }
    t.cc[m] = v;
  }
  return t;
}

struct OverlapOrderResult {
  std::optional<int> m;        // empty means infinite
  double witness = 0.0;        // normalized |<H^m O>_cc| at m, or the largest seen
  double threshold = 1e-8;
  bool ambiguous = false;      // some normalized cumulant within a factor 3 of the threshold
  std::vector<double> normalized;  // |cc_k| / scale(k), k = 0..m_max

  bool infinite() const { return !m.has_value(); }
  std::string to_string() const { return m ? std::to_string(*m) : std::string("infinite"); }
};

/// Smallest m >= 1 with |<H^m O>_cc| > threshold * <(H - <H>)^2>^{m/2} sqrt(<O^2>).
inline OverlapOrderResult overlap_order(const MomentTable& table, double threshold = 1e-8) {
  MomentTable t = table.cc.empty() ? connected_cumulants(table) : table;
  if (t.m_max < 1) throw InvalidArgument("overlap_order: m_max must be at least 1");
  const double var = t.h_variance();
  if (!(var > 0)) throw InvalidArgument("overlap_order: Hamiltonian has no energy fluctuations");
  const double onorm = std::sqrt(std::max(t.o2, 1e-300));
  OverlapOrderResult r;
  r.threshold = threshold;
  for (int k = 0; k <= t.m_max; ++k) r.normalized.push_back(std::abs(t.cc[k]) / (std::pow(var, 0.5 * k) * onorm));
  for (int k = 1; k <= t.m_max; ++k) {
    const double v = r.normalized[k];
    if (v > threshold / 3 && v < threshold * 3) r.ambiguous = true;
    if (v > threshold) {
      r.m = k;
      r.witness = v;
      break;
    }
    r.witness = std::max(r.witness, v);
  }
  return r;
}

inline OverlapOrderResult overlap_order(const SparseOperator& H, const SparseOperator& O, double beta, int m_max,
                                        double threshold = 1e-8, const MomentOptions& opt = {}) {
  return overlap_order(moment_table(H, O, m_max, beta, opt), threshold);
}

/// Coefficient of eps^m in O(eps) ~ (eps^m / m!) <H^m O> / (<H^2>/L)^m, infinite temperature.
inline double taylor_prefactor(const MomentTable& t, int m, int L) {
  if (t.beta != 0.0) throw InvalidArgument("taylor_prefactor: needs infinite-temperature moments");
  if (m < 0 || m > t.m_max) throw InvalidArgument("taylor_prefactor: order outside the table");
  const double h2 = t.h_moments.at(2) / L;
  if (!(h2 > 0)) throw InvalidArgument("taylor_prefactor: <H^2> vanishes");
  return t.raw[m] / std::tgamma(m + 1.0) / std::pow(h2, m);
}

inline double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

/// Var[x^m] / sigma^{2m} for centred Gaussian x: (2m-1)!! for odd m,
/// (2m-1)!! - ((m-1)!!)^2 for even m.
inline double kappa(int m) {
  if (m <= 0) throw InvalidArgument("kappa: m must be positive");
  const double a = double_factorial(2 * m - 1);
  if (m % 2 == 1) return a;
  const double b = double_factorial(m - 1);
  return a - b * b;
}

/// Predicted plateau (dmO/m!)^2 (h2_density/L)^m kappa(m).
inline double variance_prediction(double dmO, double h2_density, int m, int L) {
  if (m <= 0) throw InvalidArgument("variance_prediction: m must be positive");
  if (L <= 0) throw InvalidArgument("variance_prediction: L must be positive");
  const double c = dmO / std::tgamma(m + 1.0);
  return c * c * std::pow(h2_density / L, m) * kappa(m);
}

/// Monte-Carlo estimate of kappa(m): sample variance of (x - mean)^m over
/// the sample variance^m. Stratified sampling places one point in each of
/// `samples` equal-probability strata of the normal distribution (jittered
/// within the stratum), which tames the heavy tails of x^{2m}.
inline double kappa_monte_carlo(int m, std::size_t samples, std::uint64_t seed, bool stratified = true) {
  if (m <= 0 || samples < 2) throw InvalidArgument("kappa_monte_carlo: need m >= 1 and two samples");
  std::mt19937_64 rng(seed);
  std::vector<double> x(samples);
  if (stratified) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < samples; ++i) {
      double p = (static_cast<double>(i) + u(rng)) / static_cast<double>(samples);
      p = std::clamp(p, 1e-300, 1.0 - 1e-16);
      x[i] = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
    }
  } else {
    std::normal_distribution<double> g;
    for (auto& v : x) v = g(rng);
  }
  const auto n = static_cast<double>(samples);
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0, s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    const double d = v - mu;
    var += d * d;
    const double p = std::pow(d, m);
    s1 += p;
    s2 += p * p;
  }
  var /= n;
  s1 /= n;
  s2 /= n;
  return (s2 - s1 * s1) / std::pow(var, m);
}

}  // namespace ethdyn
