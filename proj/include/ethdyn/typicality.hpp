// typicality.hpp - Haar-random states, Chebyshev propagation and typicality
// estimates of thermal autocorrelators
#pragma once

#include <cmath>
#include <random>
#include <thread>

#include "ethdyn/lattice.hpp"

namespace ethdyn {

/// Normalized state with i.i.d. complex Gaussian components, deterministic in `seed`.
inline StateVector haar_state(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw InvalidArgument("haar_state: dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  StateVector v(dim);
  for (auto& x : v) x = {g(rng), g(rng)};
  const double n = std::sqrt(norm2(v));
  for (auto& x : v) x /= n;
  return v;
}

namespace detail {

// two consecutive coefficients below tol, past the turning point of the series
template <typename T>
bool tail_settled(const std::vector<T>& c, double tol, double x) {
  const std::size_t n = c.size();
  return n >= 2 && static_cast<double>(n) > std::abs(x) + 1 && std::abs(c[n - 1]) < tol && std::abs(c[n - 2]) < tol;
}

inline std::size_t order_cap(double x) { return static_cast<std::size_t>(2.0 * std::abs(x)) + 400; }

}  // namespace detail

/// Expansion coefficients of e^{-i x y} on y in [-1, 1]: c_0 = J_0(x), c_n = 2 (-i)^n J_n(x).
inline std::vector<Complex> real_time_coefficients(double x, double tol) {
  std::vector<Complex> c;
  const double ax = std::abs(x), sgn = x < 0 ? -1.0 : 1.0;
  Complex phase = 1.0;
  for (std::size_t n = 0;; ++n) {
    const double j = ax == 0.0 ? (n == 0 ? 1.0 : 0.0) : std::cyl_bessel_j(static_cast<double>(n), ax);
    const double s = (n % 2 == 1) ? sgn : 1.0;
    c.push_back((n == 0 ? 1.0 : 2.0) * phase * s * j);
    phase *= Complex(0.0, -1.0);
    if (detail::tail_settled(c, tol, x)) break;
    if (n > detail::order_cap(x))
      throw ConvergenceError("chebyshev: real-time coefficients do not decay");
  }
  return c;
}

/// Coefficients of e^{-x (y + 1)} on y in [-1, 1], x >= 0:
/// e^{-x} (I_0(x) + 2 sum_n (-1)^n I_n(x) T_n(y)), using scaled Bessel values.
inline std::vector<double> imaginary_time_coefficients(double x, double tol) {
  if (x < 0) throw InvalidArgument("chebyshev: imaginary-time step must be non-negative");
  std::vector<double> c;
  for (std::size_t n = 0;; ++n) {
    const double i = x == 0.0 ? (n == 0 ? 1.0 : 0.0) : std::cyl_bessel_i(static_cast<double>(n), x) * std::exp(-x);
    c.push_back((n == 0 ? 1.0 : 2.0) * (n % 2 == 1 ? -1.0 : 1.0) * i);
    if (detail::tail_settled(c, tol, x)) break;
    if (n > detail::order_cap(x))
      throw ConvergenceError("chebyshev: imaginary-time coefficients do not decay");
  }
  return c;
}

/// Polynomial propagator on the spectrum of H rescaled to [-1, 1] by the
/// given interval, which must contain the spectrum.
template <LinearOperator Op>
class ChebyshevPropagator {
 public:
  ChebyshevPropagator(const Op& H, SpectralInterval bounds, double tol = 1e-12)
      : H_(H), b_(bounds.centre()), a_(bounds.half_width()), tol_(tol) {
    if (!(tol > 0.0 && tol <= 1e-6)) throw InvalidArgument("chebyshev: tolerance must lie in (0, 1e-6]");
    if (!(a_ > 0.0)) throw InvalidArgument("chebyshev: degenerate spectral interval");
  }

  double centre() const { return b_; }
  double half_width() const { return a_; }
  std::size_t dim() const { return H_.dim(); }

  /// psi <- e^{-iHt} psi
  void evolve_real(std::span<Complex> psi, double t) const {
    if (t == 0.0) return;
    auto c = real_time_coefficients(a_ * t, tol_);
    const Complex global = std::polar(1.0, -b_ * t);
    for (auto& x : c) x *= global;
    expand(psi, c);
  }

  /// psi <- e^{-tau H} psi, split into steps of tau <= 1/2 (inverse temperature
  /// increments of at most one). Not renormalized.
  void evolve_imaginary(std::span<Complex> psi, double tau) const {
    if (tau == 0.0) return;
    const double sgn = tau < 0 ? -1.0 : 1.0;
    const int steps = static_cast<int>(std::ceil(std::abs(tau) / 0.5));
    const double dtau = std::abs(tau) / steps;
    // e^{-s dtau H} = e^{-s dtau (b - s a)} e^{-dtau a (s H~ + 1)}, s = sign(tau)
    auto c = imaginary_time_coefficients(dtau * a_, tol_);
    std::vector<Complex> cc(c.size());
    const double global = std::exp(-sgn * dtau * (b_ - sgn * a_));
    for (std::size_t n = 0; n < c.size(); ++n) cc[n] = global * c[n] * ((sgn < 0 && n % 2 == 1) ? -1.0 : 1.0);
    for (int s = 0; s < steps; ++s) expand(psi, cc);
    for (auto x : psi)
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
        throw ConvergenceError("chebyshev: imaginary-time evolution overflowed; reduce beta");
  }

  /// psi <- sum_n c_n T_n(H~) psi
  void expand(std::span<Complex> psi, std::span<const Complex> c) const {
    const std::size_t n = psi.size();
    if (n != H_.dim()) throw InvalidArgument("chebyshev: state dimension mismatch");
    const double norm0 = std::sqrt(norm2(psi));
    prev_.assign(psi.begin(), psi.end());
    cur_.resize(n);
    next_.resize(n);
    acc_.resize(n);
    for (std::size_t i = 0; i < n; ++i) acc_[i] = c[0] * prev_[i];
    if (c.size() > 1) {
      rescaled(prev_, cur_);
      for (std::size_t i = 0; i < n; ++i) acc_[i] += c[1] * cur_[i];
    }
    for (std::size_t k = 2; k < c.size(); ++k) {
      rescaled(cur_, next_);
      for (std::size_t i = 0; i < n; ++i) {
        next_[i] = 2.0 * next_[i] - prev_[i];
        acc_[i] += c[k] * next_[i];
      }
      std::swap(prev_, cur_);
      std::swap(cur_, next_);
      // |T_k(H~)| <= 1 on a valid interval; growth means the bounds are violated
      if (k % 16 == 0 && std::sqrt(norm2(cur_)) > 4.0 * norm0 + 1e-300)
        throw ConvergenceError("chebyshev: polynomial growth detected, spectral bounds do not contain the spectrum");
    }
    std::copy(acc_.begin(), acc_.end(), psi.begin());
  }

 private:
  void rescaled(std::span<const Complex> in, std::span<Complex> out) const {
    H_.apply(in, out);
    const double inv = 1.0 / a_;
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (out[i] - b_ * in[i]) * inv;
  }

  const Op& H_;
  double b_, a_, tol_;
  mutable StateVector prev_, cur_, next_, acc_;
};

/// e^{tau H} psi for tau = -i t (real time), tau = -beta/2 (imaginary time)
/// or any combination of the two.
template <LinearOperator Op>
StateVector chebyshev_propagate(const Op& H, SpectralInterval bounds, std::span<const Complex> psi, Complex tau,
                                double tol = 1e-12) {
  ChebyshevPropagator<Op> prop(H, bounds, tol);
  StateVector v(psi.begin(), psi.end());
  prop.evolve_imaginary(v, -tau.real());
  prop.evolve_real(v, -tau.imag());
  return v;
}

// --- typicality runs ------------------------------------------------------------------

/// Realization count for chain length L: max(4, round(16 * 3^{(12 - L)/2})).
inline std::size_t default_realizations(int L) {
  const double n = std::round(16.0 * std::pow(3.0, 0.5 * (12 - L)));
  return static_cast<std::size_t>(std::max(4.0, n));
}

struct TypicalityRun {
  std::vector<std::uint64_t> seeds;  // one per realization
  double beta = 0.0;
  double dt = 0.1;
  std::size_t steps = 1000;  // grid t_k = k dt, k = 0..steps
  double cheb_tol = 1e-12;
  unsigned workers = 1;      // realizations evaluated concurrently

  std::size_t realizations() const { return seeds.size(); }
  double t_max() const { return dt * static_cast<double>(steps); }

  void validate() const {
    if (seeds.empty()) throw InvalidArgument("typicality: at least one realization is required");
    if (!(dt > 0.0)) throw InvalidArgument("typicality: dt must be positive");
    if (!(cheb_tol > 0.0 && cheb_tol <= 1e-6)) throw InvalidArgument("typicality: cheb_tol must lie in (0, 1e-6]");
    if (!std::isfinite(beta)) throw InvalidArgument("typicality: beta must be finite");
  }

  static TypicalityRun make(std::size_t n_realizations, double beta, double dt, double t_max,
                            std::uint64_t base_seed = 1) {
    TypicalityRun r;
    r.beta = beta;
    r.dt = dt;
    r.steps = static_cast<std::size_t>(std::llround(t_max / dt));
    for (std::size_t i = 0; i < n_realizations; ++i) r.seeds.push_back(base_seed + i);
    return r;
  }
};

struct TimeSeries {
  std::vector<double> times;
  std::vector<Complex> values;      // connected C(t_k), mean over realizations
  std::vector<double> std_error;    // empty for a single realization
  std::vector<std::vector<Complex>> samples;  // per-realization connected series
  double beta = 0.0;
  std::string observable;
  int L = 0;

  std::size_t size() const { return times.size(); }
  std::vector<double> real_values() const {
    std::vector<double> r(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) r[i] = values[i].real();
    return r;
  }
};

namespace detail {

struct RealizationResult {
  std::vector<std::vector<Complex>> corr;  // per observable, raw C_r(t_k)
  std::vector<double> mean;                // per observable, <O>_r
};

template <LinearOperator Op>
RealizationResult dqt_realization(const ChebyshevPropagator<Op>& prop, std::span<const SparseOperator* const> obs,
                                  const TypicalityRun& run, std::uint64_t seed) {
  const std::size_t D = prop.dim();
  StateVector psi = haar_state(D, seed);
  prop.evolve_imaginary(psi, 0.5 * run.beta);
  const double z = norm2(psi);
  if (!(z > 1e-280) || !std::isfinite(z))
    throw ConvergenceError("typicality: <psi_beta|psi_beta> under- or overflowed; use a smaller beta");
  RealizationResult res;
  std::vector<StateVector> phi;
  for (const auto* O : obs) {
    StateVector v(D);
    O->apply(psi, v);
    res.mean.push_back(dot(psi, v).real() / z);
    phi.push_back(std::move(v));
  }
  res.corr.assign(obs.size(), std::vector<Complex>(run.steps + 1));
  StateVector tmp(D);
  for (std::size_t k = 0; k <= run.steps; ++k) {
    if (k > 0) {
      prop.evolve_real(psi, run.dt);
      for (auto& v : phi) prop.evolve_real(v, run.dt);
    }
    for (std::size_t o = 0; o < obs.size(); ++o) {
      obs[o]->apply(phi[o], tmp);
      res.corr[o][k] = dot(psi, tmp) / z;
    }
  }
  return res;
}

}  // namespace detail

/// Typicality estimate of the connected autocorrelators <O(t) O>_beta - <O>_beta^2
/// for several observables, sharing the random states and the propagation of
/// |psi_beta>. Realizations are reduced in seed order.
template <LinearOperator Op>
std::vector<TimeSeries> dqt_autocorrelators(const Op& H, SpectralInterval bounds,
                                            std::span<const SparseOperator* const> obs,
                                            std::span<const std::string> names, const TypicalityRun& run, int L) {
  run.validate();
  if (names.size() != obs.size()) throw InvalidArgument("typicality: one name per observable is required");
  for (const auto* O : obs)
    if (O == nullptr || O->dim() != H.dim()) throw InvalidArgument("typicality: observable dimension mismatch");
  const std::size_t R = run.realizations(), K = run.steps + 1;
  std::vector<detail::RealizationResult> results(R);
  const unsigned workers = std::max(1u, std::min<unsigned>(run.workers, static_cast<unsigned>(R)));
  {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          ChebyshevPropagator<Op> prop(H, bounds, run.cheb_tol);
          for (std::size_t r = w; r < R; r += workers) results[r] = detail::dqt_realization(prop, obs, run, run.seeds[r]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    pool.clear();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<TimeSeries> out(obs.size());
  for (std::size_t o = 0; o < obs.size(); ++o) {
    TimeSeries& ts = out[o];
    ts.beta = run.beta;
    ts.observable = names[o];
    ts.L = L;
    for (std::size_t k = 0; k < K; ++k) ts.times.push_back(run.dt * static_cast<double>(k));
    double mean = 0.0;
    for (const auto& r : results) mean += r.mean[o];
    mean /= static_cast<double>(R);
    ts.values.assign(K, 0.0);
    for (const auto& r : results) {
      std::vector<Complex> s(K);
      for (std::size_t k = 0; k < K; ++k) s[k] = r.corr[o][k] - mean * mean;
      for (std::size_t k = 0; k < K; ++k) ts.values[k] += s[k];
      ts.samples.push_back(std::move(s));
    }
    for (auto& v : ts.values) v /= static_cast<double>(R);
    if (R > 1) {
      ts.std_error.assign(K, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        double var = 0.0;
        for (const auto& s : ts.samples) var += std::norm(s[k] - ts.values[k]);
        ts.std_error[k] = std::sqrt(var / static_cast<double>(R - 1) / static_cast<double>(R));
      }
    }
  }
  return out;
}

template <LinearOperator Op>
TimeSeries dqt_autocorrelator(const Op& H, SpectralInterval bounds, const SparseOperator& O, std::string name,
                              const TypicalityRun& run, int L) {
  const SparseOperator* ptr = &O;
  return dqt_autocorrelators(H, bounds, std::span<const SparseOperator* const>(&ptr, 1),
                             std::span<const std::string>(&name, 1), run, L)[0];
}

struct ScalingRow {
  int L = 0;
  double single_std = 0.0;  // spread of single-realization C(t*) across seeds
  double mean_stderr = 0.0; // standard error of the realization mean
};

/// Single-realization spread |C_r(t*) - mean| of the complex estimate across the run's seeds for each chain length.
inline std::vector<ScalingRow> realization_scaling_check(const SpinChainSpec& base, const ObservableDescriptor& desc,
                                                         const TypicalityRun& tmpl, std::span<const int> sizes,
                                                         double t_star) {
  if (tmpl.realizations() < 2) throw InvalidArgument("realization_scaling_check: needs at least two seeds");
  std::vector<ScalingRow> rows;
  for (int L : sizes) {
    SpinChainSpec spec = base;
    spec.L = L;
    SpinChainKernel H(spec);
    auto O = build_observable(desc, spec);
    TypicalityRun run = tmpl;
    run.steps = static_cast<std::size_t>(std::llround(t_star / run.dt));
    auto ts = dqt_autocorrelator(H, spectral_bounds(H), O, desc.to_string(), run, L);
    const std::size_t k = run.steps;
    Complex m = 0.0;
    double v = 0.0;
    for (const auto& s : ts.samples) m += s[k];
    m /= static_cast<double>(ts.samples.size());
    for (const auto& s : ts.samples) v += std::norm(s[k] - m);
    const double sd = std::sqrt(v / static_cast<double>(ts.samples.size() - 1));
    rows.push_back({L, sd, ts.std_error[k]});
  }
  return rows;
}

}  // namespace ethdyn
