// analysis.hpp - plateaus, Fourier profiles, power-law fits and the
// relaxation-overlap verdict
#pragma once

#include <limits>
#include <numbers>
#include <optional>

#include "ethdyn/spectrum.hpp"
#include "ethdyn/typicality.hpp"

namespace ethdyn {

struct Saturation {
  double value = 0.0;
  double std_error = 0.0;
  bool still_decaying = false;
};

/// Mean of Re C over the last `n_last` grid points. The error combines the
/// temporal spread of the tail with the realization error of the points.
inline Saturation saturation_value(const TimeSeries& ts, std::size_t n_last = 50) {
  if (n_last < 2 || ts.size() <= n_last) throw InvalidArgument("saturation_value: series shorter than the tail window");
  const std::size_t k0 = ts.size() - n_last;
  double mean = 0.0, tmean = 0.0;
  for (std::size_t k = k0; k < ts.size(); ++k) {
    mean += ts.values[k].real();
    tmean += ts.times[k];
  }
  mean /= static_cast<double>(n_last);
  tmean /= static_cast<double>(n_last);
  double var = 0.0, sxx = 0.0, sxy = 0.0, se = 0.0;
  for (std::size_t k = k0; k < ts.size(); ++k) {
    const double y = ts.values[k].real() - mean, x = ts.times[k] - tmean;
    var += y * y;
    sxx += x * x;
    sxy += x * y;
    if (!ts.std_error.empty()) se += ts.std_error[k];
  }
  se /= static_cast<double>(n_last);
  const double temporal = std::sqrt(var / static_cast<double>(n_last - 1) / static_cast<double>(n_last));
  Saturation s;
  s.value = mean;
  s.std_error = std::hypot(temporal, se);
  // drift across the tail compared with its flatness
  const double slope = sxx > 0 ? sxy / sxx : 0.0;
  const double drift = std::abs(slope) * (ts.times.back() - ts.times[k0]);
  const double flat = std::hypot(std::sqrt(var / static_cast<double>(n_last - 1)), se);
  s.still_decaying = drift > 3.0 * flat && drift > 1e-14;
  if (s.still_decaying) warn("saturation_value: series still drifting over the last " + std::to_string(n_last) + " points");
  return s;
}

/// (1/2pi) e^{beta omega/2} int e^{-i omega t} (C(t) - c_inf) dt over the
/// symmetric extension C(-t) = C(t)^*, trapezoid quadrature on the grid,
/// evaluated at omega_k = 2 pi k / (K dt) for |omega_k| <= omega_max.
/// At beta = 0 the imaginary part of C is pure estimator noise and is dropped.
inline FrequencyProfile fourier_f2(const TimeSeries& ts, double beta, Complex c_inf,
                                   std::optional<double> omega_max = std::nullopt) {
  const std::size_t n = ts.size();
  if (n < 2) throw InvalidArgument("fourier_f2: need at least two time points");
  const double dt = ts.times[1] - ts.times[0];
  if (!(dt > 0.0)) throw InvalidArgument("fourier_f2: times must increase");
  for (std::size_t k = 1; k < n; ++k)
    if (std::abs(ts.times[k] - ts.times[0] - dt * static_cast<double>(k)) > 1e-9 * dt * static_cast<double>(n))
      throw InvalidArgument("fourier_f2: time grid is not uniform");
  const double nyquist = std::numbers::pi / dt;
  const double wmax = omega_max.value_or(nyquist);
  if (wmax > nyquist * (1 + 1e-12))
    throw InvalidArgument("fourier_f2: requested frequency " + std::to_string(wmax) + " exceeds the Nyquist frequency " +
                          std::to_string(nyquist));
  const std::size_t K = n - 1;
  const double dw = 2.0 * std::numbers::pi / (static_cast<double>(K) * dt);
  std::vector<Complex> g(n);
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = ts.values[k] - c_inf;
    if (beta == 0.0) g[k] = g[k].real();
    if (k == 0 || k == K) g[k] *= 0.5;
  }
  const auto kmax = static_cast<long>(std::floor(wmax / dw + 1e-9));
  FrequencyProfile prof;
  prof.beta = beta;
  prof.bin_width = dw;
  std::vector<double> half(static_cast<std::size_t>(kmax) + 1), half_neg(static_cast<std::size_t>(kmax) + 1);
  for (long q = 0; q <= kmax; ++q) {
    const double w = dw * static_cast<double>(q);
    // I(w) = dt sum_k g_k e^{-i w t_k}; the profile at +-w is Re I(+-w) / pi
    Complex ip = 0.0, im = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Complex e = std::polar(1.0, -w * ts.times[k]);
      ip += g[k] * e;
      im += g[k] * std::conj(e);
    }
    half[static_cast<std::size_t>(q)] = (ip * dt).real() / std::numbers::pi;
    half_neg[static_cast<std::size_t>(q)] = (im * dt).real() / std::numbers::pi;
  }
  for (long q = -kmax; q <= kmax; ++q) {
    const double w = dw * static_cast<double>(q);
    const double v = q >= 0 ? half[static_cast<std::size_t>(q)] : half_neg[static_cast<std::size_t>(-q)];
    prof.bins.push_back({w, std::exp(0.5 * beta * w) * v, 0});
  }
  return prof;
}

// --- fits -----------------------------------------------------------------------------

struct PowerLawFit {
  double exponent = 0.0;         // slope in log-log, or b of a + b log x
  double exponent_stderr = 0.0;
  double intercept = 0.0;
  double x_lo = 0.0, x_hi = 0.0;
  std::size_t points = 0;
  double r_squared = 0.0;        // in the fitted coordinates
  double r_squared_linear = 0.0; // of the fitted curve against y itself
  bool log_correction = false;

  double predict(double x) const {
    return log_correction ? intercept + exponent * std::log(x) : std::exp(intercept) * std::pow(x, exponent);
  }
};

namespace detail {

struct LineFit {
  double slope, intercept, slope_se, r2;
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw InvalidArgument("fit: degenerate window, all abscissae coincide");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ss += r * r;
  }
  f.slope_se = x.size() > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  f.r2 = syy > 0 ? std::clamp(1.0 - ss / syy, 0.0, 1.0) : 1.0;
  return f;
}

inline double r2_linear(std::span<const double> y, std::span<const double> pred) {
  double my = 0;
  for (double v : y) my += v;
  my /= static_cast<double>(y.size());
  double ss = 0, st = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss += (y[i] - pred[i]) * (y[i] - pred[i]);
    st += (y[i] - my) * (y[i] - my);
  }
  return st > 0 ? std::clamp(1.0 - ss / st, 0.0, 1.0) : 1.0;
}

}  // namespace detail

/// Least-squares power law y = A x^p on x in [lo, hi] (log-log), or with
/// `with_log` the logarithmic form y = a + b log x.
inline PowerLawFit powerlaw_fit(std::span<const double> xs, std::span<const double> ys, double lo, double hi,
                                bool with_log = false, std::size_t min_points = 5) {
  if (xs.size() != ys.size()) throw InvalidArgument("powerlaw_fit: x and y differ in length");
  if (!(lo < hi)) throw InvalidArgument("powerlaw_fit: empty window");
  std::vector<double> lx, ly, x, y;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < lo || xs[i] > hi) continue;
    if (!(xs[i] > 0)) throw InvalidArgument("powerlaw_fit: abscissae must be positive");
    if (!with_log && !(ys[i] > 0))
      throw InvalidArgument("powerlaw_fit: nonpositive value " + std::to_string(ys[i]) + " at x = " + std::to_string(xs[i]));
    x.push_back(xs[i]);
    y.push_back(ys[i]);
    lx.push_back(std::log(xs[i]));
    ly.push_back(with_log ? ys[i] : std::log(ys[i]));
  }
  if (x.size() < min_points)
    throw InvalidArgument("powerlaw_fit: only " + std::to_string(x.size()) + " points in the window, need " +
                          std::to_string(min_points));
  const auto f = detail::least_squares(lx, ly);
  PowerLawFit p;
  p.exponent = f.slope;
  p.exponent_stderr = f.slope_se;
  p.intercept = f.intercept;
  p.x_lo = lo;
  p.x_hi = hi;
  p.points = x.size();
  p.r_squared = f.r2;
  p.log_correction = with_log;
  std::vector<double> pred(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pred[i] = p.predict(x[i]);
  p.r_squared_linear = detail::r2_linear(y, pred);
  return p;
}

/// Largest linear-space r^2 reachable by any pure power A x^p on the window,
/// scanning p with the optimal amplitude in closed form.
inline double best_power_r2(std::span<const double> xs, std::span<const double> ys, double lo, double hi,
                            double p_min = -4.0, double p_max = 4.0) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] >= lo && xs[i] <= hi && xs[i] > 0) {
      x.push_back(xs[i]);
      y.push_back(ys[i]);
    }
  if (x.size() < 3) throw InvalidArgument("best_power_r2: too few points");
  auto r2_at = [&](double p) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double b = std::pow(x[i], p);
      num += y[i] * b;
      den += b * b;
    }
    const double A = num / den;
    std::vector<double> pred(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) pred[i] = A * std::pow(x[i], p);
    return detail::r2_linear(y, pred);
  };
  double best = -1, bp = p_min;
  const int n = 800;
  for (int i = 0; i <= n; ++i) {
    const double p = p_min + (p_max - p_min) * i / n;
    const double r = r2_at(p);
    if (r > best) {
      best = r;
      bp = p;
    }
  }
  // golden-section refinement around the grid optimum
  double a = bp - (p_max - p_min) / n, b = bp + (p_max - p_min) / n;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 60; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (r2_at(c) > r2_at(d))
      b = d;
    else
      a = c;
  }
  return std::max(best, r2_at(0.5 * (a + b)));
}

struct FiniteSizeResult {
  std::optional<PowerLawFit> fit;  // absent on the zero branch
  double m_hat = 0.0;              // infinity on the zero branch
  bool below_noise_floor = false;
  std::string note;
};

struct PlateauPoint {
  int L = 0;
  double plateau = 0.0;
  double std_error = 0.0;  // zero for exact values
};

/// Log-log fit of plateau against L, m_hat = -slope. Plateaus that are not
/// resolved from zero (within 2 sigma, or below 1e-12 for exact values)
/// select the "below noise floor, m_hat = infinity consistent" branch.
inline FiniteSizeResult finite_size_fit(std::span<const PlateauPoint> pts) {
  if (pts.size() < 3) throw InvalidArgument("finite_size_fit: need at least three sizes");
  FiniteSizeResult r;
  for (const auto& p : pts)
    if (p.plateau <= std::max(2.0 * p.std_error, 1e-12)) {
      r.below_noise_floor = true;
      r.m_hat = std::numeric_limits<double>::infinity();
      r.note = "below noise floor, m_hat = infinity consistent";
      return r;
    }
  std::vector<double> x, y;
  for (const auto& p : pts) {
    x.push_back(p.L);
    y.push_back(p.plateau);
  }
  r.fit = powerlaw_fit(x, y, 0.5 * x.front(), 2.0 * x.back() + 1, false, 3);
  r.m_hat = -r.fit->exponent;
  return r;
}

struct InequalityVerdict {
  double nu = 0.0, m = 0.0, d = 1.0, z = 2.0;
  double bound = 0.0;
  double tolerance = 0.15;
  bool satisfied = false;
  bool saturated = false;
};

/// nu <= d m / z; m may be infinity. Default tolerance max(0.15, 2 nu_stderr).
inline InequalityVerdict roi_check(double nu, double nu_stderr, double m, double d = 1.0, double z = 2.0,
                                   std::optional<double> tol = std::nullopt) {
  if (!(z > 0) || !(d > 0)) throw InvalidArgument("roi_check: d and z must be positive");
  InequalityVerdict v;
  v.nu = nu;
  v.m = m;
  v.d = d;
  v.z = z;
  v.bound = std::isinf(m) ? std::numeric_limits<double>::infinity() : d * m / z;
  v.tolerance = tol.value_or(std::max(0.15, 2.0 * nu_stderr));
  v.satisfied = nu <= v.bound + v.tolerance;
  v.saturated = std::isfinite(v.bound) && std::abs(nu - v.bound) <= v.tolerance;
  return v;
}

// --- oscillation filtering -----------------------------------------------------------

enum class FilterMethod { MovingAverage, FrequencyTruncation };

/// Moving average over round(scale/dt) consecutive points (times move to the
/// window centres, endpoints truncated), or removal of all frequencies above
/// pi / scale from the symmetrically extended series. With the same scale both
/// remove an oscillation of period `scale`: the boxcar has its first zero there
/// and the sharp cutoff sits at half its frequency.
inline TimeSeries oscillation_filter(const TimeSeries& ts, FilterMethod method, double scale) {
  if (!(scale > 0)) throw InvalidArgument("oscillation_filter: scale must be positive");
  if (ts.size() < 2) throw InvalidArgument("oscillation_filter: series too short");
  const double dt = ts.times[1] - ts.times[0];
  const double span_t = ts.times.back() - ts.times.front();
  if (scale > span_t) throw InvalidArgument("oscillation_filter: scale exceeds the series support");
  TimeSeries out = ts;
  out.samples.clear();
  if (method == FilterMethod::MovingAverage) {
    const auto w = static_cast<std::size_t>(std::max(1L, std::lround(scale / dt)));
    const std::size_t m = ts.size() - w + 1;
    out.times.assign(m, 0.0);
    out.values.assign(m, 0.0);
    if (!ts.std_error.empty()) out.std_error.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i; j < i + w; ++j) {
        out.times[i] += ts.times[j];
        out.values[i] += ts.values[j];
        if (!ts.std_error.empty()) out.std_error[i] += ts.std_error[j];
      }
      out.times[i] /= static_cast<double>(w);
      out.values[i] /= static_cast<double>(w);
      if (!ts.std_error.empty()) out.std_error[i] /= static_cast<double>(w);
    }
    return out;
  }
  // symmetric extension of length 2K: g_{-k} = conj(g_k)
  const std::size_t K = ts.size() - 1, N = 2 * K;
  std::vector<Complex> g(N);
  for (std::size_t k = 0; k <= K; ++k) g[k] = ts.values[k];
  for (std::size_t k = 1; k < K; ++k) g[N - k] = std::conj(ts.values[k]);
  const double cutoff = std::numbers::pi / scale, dw = 2.0 * std::numbers::pi / (static_cast<double>(N) * dt);
  std::vector<Complex> G(N, 0.0);
  for (std::size_t q = 0; q < N; ++q) {
    const long qs = q <= N / 2 ? static_cast<long>(q) : static_cast<long>(q) - static_cast<long>(N);
    if (std::abs(static_cast<double>(qs) * dw) > cutoff) continue;
    Complex acc = 0.0;
    for (std::size_t k = 0; k < N; ++k)
      acc += g[k] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(q * k % N) / static_cast<double>(N));
    G[q] = acc;
  }
  for (std::size_t k = 0; k <= K; ++k) {
    Complex acc = 0.0;
    for (std::size_t q = 0; q < N; ++q)
      if (G[q] != 0.0)
        acc += G[q] * std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(q * k % N) / static_cast<double>(N));
    out.values[k] = acc / static_cast<double>(N);
  }
  return out;
}

/// Decay exponent of a time series: moving-average filter over `scale`, then a
/// log-log fit of the real part on [lo, hi]. nu is minus the exponent.
inline PowerLawFit decay_fit(const TimeSeries& ts, double lo, double hi, double scale = 2.0) {
  const auto f = oscillation_filter(ts, FilterMethod::MovingAverage, scale);
  return powerlaw_fit(f.times, f.real_values(), lo, hi);
}

// --- singular part of a frequency profile ---------------------------------------------

struct SingularRemainder {
  double f0 = 0.0;       // estimate of the finite omega -> 0 limit
  double omega_min = 0.0;
  std::vector<double> omega, value;  // |f|^2 - f0 on omega >= omega_min, positive side
};

/// Subtracts the mean of the three lowest bins at omega >= omega_min from the
/// positive-frequency part of the profile. Bins with a pair count below
/// `min_count` are skipped when the profile carries counts.
inline SingularRemainder singular_remainder(const FrequencyProfile& prof, double omega_min,
                                            std::uint64_t min_count = 0) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& b : prof.bins)
    if (b.omega >= omega_min && (min_count == 0 || b.count >= min_count)) pts.emplace_back(b.omega, b.value);
  if (pts.size() < 4) throw InvalidArgument("singular_remainder: fewer than four bins above omega_min");
  SingularRemainder s;
  s.omega_min = omega_min;
  s.f0 = (pts[0].second + pts[1].second + pts[2].second) / 3.0;
  for (const auto& [w, v] : pts) {
    s.omega.push_back(w);
    s.value.push_back(v - s.f0);
  }
  return s;
}

struct SingularFit {
  double f0 = 0.0;         // omega -> 0 limit
  double amplitude = 0.0;  // c of the singular term c omega^p
  double smooth = 0.0;     // d of the smooth correction d omega^2
  PowerLawFit power;       // p, its stderr and the window; r_squared of the curve in linear space
};

namespace detail {

// least squares y ~ sum_j coef_j cols_j (column-major design), returns coefficients and residual sum
inline std::pair<std::vector<double>, double> linear_fit(std::vector<double> design, std::size_t ncol,
                                                         std::span<const double> y) {
  const auto n = static_cast<lapack_int>(y.size());
  std::vector<double> rhs(y.begin(), y.end());
  const std::vector<double> a = design;
  const lapack_int info = LAPACKE_dgels(LAPACK_COL_MAJOR, 'N', n, static_cast<lapack_int>(ncol), 1, design.data(), n,
                                        rhs.data(), n);
  if (info != 0) throw ConvergenceError("linear_fit: rank-deficient design");
  std::vector<double> coef(rhs.begin(), rhs.begin() + static_cast<std::ptrdiff_t>(ncol));
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double r = y[i];
    for (std::size_t j = 0; j < ncol; ++j) r -= coef[j] * a[j * y.size() + i];
    ss += r * r;
  }
  return {coef, ss};
}

}  // namespace detail

/// Least-squares fit of f0 + c omega^p + d omega^2 to the positive-frequency
/// bins on [lo, hi]; at beta = 0 the smooth part is even in omega, so d omega^2
/// is its leading correction (`smooth_term = false` drops it). For fixed p the
/// fit is linear; p minimizes the residual on [p_min, p_max] and its stderr
/// follows from the curvature of the residual. Unlike `singular_remainder` the
/// finite part is not tied to bins inside the window.
inline SingularFit singular_fit(const FrequencyProfile& prof, double lo, double hi, bool smooth_term = true,
                                double p_min = 0.05, double p_max = 1.9) {
  if (!(0 < lo && lo < hi)) throw InvalidArgument("singular_fit: need 0 < lo < hi");
  if (!(0 < p_min && p_min < p_max)) throw InvalidArgument("singular_fit: bad exponent range");
  std::vector<double> w, y;
  for (const auto& b : prof.bins)
    if (b.omega >= lo && b.omega <= hi) {
      w.push_back(b.omega);
      y.push_back(b.value);
    }
  const std::size_t ncol = smooth_term ? 3 : 2;
  if (w.size() < ncol + 3) throw InvalidArgument("singular_fit: too few bins in the window");
  const std::size_t n = w.size();
  auto solve = [&](double p) {
    std::vector<double> design(n * ncol);
    for (std::size_t i = 0; i < n; ++i) {
      design[i] = 1.0;
      design[n + i] = std::pow(w[i], p);
      if (smooth_term) design[2 * n + i] = w[i] * w[i];
    }
    return detail::linear_fit(std::move(design), ncol, y);
  };
  const int grid = 600;
  double bp = p_min, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double p = p_min + (p_max - p_min) * i / grid;
    if (const double ss = solve(p).second; ss < best) {
      best = ss;
      bp = p;
    }
  }
  double a = std::max(p_min, bp - (p_max - p_min) / grid), b = std::min(p_max, bp + (p_max - p_min) / grid);
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 60; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (solve(c).second < solve(d).second)
      b = d;
    else
      a = c;
  }
  const double p = 0.5 * (a + b);
  const auto [coef, ss] = solve(p);
  const double h = 1e-3, curv = (solve(p + h).second - 2 * ss + solve(p - h).second) / (h * h);
  const double sigma2 = ss / static_cast<double>(n - ncol - 1);
  SingularFit s;
  s.f0 = coef[0];
  s.amplitude = coef[1];
  if (smooth_term) s.smooth = coef[2];
  s.power.exponent = p;
  s.power.exponent_stderr = curv > 0 ? std::sqrt(2 * sigma2 / curv) : std::numeric_limits<double>::infinity();
  s.power.intercept = std::log(std::abs(coef[1]));
  s.power.x_lo = lo;
  s.power.x_hi = hi;
  s.power.points = n;
  std::vector<double> pred(n);
  for (std::size_t i = 0; i < n; ++i) pred[i] = s.f0 + s.amplitude * std::pow(w[i], p) + s.smooth * w[i] * w[i];
  s.power.r_squared = s.power.r_squared_linear = detail::r2_linear(y, pred);
  if (p <= p_min + 1e-6 || p >= p_max - 1e-6) warn("singular_fit: exponent at the edge of the scanned range");
  return s;
}

/// Finite-size frequency cutoff 10 * 2 pi / t_max.
inline double finite_size_cutoff(double t_max) { return 10.0 * 2.0 * std::numbers::pi / t_max; }

}  // namespace ethdyn
