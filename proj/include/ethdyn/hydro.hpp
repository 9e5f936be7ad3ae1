// hydro.hpp - continuum oracle: n-point correlators of a conserved density
// evolved by (fractional) diffusion, computed mode by mode in Fourier space.
#pragma once

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "core.hpp"

namespace ethdyn {

/// Initial data for one insertion: |k|^mu exp(-k^2 / (2 width^2)), or samples
/// on a uniform grid k = 0, dk, 2 dk, ... (even in k, zero past the last sample).
class KProfile {
 public:
  KProfile() = default;
  KProfile(double mu, double width) : mu_(mu), width_(width) {
    if (!(mu >= 0)) throw InvalidArgument("KProfile: mu must be nonnegative");
    if (!(width > 0)) throw InvalidArgument("KProfile: width must be positive");
  }

  static KProfile table(std::vector<double> samples, double dk) {
    if (samples.size() < 4) throw InvalidArgument("KProfile: need at least four samples");
    if (!(dk > 0)) throw InvalidArgument("KProfile: grid spacing must be positive");
    KProfile p;
    p.dk_ = dk;
    p.k_max_ = dk * static_cast<double>(samples.size() - 1);
    p.spline_ = std::make_shared<const Spline>(samples.data(), samples.size(), 0.0, dk, 0.0);
    p.samples_ = std::move(samples);
    return p;
  }

  bool tabulated() const { return static_cast<bool>(spline_); }
  double mu() const { return mu_; }
  double width() const { return width_; }
  /// Upper end of the support (infinity for the symbolic family).
  double k_max() const { return tabulated() ? k_max_ : std::numeric_limits<double>::infinity(); }

  double operator()(double k) const {
    k = std::abs(k);
    if (tabulated()) return k > k_max_ ? 0.0 : (*spline_)(k);
    const double g = std::exp(-0.5 * k * k / (width_ * width_));
    return mu_ == 0.0 ? g : std::pow(k, mu_) * g;
  }

  std::string describe() const {
    std::ostringstream os;
    if (tabulated())
      os << "tabulated(" << samples_.size() << " samples, dk=" << dk_ << ")";
    else
      os << "|k|^" << mu_ << " exp(-k^2/(2*" << width_ << "^2))";
    return os.str();
  }

 private:
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
  double mu_ = 0.0, width_ = 1.0;
  double dk_ = 0.0, k_max_ = 0.0;
  std::vector<double> samples_;
  std::shared_ptr<const Spline> spline_;
};

struct HydroSetup {
  int n = 1;            // number of density insertions
  int d = 1;            // spatial dimension; only d = 1 is implemented
  double z = 2.0;       // dynamical exponent, kernel exp(-D |k|^z t)
  double D = 1.0;
  double mu = 0.0;      // extra |k|^mu on the first insertion of the default data
  std::vector<KProfile> modes;      // explicit per-insertion data, overrides the default
  std::optional<double> volume;     // periodic length, or infinite line

  void validate() const {
    if (n < 1) throw InvalidArgument("hydro: n must be at least 1");
    if (d != 1) throw InvalidArgument("hydro: only d = 1 is supported");
    if (!(z > 0)) throw InvalidArgument("hydro: z must be positive");
    if (!(D > 0)) throw InvalidArgument("hydro: D must be positive");
    if (!(mu >= 0)) throw InvalidArgument("hydro: mu must be nonnegative");
    if (!modes.empty() && modes.size() != static_cast<std::size_t>(n))
      throw InvalidArgument("hydro: need one profile per insertion");
    if (volume && !(*volume > 0)) throw InvalidArgument("hydro: volume must be positive");
  }

  KProfile profile(int j) const {
    if (!modes.empty()) return modes.at(static_cast<std::size_t>(j));
    return KProfile(j == 0 ? mu : 0.0, 1.0);
  }

  std::string describe() const {
    std::ostringstream os;
    os << "n=" << n << " d=" << d << " z=" << z << " D=" << D << " volume="
       << (volume ? std::to_string(*volume) : std::string("infinite")) << " initial=";
    for (int j = 0; j < n; ++j) os << (j ? " x " : "") << profile(j).describe();
    return os.str();
  }
};

/// C~(k, t) = prod_j f_j(k_j) exp(-D |k_j|^z t).
inline double hydro_spectrum(const HydroSetup& s, std::span<const double> k, double t) {
  s.validate();
  if (k.size() != static_cast<std::size_t>(s.n)) throw InvalidArgument("hydro_spectrum: need n momenta");
  double v = 1.0;
  for (int j = 0; j < s.n; ++j) {
    const double kj = std::abs(k[j]);
    v *= s.profile(j)(kj) * std::exp(-s.D * std::pow(kj, s.z) * t);
  }
  return v;
}

namespace detail {

// (1/pi) int_0^inf f(k) exp(-D k^z t) cos(k x) dk, rescaled so the integrand
// has unit width in u = k / scale whatever t is. Accuracy is judged against
// the larger of the result and a percent of the integrand L1 mass, so values
// that cancel to zero still converge.
inline double mode_integral(const KProfile& f, double D, double z, double x, double t, double rel_tol) {
  if (std::isinf(t)) return 0.0;
  const double kernel_scale = t > 0 ? std::pow(D * t, -1.0 / z) : std::numeric_limits<double>::infinity();
  const double envelope = f.tabulated() ? f.k_max() / 4 : f.width() * (1.0 + std::sqrt(f.mu()));
  const double scale = std::min(envelope, kernel_scale);
  const double c = D * t * std::pow(scale, z);
  auto integrand = [&](double u) {
    const double k = scale * u;
    return f(k) * std::exp(-c * std::pow(u, z)) * std::cos(k * x);
  };
  const double upper = f.tabulated() ? f.k_max() / scale : std::numeric_limits<double>::infinity();
  double err = 0.0, l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, upper, 15,
                                                                                 rel_tol * 1e-2, &err, &l1);
  if (!std::isfinite(v) || err > rel_tol * std::max(std::abs(v), 1e-2 * l1))
    throw ConvergenceError("hydro: quadrature did not converge (error " + std::to_string(err) + " on " +
                           std::to_string(v) + ")");
  return scale * v / std::numbers::pi;
}

// (1/L) sum over k = 2 pi j / L of f(k) exp(-D |k|^z t) cos(k x).
inline double mode_sum(const KProfile& f, double D, double z, double x, double t, double L) {
  const double f0 = f(0.0);
  if (std::isinf(t)) return f0 / L;
  const double dk = 2.0 * std::numbers::pi / L;
  const double k_turn = f.tabulated() ? 0.0 : f.width() * std::sqrt(f.mu());
  double sum = f0, mag = std::abs(f0);
  constexpr long kMaxModes = 50'000'000;
  for (long j = 1;; ++j) {
    if (j > kMaxModes) throw ConvergenceError("hydro: momentum sum did not converge");
    const double k = dk * static_cast<double>(j);
    if (k > f.k_max()) break;
    const double term = f(k) * std::exp(-D * std::pow(k, z) * t);
    sum += 2.0 * term * std::cos(k * x);
    mag += 2.0 * std::abs(term);
    if (k > k_turn && std::abs(term) <= 1e-18 * mag) break;
  }
  return sum / L;
}

}  // namespace detail

/// C(x, t) for separations x (one per insertion; empty means all zero).
/// t = +infinity gives the exact late-time limit: zero on the infinite line,
/// the k = 0 term C~(0, 0) / L^n in a periodic volume.
inline double evolve_correlator(const HydroSetup& s, std::span<const double> x, double t, double rel_tol = 1e-8) {
  s.validate();
  if (!(t >= 0)) throw InvalidArgument("evolve_correlator: t must be nonnegative");
  if (!x.empty() && x.size() != static_cast<std::size_t>(s.n))
    throw InvalidArgument("evolve_correlator: need one separation per insertion");
  double v = 1.0;
  for (int j = 0; j < s.n; ++j) {
    const double xj = x.empty() ? 0.0 : x[j];
    const auto f = s.profile(j);
    v *= s.volume ? detail::mode_sum(f, s.D, s.z, xj, t, *s.volume)
                  : detail::mode_integral(f, s.D, s.z, xj, t, rel_tol);
  }
  return v;
}

struct HydroCurve {
  std::vector<double> t, c;
};

/// C(0, t) on a logarithmic grid.
inline HydroCurve hydro_curve(const HydroSetup& s, double t_lo, double t_hi, std::size_t points) {
  if (!(t_lo > 0 && t_hi > t_lo) || points < 2) throw InvalidArgument("hydro_curve: bad time grid");
  HydroCurve out;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = t_lo * std::pow(t_hi / t_lo, static_cast<double>(i) / static_cast<double>(points - 1));
    out.t.push_back(t);
    out.c.push_back(evolve_correlator(s, {}, t));
  }
  return out;
}

/// Log-log fit of C(0, t) on [t_lo, t_hi]. Throws if the local slopes of the
/// two halves of the window differ by more than `drift_tol`, which means the
/// window still sits in the pre-asymptotic regime.
inline PowerLawFit decay_exponent(const HydroSetup& s, double t_lo, double t_hi, std::size_t points = 41,
                                  double drift_tol = 0.02) {
  if (s.volume) throw InvalidArgument("decay_exponent: needs the infinite line");
  const auto curve = hydro_curve(s, t_lo, t_hi, points);
  const double mid = std::sqrt(t_lo * t_hi);
  const auto early = powerlaw_fit(curve.t, curve.c, t_lo, mid, false, 3);
  const auto late = powerlaw_fit(curve.t, curve.c, mid, t_hi, false, 3);
  if (std::abs(early.exponent - late.exponent) > drift_tol)
    throw ConvergenceError("decay_exponent: local slope drifts from " + std::to_string(early.exponent) + " to " +
                           std::to_string(late.exponent) + "; window is pre-asymptotic");
  return powerlaw_fit(curve.t, curve.c, t_lo, t_hi);
}

struct PlateauScaling {
  std::vector<double> sizes, plateaus;
  std::optional<PowerLawFit> fit;
  bool vanishes = false;  // C~(0, 0) = 0: every plateau is identically zero
};

/// Late-time plateau C(0, infinity) in periodic volumes of the given lengths,
/// fitted against L.
inline PlateauScaling plateau_scaling(const HydroSetup& s, std::span<const double> sizes) {
  if (sizes.size() < 3) throw InvalidArgument("plateau_scaling: need at least three sizes");
  PlateauScaling r;
  r.vanishes = true;
  for (double L : sizes) {
    HydroSetup v = s;
    v.volume = L;
    const double p = evolve_correlator(v, {}, std::numeric_limits<double>::infinity());
    r.sizes.push_back(L);
    r.plateaus.push_back(p);
    if (p != 0.0) r.vanishes = false;
  }
  if (!r.vanishes) {
    const auto [lo, hi] = std::minmax_element(r.sizes.begin(), r.sizes.end());
    r.fit = powerlaw_fit(r.sizes, r.plateaus, *lo, *hi, false, sizes.size());
  }
  return r;
}

}  // namespace ethdyn
