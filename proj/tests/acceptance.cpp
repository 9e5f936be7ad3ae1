// Acceptance suite: one numbered criterion per invocation, printing a single
// "criterion N: PASS|FAIL" line after its individual checks.
#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "ethdyn/ethdyn.hpp"

using namespace ethdyn;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kStrings{"Sx1", "Sx1Sx2", "Sx1Sx2Sx3", "Sx1Sx2Sx3Sx4"};

std::string num(double x, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << x;
  return os.str();
}

class Report {
 public:
  void check(bool pass, const std::string& what) {
    std::cout << (pass ? "  ok    " : "  FAIL  ") << what << '\n' << std::flush;
    ok_ = ok_ && pass;
  }
  void info(const std::string& what) { std::cout << "  ..    " << what << '\n' << std::flush; }
  bool ok() const { return ok_; }

 private:
  bool ok_ = true;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

struct Context {
  fs::path cache;
  std::optional<fs::path> series_dir;  // typicality series are saved here when set
  bool reuse_series = false;           // load matching saved series instead of recomputing
  Report report;
};

SparseOperator observable(std::string_view name, const SpinChainSpec& spec, const SparseOperator* H = nullptr) {
  return build_observable(ObservableDescriptor::parse(name), spec, H);
}

TimeSeries load_series(const fs::path& p, const std::string& name, int L, double beta) {
  const auto t = io::read_csv(p);
  TimeSeries ts;
  ts.times = t.column("t");
  const auto& re = t.column("re");
  const auto& im = t.column("im");
  for (std::size_t k = 0; k < re.size(); ++k) ts.values.emplace_back(re[k], im[k]);
  ts.std_error = t.column("stderr");
  ts.observable = name;
  ts.L = L;
  ts.beta = beta;
  return ts;
}

std::vector<TimeSeries> typicality(Context& ctx, const SpinChainSpec& spec, const std::vector<std::string>& names,
                                   double beta, double dt, double t_max, std::size_t realizations,
                                   std::uint64_t seed) {
  const Stopwatch sw;
  const std::string what = "typicality " + to_string(spec.model) + " L=" + std::to_string(spec.L) +
                           " beta=" + num(beta) + " dt=" + num(dt) + " t_max=" + num(t_max) +
                           " N_p=" + std::to_string(realizations);
  auto path = [&](const std::string& name) {
    return *ctx.series_dir / (to_string(spec.model) + "-L" + std::to_string(spec.L) + "-b" + num(beta) + "-dt" +
                              num(dt) + "-t" + num(t_max) + "-n" + std::to_string(realizations) + "-s" +
                              std::to_string(seed) + "-" + name + ".csv");
  };
  if (ctx.series_dir && ctx.reuse_series &&
      std::all_of(names.begin(), names.end(), [&](const auto& n) { return fs::exists(path(n)); })) {
    std::vector<TimeSeries> out;
    for (const auto& n : names) out.push_back(load_series(path(n), n, spec.L, beta));
    ctx.report.info(what + ": loaded from " + ctx.series_dir->string());
    return out;
  }
  SpinChainKernel H(spec);
  const auto bounds = spectral_bounds(H);
  std::vector<SparseOperator> ops;
  for (const auto& n : names) ops.push_back(observable(n, spec));
  std::vector<const SparseOperator*> ptrs;
  for (const auto& o : ops) ptrs.push_back(&o);
  const auto run = TypicalityRun::make(realizations, beta, dt, t_max, seed);
  auto out = dqt_autocorrelators(H, bounds, ptrs, names, run, spec.L);
  if (ctx.series_dir)
    for (const auto& ts : out) io::write_csv(path(ts.observable), detail::series_table(ts));
  ctx.report.info(what + ": " + num(sw.seconds(), 3) + " s");
  return out;
}

EigenSystem eigensystem(Context& ctx, const SpinChainSpec& spec, const SectorOptions& opt = {}) {
  const Stopwatch sw;
  auto sys = io::cached_eigensystem(ctx.cache, spec, true, kDefaultDenseCap, opt);
  ctx.report.info("spectrum " + to_string(spec.model) + " L=" + std::to_string(spec.L) + " (" +
                  std::to_string(sys.size()) + " sectors): " + num(sw.seconds(), 3) + " s");
  return sys;
}

// positive-frequency part of a profile
std::pair<std::vector<double>, std::vector<double>> positive_side(const FrequencyProfile& p) {
  std::vector<double> w, v;
  for (const auto& b : p.bins)
    if (b.omega > 0) {
      w.push_back(b.omega);
      v.push_back(b.value);
    }
  return {w, v};
}

// --- criteria --------------------------------------------------------------------------

// exact overlap orders at L = 6, infinite temperature
void overlap_orders(Context& ctx) {
  auto& rep = ctx.report;
  const auto spec = tilted_ising_preset(6);
  const auto H = build_hamiltonian(spec);
  for (int n = 1; n <= 4; ++n) {
    const auto r = overlap_order(H, observable(kStrings[n - 1], spec), 0.0, 6);
    double lower = 0.0;
    for (int k = 1; k < n; ++k) lower = std::max(lower, r.normalized[k]);
    rep.check(r.m == n && lower <= 1e-10 && r.witness >= 1e-3,
              kStrings[n - 1] + ": m = " + r.to_string() + ", largest lower cumulant " + num(lower, 2) +
                  ", witness " + num(r.witness, 3));
  }
  const auto z = overlap_order(H, observable("Sz1", spec), 0.0, 6);
  rep.check(z.m == 1, "Sz1: m = " + z.to_string() + ", witness " + num(z.witness, 3));
  for (const char* name : {"Sy1", "i[H,Sx1]"}) {
    const auto r = overlap_order(H, observable(name, spec, &H), 0.0, 6);
    rep.check(r.infinite(), std::string(name) + ": m = " + r.to_string() + ", largest normalized cumulant " +
                                num(r.witness, 2));
  }
}

// exact and typicality autocorrelators at L = 8 agree pointwise
void ed_vs_typicality(Context& ctx) {
  auto& rep = ctx.report;
  const auto spec = tilted_ising_preset(8);
  const auto sys = eigensystem(ctx, spec);
  const auto dqt = typicality(ctx, spec, kStrings, 0.0, 0.5, 50.0, 20, 2001);
  for (std::size_t o = 0; o < kStrings.size(); ++o) {
    const auto& ts = dqt[o];
    const auto exact = exact_autocorrelator(sys, observable(kStrings[o], spec), 0.0, ts.times);
    double worst = 0.0, worst_t = 0.0;
    std::size_t bad = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double diff = std::abs(exact[k] - ts.values[k]);
      const double allowed = std::max(3.0 * ts.std_error[k], 1e-2);
      if (diff > allowed) ++bad;
      if (diff / allowed > worst) {
        worst = diff / allowed;
        worst_t = ts.times[k];
      }
    }
    rep.check(bad == 0, kStrings[o] + ": " + std::to_string(bad) + " of " + std::to_string(ts.size()) +
                            " points outside max(3 stderr, 1e-2); worst ratio " + num(worst, 3) + " at t = " +
                            num(worst_t));
  }
}

// log-log slope of |f - f0| above the three bins that fix f0
PowerLawFit remainder_slope(const FrequencyProfile& prof, double omega_min, double hi) {
  const auto s = singular_remainder(prof, omega_min);
  std::vector<double> w, v;
  for (std::size_t i = 3; i < s.omega.size(); ++i) {
    w.push_back(s.omega[i]);
    v.push_back(std::abs(s.value[i]));
  }
  return powerlaw_fit(w, v, w.front(), hi);
}

// low-frequency singularities of |f(omega)|^2 from typicality at L = 12
void singularities(Context& ctx) {
  auto& rep = ctx.report;
  const double t_max = 300.0, lo = 0.05, hi = 0.5;
  const auto dqt = typicality(ctx, tilted_ising_preset(12), kStrings, 0.0, 0.5, t_max, 4, 3001);
  std::vector<FrequencyProfile> prof;
  for (const auto& ts : dqt) prof.push_back(fourier_f2(ts, 0.0, saturation_value(ts).value, 1.0));

  auto [w1, v1] = positive_side(prof[0]);
  const auto f1 = powerlaw_fit(w1, v1, lo, hi);
  rep.check(std::abs(f1.exponent + 0.5) <= 0.15,
            "Sx1: log-log slope " + num(f1.exponent) + " +- " + num(f1.exponent_stderr, 2) + " on [0.05, 0.5]");

  auto [w2, v2] = positive_side(prof[1]);
  const auto f2 = powerlaw_fit(w2, v2, lo, hi, true);
  const double pure = best_power_r2(w2, v2, lo, hi);
  rep.check(f2.exponent < 0 && f2.r_squared_linear > pure,
            "Sx1Sx2: a + b log w with b = " + num(f2.exponent) + ", r2 " + num(f2.r_squared_linear, 5) +
                " against best pure power r2 " + num(pure, 5));

  const double target[] = {0.5, 1.0}, tol[] = {0.2, 0.25};
  for (int i = 0; i < 2; ++i) {
    const auto& p = prof[2 + i];
    const auto f = singular_fit(p, lo, hi);
    rep.check(std::abs(f.power.exponent - target[i]) <= tol[i],
              kStrings[2 + i] + ": f0 + c w^p + d w^2 on [0.05, 0.5] gives p = " + num(f.power.exponent) + " +- " +
                  num(f.power.exponent_stderr, 2) + " (c = " + num(f.amplitude, 3) + ", r2 " +
                  num(f.power.r_squared, 4) + ")");
    for (double omega_min : {lo, finite_size_cutoff(t_max)}) {
      try {
        const auto r = remainder_slope(p, omega_min, hi);
        rep.info(kStrings[2 + i] + ": |f - f0| with f0 from the bins at omega >= " + num(omega_min, 3) +
                 ", slope " + num(r.exponent) + " on [" + num(r.x_lo, 3) + ", 0.5]");
      } catch (const InvalidArgument& e) {
        rep.info(kStrings[2 + i] + ": remainder above " + num(omega_min, 3) + " not fittable (" + e.what() + ")");
      }
    }
  }
}

std::vector<int> exact_orders(const std::vector<std::string>& names, double beta) {
  const auto spec = tilted_ising_preset(6);
  const auto H = build_hamiltonian(spec);
  std::vector<int> m;
  for (const auto& n : names) {
    const auto r = overlap_order(H, observable(n, spec), beta, 6);
    if (!r.m) throw Error("unexpected infinite overlap order for " + n);
    m.push_back(*r.m);
  }
  return m;
}

// decay exponents at L = 14 and the relaxation-overlap verdicts
void decay_exponents(Context& ctx) {
  auto& rep = ctx.report;
  const auto m = exact_orders(kStrings, 0.0);
  const auto dqt = typicality(ctx, tilted_ising_preset(14), kStrings, 0.0, 1.0, 25.0, 4, 4001);
  const double target[] = {0.5, 1.0}, tol[] = {0.15, 0.2};
  for (std::size_t o = 0; o < kStrings.size(); ++o) {
    const auto f = decay_fit(dqt[o], 3.0, 25.0);
    const double nu = -f.exponent;
    std::string what = kStrings[o] + ": nu = " + num(nu) + " +- " + num(f.exponent_stderr, 2) + ", m = " +
                       std::to_string(m[o]);
    if (o < 2) {
      rep.check(std::abs(nu - target[o]) <= tol[o], what + " (expected " + num(target[o]) + " +- " + num(tol[o]) + ")");
    }
    const auto v = o < 2 ? roi_check(nu, f.exponent_stderr, m[o]) : roi_check(nu, f.exponent_stderr, m[o], 1, 2, 0.25);
    rep.check(v.satisfied && v.saturated, what + ": bound " + num(v.bound) + ", tolerance " + num(v.tolerance, 3) +
                                              ", verdict " + verdict_text(v));
  }
}

// diagonal-ensemble plateaus against L from exact spectra
FiniteSizeResult plateau_fit(Context& ctx, const SpinChainSpec& base, std::string_view name,
                             const SectorOptions& opt = {}) {
  std::vector<PlateauPoint> pts;
  std::string row;
  for (int L : {6, 8, 10}) {
    auto spec = base;
    spec.L = L;
    const auto sys = eigensystem(ctx, spec, opt);
    const auto H = build_hamiltonian(spec);
    const double p = diagonal_ensemble_plateau(sys, observable(name, spec, &H), 0.0);
    pts.push_back({L, p, 0.0});
    row += " L=" + std::to_string(L) + ":" + num(p, 3);
  }
  ctx.report.info(std::string(name) + " plateaus" + row);
  return finite_size_fit(pts);
}

void plateau_scaling(Context& ctx) {
  auto& rep = ctx.report;
  const auto base = tilted_ising_preset(6);
  const auto m = exact_orders({"Sx1", "Sx1Sx2"}, 0.0);
  for (int i = 0; i < 2; ++i) {
    const auto r = plateau_fit(ctx, base, kStrings[i]);
    rep.check(r.fit && std::abs(r.m_hat - m[i]) <= 0.4,
              kStrings[i] + ": m_hat = " + num(r.m_hat) + " against m = " + std::to_string(m[i]));
  }
  const auto r = plateau_fit(ctx, base, "i[H,Sx1]");
  rep.check(r.below_noise_floor && !r.fit, "i[H,Sx1]: " + (r.note.empty() ? "m_hat = " + num(r.m_hat) : r.note));
}

// adjacent-gap ratio of the (k = 0, p = +1) block and of a Poisson sequence
void level_statistics(Context& ctx) {
  auto& rep = ctx.report;
  for (int L : {9, 10}) {
    const Stopwatch sw;
    const auto spec = tilted_ising_preset(L);
    const auto H = build_hamiltonian(spec);
    SectorBuilder builder(L, false);
    const auto basis = builder.build({0, 1, 0});
    auto block = hamiltonian_block(H, basis);
    const auto e = symmetric_eigen(block, false);
    const auto r = gap_ratio(e);
    rep.check(std::abs(r.mean_r - 0.53) <= 0.02, "L=" + std::to_string(L) + " (k=0, p=+1), " +
                                                     std::to_string(e.size()) + " levels: <r> = " + num(r.mean_r) +
                                                     " (" + num(sw.seconds(), 3) + " s)");
  }
  std::mt19937_64 rng(6001);
  std::exponential_distribution<double> gap(1.0);
  std::vector<double> levels(200000);
  double x = 0.0;
  for (auto& l : levels) l = x += gap(rng);
  const auto p = gap_ratio(levels);
  rep.check(std::abs(p.mean_r - 0.386) <= 0.01, "Poisson sequence of " + std::to_string(levels.size()) +
                                                   " levels: <r> = " + num(p.mean_r));
}

// exponents of the diffusive oracle
void hydro_closure(Context& ctx) {
  auto& rep = ctx.report;
  for (int n = 1; n <= 4; ++n) {
    HydroSetup s;
    s.n = n;
    const double e = decay_exponent(s, 1e3, 1e5).exponent;
    rep.check(std::abs(e + 0.5 * n) <= 0.01, "n=" + std::to_string(n) + ": decay exponent " + num(e, 5));
  }
  for (double mu : {2.0, 4.0}) {
    HydroSetup s;
    s.mu = mu;
    const double e = decay_exponent(s, 1e3, 1e5).exponent;
    rep.check(std::abs(e + 0.5 * (1 + mu)) <= 0.02, "mu=" + num(mu) + ": decay exponent " + num(e, 5));
  }
  const std::vector<double> sizes{8, 16, 32, 64};
  for (int n = 1; n <= 4; ++n) {
    HydroSetup s;
    s.n = n;
    const auto p = plateau_scaling(s, sizes);
    rep.check(p.fit && std::abs(p.fit->exponent + n) <= 0.01,
              "n=" + std::to_string(n) + ": plateau exponent " + (p.fit ? num(p.fit->exponent, 5) : "none"));
  }
}

// Gaussian Monte-Carlo constants
void gaussian_constants(Context& ctx) {
  for (int m = 1; m <= 6; ++m) {
    const double mc = kappa_monte_carlo(m, 10'000'000, 8000 + m);
    const double k = kappa(m);
    ctx.report.check(std::abs(mc / k - 1) <= 0.02, "m=" + std::to_string(m) + ": Monte Carlo " + num(mc, 6) +
                                                       " against " + num(k, 6));
  }
}

// late-time decay and overlap order at beta = 0.6
void finite_temperature(Context& ctx) {
  auto& rep = ctx.report;
  const double beta = 0.6;
  const auto spec8 = tilted_ising_preset(8);
  const auto sys = eigensystem(ctx, spec8);
  const auto r = overlap_order(moment_table(sys, observable("Sx1Sx2", spec8), 6, beta));
  rep.check(r.m == 1, "Sx1Sx2 at beta = 0.6, L = 8 exact cumulants: m = " + r.to_string() + ", witness " +
                          num(r.witness, 3));
  const auto ts = typicality(ctx, tilted_ising_preset(12), {"Sx1Sx2"}, beta, 0.5, 30.0,
                             default_realizations(12), 9001)[0];
  const auto f = decay_fit(ts, 10.0, 30.0);
  rep.check(std::abs(-f.exponent - 0.5) <= 0.2,
            "Sx1Sx2 at beta = 0.6, L = 12: nu = " + num(-f.exponent) + " +- " + num(f.exponent_stderr, 2) +
                " on [10, 30]");
}

// super-diffusive long-range chain
void long_range(Context& ctx) {
  auto& rep = ctx.report;
  const auto spec = long_range_ising_preset(12);
  const auto ts = typicality(ctx, spec, {"Sx1"}, 0.0, 0.5, 25.0, default_realizations(12), 10001)[0];
  const auto f = decay_fit(ts, 3.0, 25.0);
  const double nu = -f.exponent, z = 1.0 / nu;
  rep.check(z >= 1.15 && z <= 1.55,
            "Sx1, L = 12, alpha = 1.5: nu = " + num(nu) + " +- " + num(f.exponent_stderr, 2) + ", z = 1/nu = " + num(z));
  SectorOptions opt;
  opt.flip = true;
  const auto r = plateau_fit(ctx, long_range_ising_preset(6), "Sx1", opt);
  rep.check(r.fit && std::abs(r.m_hat - 1.0) <= 0.4, "Sx1 plateaus: m_hat = " + num(r.m_hat) + " against m = 1");
}

// binned exact |f|^2 against the Fourier transform of the typicality series at L = 10
void estimator_equivalence(Context& ctx) {
  auto& rep = ctx.report;
  const auto spec = tilted_ising_preset(10);
  const double dt = 0.5, t_max = 60.0;
  const auto ts = typicality(ctx, spec, {"Sx1"}, 0.0, dt, t_max, default_realizations(10), 11001)[0];
  const auto fourier = fourier_f2(ts, 0.0, saturation_value(ts).value, 1.2);
  const auto sys = eigensystem(ctx, spec);
  const Stopwatch sw;
  const auto binned = f2_binned(sys, observable("Sx1", spec), 0.0, fourier.bin_width);
  rep.info("f2_binned with bin width " + num(fourier.bin_width) + ": " + num(sw.seconds(), 3) + " s");
  std::size_t compared = 0, bad = 0;
  double worst = 0.0;
  for (const auto& b : binned.bins) {
    if (b.omega < 0.1 - 1e-9 || b.omega > 1.0 + 1e-9 || b.count == 0) continue;
    const auto it = std::min_element(fourier.bins.begin(), fourier.bins.end(), [&](const auto& x, const auto& y) {
      return std::abs(x.omega - b.omega) < std::abs(y.omega - b.omega);
    });
    const double rel = std::abs(it->value / b.value - 1.0);
    ++compared;
    if (rel > 0.1) ++bad;
    worst = std::max(worst, rel);
  }
  rep.check(compared > 0 && bad == 0, "Sx1: " + std::to_string(compared) + " bins in [0.1, 1], " +
                                          std::to_string(bad) + " differ by more than 10%, worst " + num(worst, 3));
}

}  // namespace

int main(int argc, char** argv) {
  reexec_with_working_blas(argv);
  CLI::App app{"acceptance criteria"};
  int criterion = 0;
  std::string cache = "acceptance_cache";
  app.add_option("--criterion", criterion, "criterion number")->required()->check(CLI::Range(1, 11));
  app.add_option("--cache", cache, "spectrum cache directory");
  std::string series;
  app.add_option("--series-dir", series, "also write every typicality series as CSV into this directory");
  bool reuse = false;
  app.add_flag("--reuse-series", reuse, "analyse series already saved in --series-dir instead of recomputing them");
  CLI11_PARSE(app, argc, argv);

  using Fn = void (*)(Context&);
  const Fn criteria[] = {overlap_orders,     ed_vs_typicality, singularities,      decay_exponents,
                         plateau_scaling,    level_statistics, hydro_closure,      gaussian_constants,
                         finite_temperature, long_range,       estimator_equivalence};
  Context ctx{cache, std::nullopt, false, {}};
  if (!series.empty()) ctx.series_dir = series;
  ctx.reuse_series = reuse;
  const Stopwatch sw;
  bool ok = false;
  try {
    criteria[criterion - 1](ctx);
    ok = ctx.report.ok();
  } catch (const std::exception& e) {
    std::cout << "  error " << e.what() << '\n';
  }
  std::cout << "criterion " << criterion << ": " << (ok ? "PASS" : "FAIL") << " (" << num(sw.seconds(), 3) << " s)\n";
  return ok ? 0 : 1;
}
