// ethdyn - command-line front end. Exit codes: 0 success, 1 configuration
// error, 2 task failure, 3 size cap exceeded.
#include <CLI11.hpp>

#include <iostream>
#include <random>

#include "ethdyn/ethdyn.hpp"

using namespace ethdyn;

namespace {

struct ModelArgs {
  std::string preset = "tilted-ising-paper";
  int L = 8;
  std::optional<double> J, hx, hz, alpha;
  std::string cache;
  std::size_t dense_cap = kDefaultDenseCap;

  void attach(CLI::App* c) {
    c->add_option("--preset", preset, "model preset")->check(CLI::IsMember({"tilted-ising-paper", "long-range-ising-paper"}));
    c->add_option("-L,--length", L, "chain length");
    c->add_option("--J", J, "override the Ising coupling");
    c->add_option("--hx", hx, "override the transverse field");
    c->add_option("--hz", hz, "override the longitudinal field");
    c->add_option("--alpha", alpha, "override the long-range exponent");
    c->add_option("--cache", cache, "spectrum cache directory (default: no caching)");
    c->add_option("--dense-cap", dense_cap, "largest dense block");
  }

  SpinChainSpec spec() const {
    auto s = preset_spec();
    if (J) s.J = *J;
    if (hx) s.hx = *hx;
    if (hz) s.hz = *hz;
    if (alpha) s.alpha = *alpha;
    s.validate();
    return s;
  }

  EigenSystem eigensystem(bool vectors) const {
    if (cache.empty()) return diagonalize_sectors(spec(), vectors, dense_cap);
    return io::cached_eigensystem(cache, spec(), vectors, dense_cap);
  }

 private:
  SpinChainSpec preset_spec() const { return ethdyn::preset(preset, L); }
};

void output(const io::CsvTable& t, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << t.to_string();
  else
    io::write_csv(path, t);
}

io::CsvTable series_csv(const TimeSeries& ts) {
  io::CsvTable t;
  t.add("t", ts.times);
  std::vector<double> re, im;
  for (auto v : ts.values) {
    re.push_back(v.real());
    im.push_back(v.imag());
  }
  t.add("re", re);
  t.add("im", im);
  if (!ts.std_error.empty()) t.add("stderr", ts.std_error);
  return t;
}

io::CsvTable profile_csv(const FrequencyProfile& p) {
  io::CsvTable t;
  std::vector<double> w, v, c;
  for (const auto& b : p.bins) {
    w.push_back(b.omega);
    v.push_back(b.value);
    c.push_back(static_cast<double>(b.count));
  }
  t.add("omega", w);
  t.add("f2", v);
  t.add("count", c);
  return t;
}

struct DqtArgs {
  double dt = 0.5, t_max = 50;
  int realizations = 0;
  std::uint64_t seed = 1;
  int workers = 1;
  double cheb_tol = 1e-12;

  void attach(CLI::App* c) {
    c->add_option("--dt", dt, "time step");
    c->add_option("--t-max", t_max, "final time");
    c->add_option("--realizations", realizations, "random states (0: size schedule)");
    c->add_option("--seed", seed, "first seed");
    c->add_option("--workers", workers, "threads");
    c->add_option("--cheb-tol", cheb_tol, "Chebyshev truncation tolerance");
  }

  TimeSeries run(const SpinChainSpec& spec, const std::string& obs, double beta) const {
    SpinChainKernel H(spec);
    const auto O = build_observable(ObservableDescriptor::parse(obs), spec);
    const auto n = realizations > 0 ? static_cast<std::size_t>(realizations)
                                    : static_cast<std::size_t>(default_realizations(spec.L));
    auto r = TypicalityRun::make(n, beta, dt, t_max, seed);
    r.cheb_tol = cheb_tol;
    r.workers = static_cast<std::size_t>(workers);
    return dqt_autocorrelator(H, spectral_bounds(H), O, obs, r, spec.L);
  }
};

int exit_code(const RunManifest& m) {
  if (m.count(TaskStatus::Failed)) return 2;
  if (m.count(TaskStatus::CapExceeded)) return 3;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  reexec_with_working_blas(argv);
  CLI::App app{"Eigenstate-thermalization dynamics of spin-1 chains"};
  app.require_subcommand(1);
  ModelArgs model;
  DqtArgs dqt;
  std::string observable = "Sx1", out, method = "ed";
  double beta = 0.0;
  int result = 0;
  auto common = [&](CLI::App* c, bool obs) {
    model.attach(c);
    c->add_option("-o,--out", out, "output CSV (default stdout)");
    if (obs) {
      c->add_option("-O,--observable", observable, "observable, e.g. Sx1Sx2 or i[H,Sx1]");
      c->add_option("-b,--beta", beta, "inverse temperature");
    }
  };

  auto* build = app.add_subcommand("build", "Hamiltonian size, sparsity and spectral bounds");
  common(build, false);
  build->callback([&] {
    const auto spec = model.spec();
    const auto H = build_hamiltonian(spec);
    const auto b = spectral_bounds(H);
    Json j{{"model", spec.describe()}, {"dim", H.dim()}, {"nnz", H.nnz()}, {"e_min", b.lo}, {"e_max", b.hi}};
    std::cout << j.dump(2) << "\n";
  });

  bool vectors = false;
  auto* spectrum = app.add_subcommand("spectrum", "sector-resolved energies");
  common(spectrum, false);
  spectrum->add_flag("--vectors", vectors, "also cache eigenvectors");
  spectrum->callback([&] {
    const auto sys = model.eigensystem(vectors);
    io::CsvTable t;
    std::vector<double> k, p, e;
    for (const auto& s : sys)
      for (double E : s.energies) {
        k.push_back(s.label->k);
        p.push_back(s.label->parity);
        e.push_back(E);
      }
    t.add("k", k);
    t.add("parity", p);
    t.add("energy", e);
    output(t, out);
  });

  auto* diag = app.add_subcommand("diag-eth", "eigenstate expectation values against energy density");
  common(diag, true);
  bool smoothed = false;
  diag->add_flag("--smoothed", smoothed, "emit the moving average instead of raw values");
  diag->callback([&] {
    const auto spec = model.spec();
    const auto prof = diagonal_profile(model.eigensystem(true), build_observable(ObservableDescriptor::parse(observable), spec), spec.L);
    io::CsvTable t;
    t.add("eps", smoothed ? prof.smoothed_eps : prof.eps);
    t.add("value", smoothed ? prof.smoothed : prof.values);
    output(t, out);
  });

  double bin_width = 0;
  auto* f2 = app.add_subcommand("f2", "off-diagonal spectral function |f(omega)|^2");
  common(f2, true);
  dqt.attach(f2);
  f2->add_option("--method", method, "ed or dqt")->check(CLI::IsMember({"ed", "dqt"}));
  f2->add_option("--bin-width", bin_width, "coarse-graining width (0: default)");
  f2->callback([&] {
    const auto spec = model.spec();
    if (method == "ed") {
      const auto sys = model.eigensystem(true);
      const double eps = bin_width > 0 ? bin_width : default_bin_width(sys, spec.L);
      output(profile_csv(f2_binned(sys, build_observable(ObservableDescriptor::parse(observable), spec), beta, eps)), out);
    } else {
      const auto ts = dqt.run(spec, observable, beta);
      output(profile_csv(fourier_f2(ts, beta, saturation_value(ts, std::min<std::size_t>(50, ts.size() / 4 + 1)).value)), out);
    }
  });

  auto* autocorr = app.add_subcommand("autocorr", "connected autocorrelator C(t)");
  common(autocorr, true);
  dqt.attach(autocorr);
  autocorr->add_option("--method", method, "ed or dqt")->check(CLI::IsMember({"ed", "dqt"}));
  autocorr->callback([&] {
    const auto spec = model.spec();
    if (method == "dqt") return output(series_csv(dqt.run(spec, observable, beta)), out);
    TimeSeries ts;
    const auto steps = static_cast<std::size_t>(std::llround(dqt.t_max / dqt.dt));
    for (std::size_t k = 0; k <= steps; ++k) ts.times.push_back(dqt.dt * static_cast<double>(k));
    ts.values = exact_autocorrelator(model.eigensystem(true), build_observable(ObservableDescriptor::parse(observable), spec),
                                     beta, ts.times);
    output(series_csv(ts), out);
  });

  int m_max = 6;
  std::string moment_method = "columns";
  std::size_t samples = 16;
  auto* overlap = app.add_subcommand("overlap", "overlap order from joint connected cumulants");
  common(overlap, true);
  overlap->add_option("--m-max", m_max, "highest order");
  overlap->add_option("--moments", moment_method, "dense, columns or stochastic")
      ->check(CLI::IsMember({"dense", "columns", "stochastic"}));
  overlap->add_option("--samples", samples, "random vectors for the stochastic trace");
  overlap->add_option("--seed", dqt.seed, "first seed");
  overlap->callback([&] {
    const auto spec = model.spec();
    const auto H = build_hamiltonian(spec);
    MomentOptions opt;
    opt.method = moment_method == "dense" ? MomentMethod::ExactDense
                 : moment_method == "columns" ? MomentMethod::ExactSparseColumns : MomentMethod::Stochastic;
    opt.samples = samples;
    opt.seed = dqt.seed;
    opt.dense_cap = model.dense_cap;
    const auto t = connected_cumulants(
        moment_table(H, build_observable(ObservableDescriptor::parse(observable), spec, &H), m_max, beta, opt));
    const auto ord = overlap_order(t);
    std::cerr << "overlap order: " << ord.to_string() << (ord.ambiguous ? " (ambiguous)" : "") << "\n";
    io::CsvTable tab;
    std::vector<double> m, raw, err, cc;
    for (int k = 0; k <= m_max; ++k) {
      m.push_back(k);
      raw.push_back(t.raw[k]);
      err.push_back(t.raw_stderr[k]);
      cc.push_back(t.cc[k]);
    }
    tab.add("m", m);
    tab.add("raw", raw);
    tab.add("raw_stderr", err);
    tab.add("cc", cc);
    tab.add("normalized", ord.normalized);
    output(tab, out);
  });

  std::string input, xcol = "t", ycol = "re";
  double lo = 3, hi = 25, filter = 0;
  bool with_log = false;
  auto* fit = app.add_subcommand("fit", "power-law or logarithmic fit of a CSV column");
  fit->add_option("-i,--input", input, "CSV file")->required();
  fit->add_option("-x", xcol, "abscissa column");
  fit->add_option("-y", ycol, "ordinate column");
  fit->add_option("--lo", lo, "window start");
  fit->add_option("--hi", hi, "window end");
  fit->add_option("--filter", filter, "moving-average scale before fitting (0: none)");
  fit->add_flag("--log", with_log, "fit a + b log x instead of a power");
  fit->callback([&] {
    const auto tab = io::read_csv(input);
    std::vector<double> x = tab.column(xcol), y = tab.column(ycol);
    if (filter > 0) {
      TimeSeries ts;
      ts.times = x;
      for (double v : y) ts.values.emplace_back(v);
      const auto f = oscillation_filter(ts, FilterMethod::MovingAverage, filter);
      x = f.times;
      y = f.real_values();
    }
    const auto p = powerlaw_fit(x, y, lo, hi, with_log);
    Json j{{"exponent", p.exponent}, {"exponent_stderr", p.exponent_stderr}, {"intercept", p.intercept},
           {"points", p.points}, {"r_squared", p.r_squared}, {"r_squared_linear", p.r_squared_linear},
           {"form", with_log ? "a + b log x" : "A x^p"}};
    if (!with_log) j["best_pure_power_r2"] = best_power_r2(x, y, lo, hi);
    std::cout << j.dump(2) << "\n";
  });

  HydroSetup hs;
  double t_lo = 1e3, t_hi = 1e5;
  std::size_t points = 41;
  std::vector<double> volumes;
  auto* hydro = app.add_subcommand("hydro", "continuum (fractional) diffusion oracle");
  hydro->add_option("-n", hs.n, "number of density insertions");
  hydro->add_option("-z", hs.z, "dynamical exponent");
  hydro->add_option("-D", hs.D, "diffusion constant");
  hydro->add_option("--mu", hs.mu, "momentum weight |k|^mu on the first insertion");
  hydro->add_option("--t-lo", t_lo, "fit window start");
  hydro->add_option("--t-hi", t_hi, "fit window end");
  hydro->add_option("--points", points, "time points");
  hydro->add_option("--volumes", volumes, "periodic lengths for the plateau fit");
  hydro->add_option("-o,--out", out, "output CSV (default stdout)");
  hydro->callback([&] {
    Json j{{"setup", hs.describe()}};
    if (volumes.empty()) {
      const auto curve = hydro_curve(hs, t_lo, t_hi, points);
      const auto f = decay_exponent(hs, t_lo, t_hi, points);
      j["exponent"] = f.exponent;
      io::CsvTable t;
      t.add("t", curve.t);
      t.add("c", curve.c);
      output(t, out);
    } else {
      const auto p = plateau_scaling(hs, volumes);
      j["plateau_exponent"] = p.fit ? Json(p.fit->exponent) : Json(nullptr);
      j["vanishes"] = p.vanishes;
      io::CsvTable t;
      t.add("L", p.sizes);
      t.add("plateau", p.plateaus);
      output(t, out);
    }
    std::cerr << j.dump() << "\n";
  });

  std::size_t poisson = 0;
  auto* gap = app.add_subcommand("gap-ratio", "mean adjacent-gap ratio in the k=0, p=+1 sector");
  common(gap, false);
  gap->add_option("--poisson", poisson, "instead, analyse this many uncorrelated levels");
  gap->add_option("--seed", dqt.seed, "seed for --poisson");
  gap->callback([&] {
    GapRatioResult g;
    if (poisson > 0) {
      std::mt19937_64 rng(dqt.seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> e(poisson);
      for (auto& v : e) v = u(rng) * static_cast<double>(poisson);
      g = gap_ratio(e, 1.0);
    } else {
      const auto spec = model.spec();
      auto bases = sector_decompose(spec);
      const auto it = std::find_if(bases.begin(), bases.end(), [](const SectorBasis& b) {
        return b.label.k == 0 && b.label.parity == 1;
      });
      if (it == bases.end()) throw Error("no k=0, p=1 sector");
      const auto H = build_hamiltonian(spec);
      check_cap(it->dim(), model.dense_cap);
      RealMatrix A = hamiltonian_block(H, *it);
      g = gap_ratio(symmetric_eigen(A, false));
    }
    std::cout << Json{{"mean_r", g.mean_r}, {"count", g.count}, {"degenerate", g.degenerate}}.dump(2) << "\n";
  });

  std::string config_path, manifest_path, out_dir;
  int workers = 0;
  auto* run_cmd = app.add_subcommand("run", "full pipeline from a config file or an earlier manifest");
  auto* src = run_cmd->add_option_group("source");
  src->add_option("-c,--config", config_path, "INI configuration");
  src->add_option("-m,--manifest", manifest_path, "re-run the configuration recorded in a manifest");
  src->require_option(1);
  run_cmd->add_option("--out-dir", out_dir, "override the output directory");
  run_cmd->add_option("--workers", workers, "override the worker count");
  run_cmd->callback([&] {
    auto cfg = config_path.empty() ? RunConfig::from_json(RunManifest::load(manifest_path).config)
                                   : RunConfig::from_ini(config_path);
    if (!out_dir.empty()) {
      if (cfg.cache_dir == (std::filesystem::path(cfg.output_dir) / "cache").string()) cfg.cache_dir.clear();
      cfg.output_dir = out_dir;
    }
    if (workers > 0) cfg.workers = workers;
    const auto m = ethdyn::run(cfg);
    for (const auto& t : m.tasks) {
      std::cerr << to_string(t.status) << "  " << t.name;
      if (t.result.contains("verdict")) std::cerr << "  nu=" << t.result["nu"] << " m=" << t.result["m"] << " " << t.result["verdict"].get<std::string>();
      if (!t.message.empty()) std::cerr << "  (" << t.message << ")";
      std::cerr << "\n";
    }
    std::cout << (std::filesystem::path(cfg.output_dir) / "manifest.json").string() << "\n";
    result = exit_code(m);
  });

  auto* plots = app.add_subcommand("plots", "write matplotlib scripts for a finished run");
  plots->add_option("-m,--manifest", manifest_path, "manifest.json")->required();
  plots->callback([&] {
    const auto m = RunManifest::load(manifest_path);
    for (const auto& p : emit_plots(m, std::filesystem::path(manifest_path).parent_path())) std::cout << p.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CapExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return result;
}
