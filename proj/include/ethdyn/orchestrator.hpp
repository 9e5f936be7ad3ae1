// orchestrator.hpp - run configuration, the task pipeline, manifests and plot scripts.
#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "analysis.hpp"
#include "core.hpp"
#include "io.hpp"
#include "lattice.hpp"
#include "moments.hpp"
#include "spectrum.hpp"
#include "typicality.hpp"

namespace ethdyn {

inline constexpr const char* kVersion = "1.0.0";

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class RunMethod { ED, DQT, Both };

inline std::string to_string(RunMethod m) {
  switch (m) {
    case RunMethod::ED: return "ed";
    case RunMethod::DQT: return "dqt";
    case RunMethod::Both: return "both";
  }
  return "?";
}

inline RunMethod parse_method(std::string_view s) {
  if (s == "ed") return RunMethod::ED;
  if (s == "dqt") return RunMethod::DQT;
  if (s == "both") return RunMethod::Both;
  throw InvalidArgument("unknown method '" + std::string(s) + "' (expected ed, dqt or both)");
}

namespace detail {

// Comma-separated items; commas inside brackets (as in i[H,Sx1]) do not split.
inline std::vector<std::string> split_top_level(const std::string& text) {
  std::vector<std::string> parts(1);
  int depth = 0;
  for (char c : text) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0)
      parts.emplace_back();
    else
      parts.back() += c;
  }
  return parts;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  for (std::string item : split_top_level(text)) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    item = item.substr(a, item.find_last_not_of(" \t") - a + 1);
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(item);
    } else {
      std::istringstream is(item);
      T v;
      if (!(is >> v) || !is.eof()) throw InvalidArgument("cannot parse list item '" + item + "'");
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace detail

struct RunConfig {
  std::string preset = "tilted-ising-paper";
  std::optional<double> J, hx, hz, alpha;  // overrides of the preset couplings
  std::vector<std::string> observables{"Sx1"};
  std::vector<double> betas{0.0};
  std::vector<int> sizes{6, 8};
  RunMethod method = RunMethod::ED;
  double dt = 0.5;
  double t_max = 50.0;
  double bin_width = 0.0;  // 0 picks the spectrum default
  double fit_lo = 3.0, fit_hi = 25.0;
  double filter_scale = 2.0;
  int realizations = 0;    // 0 follows the size schedule
  std::uint64_t seed_base = 1;
  double cheb_tol = 1e-12;
  std::size_t dense_cap = kDefaultDenseCap;
  int m_max = 6;
  int workers = 1;
  std::string output_dir = "ethdyn-out";
  std::string cache_dir;   // empty: <output_dir>/cache

  SpinChainSpec spec(int L) const {
    auto s = preset_spec(L);
    if (J) s.J = *J;
    if (hx) s.hx = *hx;
    if (hz) s.hz = *hz;
    if (alpha) s.alpha = *alpha;
    s.validate();
    return s;
  }

  fs::path cache_path() const { return cache_dir.empty() ? fs::path(output_dir) / "cache" : fs::path(cache_dir); }
  bool uses_ed() const { return method != RunMethod::DQT; }
  bool uses_dqt() const { return method != RunMethod::ED; }

  void validate() const {
    if (sizes.empty()) throw InvalidArgument("config: no system sizes");
    for (int L : sizes) spec(L);
    if (betas.empty()) throw InvalidArgument("config: no inverse temperatures");
    for (const auto& o : observables) ObservableDescriptor::parse(o);
    if (!(dt > 0) || !(t_max >= dt)) throw InvalidArgument("config: need 0 < dt <= t_max");
    if (!(fit_lo > 0 && fit_hi > fit_lo)) throw InvalidArgument("config: bad fit window");
    if (!(filter_scale > 0)) throw InvalidArgument("config: filter scale must be positive");
    if (bin_width < 0) throw InvalidArgument("config: bin width must be nonnegative");
    if (realizations < 0) throw InvalidArgument("config: realizations must be nonnegative");
    if (!(cheb_tol > 0 && cheb_tol <= 1e-6)) throw InvalidArgument("config: Chebyshev tolerance must lie in (0, 1e-6]");
    if (m_max < 1) throw InvalidArgument("config: m_max must be at least 1");
    if (workers < 1) throw InvalidArgument("config: workers must be at least 1");
    if (output_dir.empty()) throw InvalidArgument("config: empty output directory");
  }

  Json to_json() const {
    Json j;
    j["preset"] = preset;
    const auto s = spec(sizes.empty() ? 6 : sizes.front());
    j["J"] = s.J;
    j["hx"] = s.hx;
    j["hz"] = s.hz;
    j["alpha"] = s.alpha;
    j["observables"] = observables;
    j["betas"] = betas;
    j["sizes"] = sizes;
    j["method"] = to_string(method);
    j["dt"] = dt;
    j["t_max"] = t_max;
    j["bin_width"] = bin_width;
    j["fit_lo"] = fit_lo;
    j["fit_hi"] = fit_hi;
    j["filter_scale"] = filter_scale;
    j["realizations"] = realizations;
    j["seed_base"] = seed_base;
    j["cheb_tol"] = cheb_tol;
    j["dense_cap"] = dense_cap;
    j["m_max"] = m_max;
    j["workers"] = workers;
    j["output_dir"] = output_dir;
    j["cache_dir"] = cache_path().string();
    return j;
  }

  static RunConfig from_json(const Json& j) {
    RunConfig c;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("preset", c.preset);
    for (auto [key, field] : {std::pair{"J", &c.J}, {"hx", &c.hx}, {"hz", &c.hz}, {"alpha", &c.alpha}})
      if (j.contains(key)) *field = j.at(key).get<double>();
    get("observables", c.observables);
    get("betas", c.betas);
    get("sizes", c.sizes);
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    get("dt", c.dt);
    get("t_max", c.t_max);
    get("bin_width", c.bin_width);
    get("fit_lo", c.fit_lo);
    get("fit_hi", c.fit_hi);
    get("filter_scale", c.filter_scale);
    get("realizations", c.realizations);
    get("seed_base", c.seed_base);
    get("cheb_tol", c.cheb_tol);
    get("dense_cap", c.dense_cap);
    get("m_max", c.m_max);
    get("workers", c.workers);
    get("output_dir", c.output_dir);
    get("cache_dir", c.cache_dir);
    c.validate();
    return c;
  }

  /// Sections [model], [run], [time], [dqt], [output]; lists are comma separated.
  static RunConfig from_ini_text(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree t;
    std::istringstream in(text);
    try {
      pt::read_ini(in, t);
    } catch (const pt::ini_parser_error& e) {
      throw InvalidArgument(std::string("config: ") + e.what());
    }
    static const std::set<std::string> known{
        "model.preset", "model.J", "model.hx", "model.hz", "model.alpha", "run.sizes", "run.observables",
        "run.betas", "run.method", "run.m_max", "run.workers", "run.dense_cap", "time.dt", "time.t_max",
        "time.fit_lo", "time.fit_hi", "time.filter_scale", "time.bin_width", "dqt.realizations",
        "dqt.seed_base", "dqt.cheb_tol", "output.dir", "output.cache"};
    for (const auto& [section, body] : t)
      for (const auto& [key, _] : body)
        if (!known.contains(section + "." + key))
          throw InvalidArgument("config: unknown key '" + section + "." + key + "'");
    RunConfig c;
    try {
      c.preset = t.get("model.preset", c.preset);
      for (auto [key, field] : {std::pair{"model.J", &c.J}, {"model.hx", &c.hx}, {"model.hz", &c.hz},
                                {"model.alpha", &c.alpha}})
        if (auto v = t.get_optional<double>(key)) *field = *v;
      if (auto v = t.get_optional<std::string>("run.sizes")) c.sizes = detail::parse_list<int>(*v);
      if (auto v = t.get_optional<std::string>("run.observables")) c.observables = detail::parse_list<std::string>(*v);
      if (auto v = t.get_optional<std::string>("run.betas")) c.betas = detail::parse_list<double>(*v);
      if (auto v = t.get_optional<std::string>("run.method")) c.method = parse_method(*v);
      c.m_max = t.get("run.m_max", c.m_max);
      c.workers = t.get("run.workers", c.workers);
      c.dense_cap = t.get("run.dense_cap", c.dense_cap);
      c.dt = t.get("time.dt", c.dt);
      c.t_max = t.get("time.t_max", c.t_max);
      c.fit_lo = t.get("time.fit_lo", c.fit_lo);
      c.fit_hi = t.get("time.fit_hi", c.fit_hi);
      c.filter_scale = t.get("time.filter_scale", c.filter_scale);
      c.bin_width = t.get("time.bin_width", c.bin_width);
      c.realizations = t.get("dqt.realizations", c.realizations);
      c.seed_base = t.get("dqt.seed_base", c.seed_base);
      c.cheb_tol = t.get("dqt.cheb_tol", c.cheb_tol);
      c.output_dir = t.get("output.dir", c.output_dir);
      c.cache_dir = t.get("output.cache", c.cache_dir);
    } catch (const boost::property_tree::ptree_error& e) {
      throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static RunConfig from_ini(const fs::path& p) { return from_ini_text(io::read_file(p)); }

 private:
  SpinChainSpec preset_spec(int L) const { return ethdyn::preset(preset, L); }
};

// --- manifest ------------------------------------------------------------------------------

enum class TaskStatus { Ok, Failed, CapExceeded };

inline std::string to_string(TaskStatus s) {
  return s == TaskStatus::Ok ? "ok" : s == TaskStatus::Failed ? "failed" : "cap_exceeded";
}

struct OutputFile {
  std::string path;  // relative to the output directory
  std::string sha256;
};

struct TaskRecord {
  std::string name;
  std::string kind;
  int L = 0;
  std::string observable;
  double beta = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<OutputFile> outputs;
  double wall_seconds = 0.0;
  TaskStatus status = TaskStatus::Ok;
  std::string message;
  Json result = Json::object();
};

struct RunManifest {
  Json config;
  std::string version = kVersion;
  std::vector<TaskRecord> tasks;

  std::map<std::string, std::string> checksums() const {
    std::map<std::string, std::string> m;
    for (const auto& t : tasks)
      for (const auto& o : t.outputs) m[o.path] = o.sha256;
    return m;
  }
  std::size_t count(TaskStatus s) const {
    return static_cast<std::size_t>(std::count_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.status == s; }));
  }
  const TaskRecord* find(std::string_view name) const {
    for (const auto& t : tasks)
      if (t.name == name) return &t;
    return nullptr;
  }

  Json to_json() const {
    Json j;
    j["version"] = version;
    j["config"] = config;
    j["tasks"] = Json::array();
    for (const auto& t : tasks) {
      Json r;
      r["name"] = t.name;
      r["kind"] = t.kind;
      r["L"] = t.L;
      r["observable"] = t.observable;
      r["beta"] = t.beta;
      r["seeds"] = t.seeds;
      r["outputs"] = Json::array();
      for (const auto& o : t.outputs) r["outputs"].push_back({{"path", o.path}, {"sha256", o.sha256}});
      r["wall_seconds"] = t.wall_seconds;
      r["status"] = to_string(t.status);
      r["message"] = t.message;
      r["result"] = t.result;
      j["tasks"].push_back(std::move(r));
    }
    return j;
  }

  static RunManifest from_json(const Json& j) {
    RunManifest m;
    m.version = j.at("version").get<std::string>();
    m.config = j.at("config");
    for (const auto& r : j.at("tasks")) {
      TaskRecord t;
      t.name = r.at("name");
      t.kind = r.at("kind");
      t.L = r.at("L");
      t.observable = r.at("observable");
      t.beta = r.at("beta");
      t.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
      for (const auto& o : r.at("outputs")) t.outputs.push_back({o.at("path"), o.at("sha256")});
      t.wall_seconds = r.at("wall_seconds");
      const auto st = r.at("status").get<std::string>();
      t.status = st == "ok" ? TaskStatus::Ok : st == "failed" ? TaskStatus::Failed : TaskStatus::CapExceeded;
      t.message = r.at("message");
      t.result = r.at("result");
      m.tasks.push_back(std::move(t));
    }
    return m;
  }

  static RunManifest load(const fs::path& p) { return from_json(Json::parse(io::read_file(p))); }
};

/// Stable per-task seed: base plus the leading 8 bytes of SHA-256(task name).
inline std::uint64_t task_seed(std::uint64_t base, std::string_view name) {
  const auto h = io::sha256(name);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | h[i];
  return base + (v >> 16);
}

inline std::string verdict_text(const InequalityVerdict& v) {
  if (!v.satisfied) return "violated";
  return v.saturated ? "saturated" : "satisfied";
}

// --- task bodies --------------------------------------------------------------------------

namespace detail {

inline std::string beta_tag(double beta) {
  std::string s = io::format_double(beta);
  std::replace(s.begin(), s.end(), '-', 'm');
  return s;
}

inline std::vector<double> time_grid(double dt, double t_max) {
  const auto steps = static_cast<std::size_t>(std::llround(t_max / dt));
  std::vector<double> t(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) t[k] = dt * static_cast<double>(k);
  return t;
}

inline io::CsvTable series_table(const TimeSeries& ts) {
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

inline io::CsvTable frequency_table(const FrequencyProfile& p) {
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

}  // namespace detail

/// Per-size shared inputs, built once and read concurrently by analysis tasks.
struct SizeContext {
  int L = 0;
  SpinChainSpec spec;
  SparseOperator H;
  std::optional<EigenSystem> sys;
  std::optional<SpectralInterval> bounds;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)), out_(cfg_.output_dir) { cfg_.validate(); }

  const RunConfig& config() const { return cfg_; }

  RunManifest run() {
    fs::create_directories(out_);
    RunManifest m;
    m.config = cfg_.to_json();
    std::vector<std::vector<PlateauPoint>> plateaus(cfg_.observables.size() * cfg_.betas.size());
    for (int L : cfg_.sizes) {
      SizeContext ctx;
      ctx.L = L;
      ctx.spec = cfg_.spec(L);
      ctx.H = build_hamiltonian(ctx.spec);
      if (cfg_.uses_ed()) {
        m.tasks.push_back(timed("spectrum", L, "", 0.0, [&](TaskRecord& r) { spectrum_task(ctx, r); }));
        if (ctx.sys) m.tasks.push_back(timed("gap-ratio", L, "", 0.0, [&](TaskRecord& r) { gap_ratio_task(ctx, r); }));
      }
      if (cfg_.uses_dqt() && !cfg_.observables.empty()) ctx.bounds = spectral_bounds(ctx.H);

      std::vector<std::function<TaskRecord()>> jobs;
      for (std::size_t oi = 0; oi < cfg_.observables.size(); ++oi) {
        const auto& name = cfg_.observables[oi];
        for (std::size_t bi = 0; bi < cfg_.betas.size(); ++bi) {
          const double beta = cfg_.betas[bi];
          if (ctx.sys) {
            if (bi == 0)
              jobs.push_back([&, name] { return timed("diag-eth", L, name, 0.0, [&](TaskRecord& r) { diag_task(ctx, r); }); });
            jobs.push_back([&, name, beta] { return timed("f2", L, name, beta, [&](TaskRecord& r) { f2_task(ctx, r); }); });
            jobs.push_back([&, name, beta] {
              return timed("autocorr-ed", L, name, beta, [&](TaskRecord& r) { autocorr_ed_task(ctx, r); });
            });
          }
          if (cfg_.uses_dqt())
            jobs.push_back([&, name, beta] {
              return timed("autocorr-dqt", L, name, beta, [&](TaskRecord& r) { autocorr_dqt_task(ctx, r); });
            });
          jobs.push_back([&, name, beta] { return timed("overlap", L, name, beta, [&](TaskRecord& r) { overlap_task(ctx, r); }); });
        }
      }
      auto records = execute(jobs);
      for (auto& r : records) {
        if (r.kind == "autocorr-ed" && r.status == TaskStatus::Ok && r.result.contains("plateau")) {
          const auto oi = index_of(cfg_.observables, r.observable);
          const auto bi = index_of(cfg_.betas, r.beta);
          plateaus[oi * cfg_.betas.size() + bi].push_back({L, r.result["plateau"].get<double>(), 0.0});
        }
        m.tasks.push_back(std::move(r));
      }
    }
    for (std::size_t oi = 0; oi < cfg_.observables.size(); ++oi)
      for (std::size_t bi = 0; bi < cfg_.betas.size(); ++bi) {
        const auto& pts = plateaus[oi * cfg_.betas.size() + bi];
        if (pts.size() >= 3)
          m.tasks.push_back(timed("plateau", 0, cfg_.observables[oi], cfg_.betas[bi],
                                  [&](TaskRecord& r) { plateau_task(pts, r); }));
      }
    add_verdicts(m);
    io::write_file_atomic(out_ / "manifest.json", m.to_json().dump(2) + "\n");
    return m;
  }

 private:
  template <typename Body>
  TaskRecord timed(std::string kind, int L, std::string obs, double beta, Body&& body) {
    TaskRecord r;
    r.kind = std::move(kind);
    r.L = L;
    r.observable = std::move(obs);
    r.beta = beta;
    r.name = r.kind + (L ? "-L" + std::to_string(L) : "") + (r.observable.empty() ? "" : "-" + r.observable) +
             (r.kind == "spectrum" || r.kind == "gap-ratio" || r.kind == "diag-eth" ? "" : "-b" + detail::beta_tag(beta));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body(r);
    } catch (const CapExceeded& e) {
      r.status = TaskStatus::CapExceeded;
      r.message = e.what();
    } catch (const std::exception& e) {
      r.status = TaskStatus::Failed;
      r.message = e.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  std::vector<TaskRecord> execute(const std::vector<std::function<TaskRecord()>>& jobs) const {
    std::vector<TaskRecord> out(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) out[i] = jobs[i]();
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg_.workers), jobs.size());
    if (n <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
    }
    return out;
  }

  template <typename T>
  static std::size_t index_of(const std::vector<T>& v, const T& x) {
    return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
  }

  void emit(TaskRecord& r, const std::string& rel, const io::CsvTable& t) const {
    io::write_csv(out_ / rel, t);
    r.outputs.push_back({rel, io::sha256_file(out_ / rel)});
  }

  SparseOperator observable(const SizeContext& ctx, const std::string& name) const {
    return build_observable(ObservableDescriptor::parse(name), ctx.spec, &ctx.H);
  }

  std::string stem(const TaskRecord& r) const { return r.name; }

  void spectrum_task(SizeContext& ctx, TaskRecord& r) const {
    const bool vectors = !cfg_.observables.empty();
    ctx.sys = io::cached_eigensystem(cfg_.cache_path(), ctx.spec, vectors, cfg_.dense_cap);
    io::CsvTable t;
    std::vector<double> k, p, e;
    for (const auto& s : *ctx.sys)
      for (double E : s.energies) {
        k.push_back(s.label->k);
        p.push_back(s.label->parity);
        e.push_back(E);
      }
    t.add("k", k);
    t.add("parity", p);
    t.add("energy", e);
    emit(r, stem(r) + ".csv", t);
    r.result["levels"] = e.size();
    r.result["sectors"] = ctx.sys->size();
  }

  void gap_ratio_task(const SizeContext& ctx, TaskRecord& r) const {
    for (const auto& s : *ctx.sys)
      if (s.label->k == 0 && s.label->parity == 1 && s.label->flip >= 0) {
        const auto g = gap_ratio(s.energies);
        r.result["sector"] = s.label->to_string();
        r.result["mean_r"] = g.mean_r;
        r.result["count"] = g.count;
        io::CsvTable t;
        t.add("L", {static_cast<double>(ctx.L)});
        t.add("mean_r", {g.mean_r});
        t.add("count", {static_cast<double>(g.count)});
        emit(r, stem(r) + ".csv", t);
        return;
      }
    throw Error("gap-ratio: no k=0, p=1 sector");
  }

  void diag_task(const SizeContext& ctx, TaskRecord& r) const {
    const auto prof = diagonal_profile(*ctx.sys, observable(ctx, r.observable), ctx.L);
    io::CsvTable raw, smooth;
    raw.add("eps", prof.eps);
    raw.add("value", prof.values);
    smooth.add("eps", prof.smoothed_eps);
    smooth.add("value", prof.smoothed);
    emit(r, stem(r) + ".csv", raw);
    emit(r, stem(r) + "-smoothed.csv", smooth);
  }

  void f2_task(const SizeContext& ctx, TaskRecord& r) const {
    const double eps = cfg_.bin_width > 0 ? cfg_.bin_width : default_bin_width(*ctx.sys, ctx.L);
    const auto prof = f2_binned(*ctx.sys, observable(ctx, r.observable), r.beta, eps);
    r.result["bin_width"] = eps;
    emit(r, stem(r) + ".csv", detail::frequency_table(prof));
  }

  void fit_into(const TimeSeries& ts, TaskRecord& r) const {
    try {
      const auto f = decay_fit(ts, cfg_.fit_lo, cfg_.fit_hi, cfg_.filter_scale);
      r.result["nu"] = -f.exponent;
      r.result["nu_stderr"] = f.exponent_stderr;
      r.result["fit_r2"] = f.r_squared;
    } catch (const InvalidArgument& e) {
      r.result["nu"] = nullptr;
      r.result["fit_note"] = e.what();
    }
  }

  void autocorr_ed_task(const SizeContext& ctx, TaskRecord& r) const {
    const auto O = observable(ctx, r.observable);
    TimeSeries ts;
    ts.times = detail::time_grid(cfg_.dt, cfg_.t_max);
    ts.values = exact_autocorrelator(*ctx.sys, O, r.beta, ts.times);
    ts.beta = r.beta;
    ts.observable = r.observable;
    ts.L = ctx.L;
    emit(r, stem(r) + ".csv", detail::series_table(ts));
    r.result["plateau"] = diagonal_ensemble_plateau(*ctx.sys, O, r.beta);
    fit_into(ts, r);
  }

  void autocorr_dqt_task(const SizeContext& ctx, TaskRecord& r) const {
    const auto O = observable(ctx, r.observable);
    const std::size_t n = cfg_.realizations > 0 ? static_cast<std::size_t>(cfg_.realizations)
                                                : static_cast<std::size_t>(default_realizations(ctx.L));
    auto run = TypicalityRun::make(n, r.beta, cfg_.dt, cfg_.t_max, task_seed(cfg_.seed_base, r.name));
    run.cheb_tol = cfg_.cheb_tol;
    r.seeds = run.seeds;
    const auto ts = dqt_autocorrelator(ctx.H, *ctx.bounds, O, r.observable, run, ctx.L);
    emit(r, stem(r) + ".csv", detail::series_table(ts));
    const auto sat = saturation_value(ts, std::min<std::size_t>(50, ts.size() / 4 + 1));
    const auto f2 = fourier_f2(ts, r.beta, sat.value);
    emit(r, stem(r) + "-f2.csv", detail::frequency_table(f2));
    fit_into(ts, r);
  }

  void overlap_task(const SizeContext& ctx, TaskRecord& r) const {
    const auto O = observable(ctx, r.observable);
    MomentOptions opt;
    opt.dense_cap = cfg_.dense_cap;
    opt.cheb_tol = cfg_.cheb_tol;
    // the cached sector spectrum when there is one, exact columns when small, else random vectors
    opt.method = MomentMethod::ExactSparseColumns;
    if (ctx.H.dim() > cfg_.dense_cap) {
      opt.method = MomentMethod::Stochastic;
      opt.seed = task_seed(cfg_.seed_base, r.name);
    }
    const bool from_spectrum = ctx.sys && (*ctx.sys)[0].has_vectors();
    if (!from_spectrum && opt.method == MomentMethod::Stochastic) r.seeds = {opt.seed};
    const auto table = connected_cumulants(from_spectrum ? moment_table(*ctx.sys, O, cfg_.m_max, r.beta)
                                                         : moment_table(ctx.H, O, cfg_.m_max, r.beta, opt));
    const auto ord = overlap_order(table);
    r.result["m"] = ord.infinite() ? Json(nullptr) : Json(*ord.m);
    r.result["order"] = ord.to_string();
    r.result["ambiguous"] = ord.ambiguous;
    r.result["method"] = to_string(table.method);
    io::CsvTable t;
    std::vector<double> m, raw, cc;
    for (int k = 0; k <= table.m_max; ++k) {
      m.push_back(k);
      raw.push_back(table.raw[k]);
      cc.push_back(table.cc[k]);
    }
    t.add("m", m);
    t.add("raw", raw);
    t.add("cc", cc);
    t.add("normalized", ord.normalized);
    emit(r, stem(r) + ".csv", t);
  }

  void plateau_task(const std::vector<PlateauPoint>& pts, TaskRecord& r) const {
    const auto fs = finite_size_fit(pts);
    io::CsvTable t;
    std::vector<double> L, p;
    for (const auto& q : pts) {
      L.push_back(q.L);
      p.push_back(q.plateau);
    }
    t.add("L", L);
    t.add("plateau", p);
    emit(r, stem(r) + ".csv", t);
    r.result["m_hat"] = fs.m_hat;
    r.result["zero_branch"] = fs.below_noise_floor;
    r.result["note"] = fs.note;
  }

  // Joins decay fits with overlap orders at the same size and temperature.
  void add_verdicts(RunManifest& m) const {
    for (auto& t : m.tasks) {
      if ((t.kind != "autocorr-ed" && t.kind != "autocorr-dqt") || t.status != TaskStatus::Ok) continue;
      if (!t.result.contains("nu") || t.result["nu"].is_null()) continue;
      const TaskRecord* ov = nullptr;
      for (const auto& o : m.tasks)
        if (o.kind == "overlap" && o.L == t.L && o.observable == t.observable && o.beta == t.beta &&
            o.status == TaskStatus::Ok)
          ov = &o;
      if (!ov) continue;
      const double mm = ov->result["m"].is_null() ? std::numeric_limits<double>::infinity()
                                                  : ov->result["m"].get<double>();
      const auto v = roi_check(t.result["nu"].get<double>(), t.result["nu_stderr"].get<double>(), mm);
      t.result["m"] = ov->result["m"];
      t.result["bound"] = std::isinf(v.bound) ? Json(nullptr) : Json(v.bound);
      t.result["verdict"] = verdict_text(v);
    }
  }

  RunConfig cfg_;
  fs::path out_;
};

inline RunManifest run(const RunConfig& cfg) { return Pipeline(cfg).run(); }

// --- plot scripts --------------------------------------------------------------------------

namespace detail {

inline std::string py_list(const std::vector<std::string>& items) {
  std::string s = "[";
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + ("'" + items[i] + "'");
  return s + "]";
}

inline const char* kPlotPrelude =
    "import csv, os\n"
    "import matplotlib\n"
    "matplotlib.use('Agg')\n"
    "import matplotlib.pyplot as plt\n"
    "HERE = os.path.dirname(os.path.abspath(__file__))\n"
    "def load(rel):\n"
    "    with open(os.path.join(HERE, rel)) as f:\n"
    "        rows = list(csv.DictReader(f))\n"
    "    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else {}\n";

}  // namespace detail

/// Writes one self-contained matplotlib script per figure family into the
/// output directory and returns their paths. Families without CSVs are skipped.
inline std::vector<fs::path> emit_plots(const RunManifest& m, const fs::path& out_dir) {
  struct Curve {
    std::string csv, label;
    std::optional<int> m;
  };
  std::map<std::string, std::vector<Curve>> fam;
  auto present = [&](const std::string& rel) {
    if (fs::exists(out_dir / rel)) return true;
    warn("plots: missing " + rel + ", skipped");
    return false;
  };
  for (const auto& t : m.tasks) {
    if (t.status != TaskStatus::Ok || t.outputs.empty()) continue;
    const std::string label = t.observable + " L=" + std::to_string(t.L) + " beta=" + io::format_double(t.beta);
    std::optional<int> order;
    if (t.result.contains("m") && t.result["m"].is_number_integer()) order = t.result["m"].get<int>();
    const auto& csv = t.outputs.front().path;
    if (t.kind == "autocorr-ed" || t.kind == "autocorr-dqt") {
      if (present(csv)) fam["autocorr"].push_back({csv, label + " " + t.kind.substr(9), order});
      if (t.kind == "autocorr-dqt" && t.outputs.size() > 1 && present(t.outputs[1].path))
        fam["f2"].push_back({t.outputs[1].path, label + " dqt", order});
    } else if (t.kind == "f2") {
      std::optional<int> o;
      if (const auto* ov = m.find("overlap-L" + std::to_string(t.L) + "-" + t.observable + "-b" + detail::beta_tag(t.beta)))
        if (ov->result["m"].is_number_integer()) o = ov->result["m"].get<int>();
      if (present(csv)) fam["f2"].push_back({csv, label + " ed", o});
    } else if (t.kind == "plateau") {
      if (present(csv)) fam["plateau"].push_back({csv, t.observable + " beta=" + io::format_double(t.beta), std::nullopt});
    } else if (t.kind == "gap-ratio") {
      if (present(csv)) fam["gap-ratio"].push_back({csv, "L=" + std::to_string(t.L), std::nullopt});
    }
  }

  std::vector<fs::path> scripts;
  for (const auto& [name, curves] : fam) {
    std::ostringstream py;
    py << detail::kPlotPrelude;
    std::vector<std::string> files, labels, orders;
    for (const auto& c : curves) {
      files.push_back(c.csv);
      labels.push_back(c.label);
      orders.push_back(c.m ? std::to_string(*c.m) : "");
    }
    py << "FILES = " << detail::py_list(files) << "\nLABELS = " << detail::py_list(labels)
       << "\nORDERS = " << detail::py_list(orders) << "\n";
    if (name == "autocorr") {
      py << "fig, ax = plt.subplots()\n"
            "for f, lab, m in zip(FILES, LABELS, ORDERS):\n"
            "    d = load(f)\n"
            "    t = [x for x in d['t'] if x > 0]\n"
            "    c = [abs(v) for x, v in zip(d['t'], d['re']) if x > 0]\n"
            "    line, = ax.loglog(t, c, label=lab)\n"
            "    if m:\n"
            "        p = int(m) / 2\n"
            "        ax.loglog(t, [c[0] * (x / t[0]) ** -p for x in t], '--', color=line.get_color(),\n"
            "                  label='t^-%g' % p)\n"
            "ax.set_xlabel('t'); ax.set_ylabel('|C(t)|'); ax.legend(fontsize=6)\n";
    } else if (name == "f2") {
      py << "GUIDES = {'1': (-0.5, '1/sqrt(w)'), '2': (None, 'log w'), '3': (0.5, 'sqrt(w)'), '4': (1.0, 'w')}\n"
            "import math\n"
            "fig, ax = plt.subplots()\n"
            "for f, lab, m in zip(FILES, LABELS, ORDERS):\n"
            "    d = load(f)\n"
            "    w = [x for x in d['omega'] if x > 0]\n"
            "    v = [y for x, y in zip(d['omega'], d['f2']) if x > 0]\n"
            "    line, = ax.loglog(w, v, label=lab)\n"
            "    if m in GUIDES and w:\n"
            "        p, name = GUIDES[m]\n"
            "        g = [v[0] * (1 + math.log(x / w[0])) if p is None else v[0] * (x / w[0]) ** p for x in w]\n"
            "        ax.loglog(w, [abs(y) for y in g], '--', color=line.get_color(), label=name)\n"
            "ax.set_xlabel('omega'); ax.set_ylabel('|f(omega)|^2'); ax.legend(fontsize=6)\n";
    } else if (name == "plateau") {
      py << "fig, ax = plt.subplots()\n"
            "for f, lab, _ in zip(FILES, LABELS, ORDERS):\n"
            "    d = load(f)\n"
            "    ax.loglog(d['L'], [abs(p) for p in d['plateau']], 'o-', label=lab)\n"
            "ax.set_xlabel('L'); ax.set_ylabel('plateau'); ax.legend(fontsize=6)\n";
    } else {
      py << "fig, ax = plt.subplots()\n"
            "L = [load(f)['L'][0] for f in FILES]\n"
            "r = [load(f)['mean_r'][0] for f in FILES]\n"
            "ax.plot(L, r, 'o-')\n"
            "ax.axhline(0.5307, ls='--', label='GOE'); ax.axhline(0.3863, ls=':', label='Poisson')\n"
            "ax.set_xlabel('L'); ax.set_ylabel('<r>'); ax.legend()\n";
    }
    py << "fig.savefig(os.path.join(HERE, '" << name << ".png'), dpi=150)\n";
    const auto path = out_dir / ("plot_" + name + ".py");
    io::write_file_atomic(path, py.str());
    scripts.push_back(path);
  }
  return scripts;
}

}  // namespace ethdyn
