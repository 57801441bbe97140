#pragma once

// Experiment runner: configuration, the CIR filter comparison, the Wishart
// mean-square-error study and the plot-data bundle.

#include <algorithm>
#include <cstdio>
#include <limits>
#include <tuple>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/version.hpp>
#include <json.hpp>

#include "aff/baselines.hpp"
#include "aff/cir.hpp"
#include "aff/errors.hpp"
#include "aff/filter.hpp"
#include "aff/io.hpp"
#include "aff/observation.hpp"
#include "aff/parallel.hpp"
#include "aff/rng.hpp"
#include "aff/version.hpp"
#include "aff/wishart.hpp"

namespace aff {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string name = "custom";
  std::string model = "cir";  // cir | wishart

  // CIR signal and prior max(0, Z), Z ~ N(x0, s0^2).
  double b = 1e-6;
  double beta = -0.2;
  double sigma = 0.04;
  double x0 = 0.005;
  double s0 = 2e-5;

  // Wishart signal: d x d, n degrees of freedom, Sigma = wishart_sigma * I,
  // started at wishart_x0 (the diagonal, or all d*d entries column-major).
  int wishart_d = 3;
  int wishart_n = 4;
  double wishart_sigma = 0.04;
  std::vector<double> wishart_x0 = {0.5625, 0.25, 0.0625};

  // Observation: Gamma for CIR (with C = c_obs), Gamma0 * I for Wishart.
  double gamma = 0.005;
  double c_obs = 1.0;

  double T = 1.0;
  int N = 1000;
  std::vector<std::string> methods = {"AFF", "PF", "EKF", "GAMMA"};
  std::size_t np = 1000000;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string interpolation = "auto";  // auto | linear | cubic-spline
  double rtol = 1e-9;
  double atol = 1e-12;
  std::string out = "out";

  static ExperimentConfig case1() {
    ExperimentConfig c;
    c.name = "case1";
    return c;
  }

  static ExperimentConfig case2() {
    ExperimentConfig c;
    c.name = "case2";
    c.b = 2e-5;
    c.gamma = 1e-4;
    c.x0 = 1e-4;
    return c;
  }

  static ExperimentConfig wishart_mse() {
    ExperimentConfig c;
    c.name = "wishart-mse";
    c.model = "wishart";
    c.gamma = 0.06;
    c.T = 1.0;
    c.N = 100;
    c.methods = {"AFF", "PF"};
    c.np = 10000;
    c.replications = 100;
    return c;
  }

  static ExperimentConfig preset(const std::string& name) {
    if (name == "case1") return case1();
    if (name == "case2") return case2();
    if (name == "wishart-mse") return wishart_mse();
    if (name == "custom") return {};
    throw ConfigError("unknown preset '" + name + "'");
  }

  bool is_cir() const { return model == "cir"; }

  Interpolation scheme() const {
    if (interpolation == "auto") return is_cir() ? Interpolation::linear : Interpolation::cubic_spline;
    try {
      return parse_interpolation(interpolation);
    } catch (const InvalidParams& e) {
      throw ConfigError(e.what());
    }
  }

  std::vector<Method> method_list() const {
    std::vector<Method> out;
    for (const auto& m : methods) {
      if (m.empty()) continue;
      Method k;
      try {
        k = parse_method(m);
      } catch (const InvalidParams& e) {
        throw ConfigError(e.what());
      }
      if (k == Method::UNCOND) continue;  // always reported
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    return out;
  }

  CirModel cir() const { return {b, beta, sigma}; }
  CirInitialLaw cir_law() const { return {x0, s0}; }

  WishartModel wishart() const {
    return {wishart_d, wishart_n, wishart_sigma * Eigen::MatrixXd::Identity(wishart_d, wishart_d)};
  }

  Eigen::MatrixXd wishart_x0_matrix() const {
    const auto d = static_cast<std::size_t>(wishart_d);
    if (wishart_x0.size() == d) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(wishart_d, wishart_d);
      for (int i = 0; i < wishart_d; ++i) m(i, i) = wishart_x0[static_cast<std::size_t>(i)];
      return m;
    }
    if (wishart_x0.size() == d * d) return Eigen::Map<const Eigen::MatrixXd>(wishart_x0.data(), wishart_d, wishart_d);
    throw ConfigError("wishart_x0 needs d or d*d entries");
  }

  ObservationModel observation() const {
    if (is_cir()) return ObservationModel::scalar(c_obs, gamma);
    return ObservationModel::vech_identity(vech_size(wishart_d), gamma);
  }

  std::vector<double> grid() const {
    std::vector<double> g(static_cast<std::size_t>(N) + 1);
    for (int i = 0; i <= N; ++i) g[static_cast<std::size_t>(i)] = T * i / N;
    return g;
  }

  OdeOptions ode_options() const {
    OdeOptions o;
    o.rtol = rtol;
    o.atol = atol;
    return o;
  }

  /// Throws ConfigError describing the first problem found.
  void validate() const {
    if (model != "cir" && model != "wishart") throw ConfigError("model must be 'cir' or 'wishart'");
    if (N < 1) throw ConfigError("N must be >= 1");
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T must be > 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be > 0");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("tolerances must be > 0");
    const auto ms = method_list();
    if (std::find(ms.begin(), ms.end(), Method::PF) != ms.end() && np < 2) throw ConfigError("np must be >= 2");
    (void)scheme();
    try {
      if (is_cir()) {
        cir().validate();
        validate_params(cir().params());
        if (!(s0 >= 0.0)) throw ConfigError("s0 must be >= 0");
        if (!std::isfinite(x0)) throw ConfigError("x0 must be finite");
        if (c_obs == 0.0 || !std::isfinite(c_obs)) throw ConfigError("c_obs must be finite and nonzero");
      } else {
        for (Method m : ms)
          if (m != Method::AFF && m != Method::PF) throw ConfigError("wishart supports the methods AFF and PF only");
        if (wishart_d < 1) throw ConfigError("wishart_d must be >= 1");
        wishart().validate();
        const Eigen::MatrixXd x = wishart_x0_matrix();
        if (!detail::is_symmetric(x) || !detail::is_psd(x)) throw ConfigError("wishart_x0 must be symmetric PSD");
        (void)wishart_factor(x, wishart_n);
      }
      observation().validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("invalid parameters: ") + e.what());
    }
  }

  /// Every field that influences results; `out` and `threads` do not.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["model"] = model;
    if (is_cir()) {
      j["b"] = b;
      j["beta"] = beta;
      j["sigma"] = sigma;
      j["x0"] = x0;
      j["s0"] = s0;
      j["c_obs"] = c_obs;
    } else {
      j["wishart_d"] = wishart_d;
      j["wishart_n"] = wishart_n;
      j["wishart_sigma"] = wishart_sigma;
      j["wishart_x0"] = wishart_x0;
    }
    j["gamma"] = gamma;
    j["T"] = T;
    j["N"] = N;
    j["methods"] = methods;
    j["np"] = np;
    j["replications"] = replications;
    j["seed"] = seed;
    j["interpolation"] = to_string(scheme());
    j["rtol"] = rtol;
    j["atol"] = atol;
    return j;
  }

  /// FNV-1a of the canonical JSON form.
  std::uint64_t hash() const;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json().dump()); }

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---------------------------------------------------------------------------
// Running the methods

struct MethodRun {
  Method method = Method::AFF;
  std::vector<PosteriorSummary> summaries;  // t_1 .. t_N; unavailable rows on failure
  std::optional<std::string> error;
  double seconds = 0.0;
};

namespace detail {

inline std::vector<PosteriorSummary> unavailable_rows(const std::vector<double>& grid, Method m) {
  std::vector<PosteriorSummary> rows(grid.size() - 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].t = grid[i + 1];
    rows[i].method = m;
    rows[i].available = false;
  }
  return rows;
}

template <class Body>
MethodRun timed_run(Method m, const std::vector<double>& grid, Body&& body) {
  MethodRun r;
  r.method = m;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.error = e.what();
    r.summaries = unavailable_rows(grid, m);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline void take_sequence(MethodRun& r, FilterSequence seq) {
  if (seq.blowup_time) r.error = "Riccati blow-up at t = " + fmt_double(*seq.blowup_time);
  r.summaries = std::move(seq.summaries);
}

}  // namespace detail

/// Runs the requested CIR filters on one record. A failing method is
/// recorded in its MethodRun and does not stop the others.
inline std::vector<MethodRun> run_cir_methods(const ExperimentConfig& cfg, const ObservationRecord& record,
                                              std::uint64_t pf_seed, unsigned threads) {
  const CirModel cir = cfg.cir();
  const auto law = cfg.cir_law();
  const auto init = initial_moments(law);
  std::vector<MethodRun> runs;
  for (Method m : cfg.method_list()) {
    runs.push_back(detail::timed_run(m, record.grid, [&](MethodRun& r) {
      switch (m) {
        case Method::AFF: {
          FilterProblem problem(cir.to_affine(), record,
                                make_schedule(record.model, Eigen::VectorXd::Constant(1, cfg.x0)), cfg.ode_options());
          const auto prior = PriorMixture::truncated_normal(law.x0, law.s0);
          detail::take_sequence(r, aff_filter_sequence(problem, [&](const FilterProblem& p, double T) {
            return aff_moments_cir(cir, p, prior, T);
          }, threads));
          break;
        }
        case Method::PF: {
          PfOptions opt;
          opt.particles = cfg.np;
          opt.threads = threads;
          r.summaries = pf_cir(pf_seed, cir, law, record, opt);
          break;
        }
        case Method::EKF:
          r.summaries = ekf_cir(record, cir, {init.mean, init.variance});
          break;
        case Method::GAMMA:
          r.summaries = gamma_adf(record, cir, GammaState::from_moments(init.mean, init.variance));
          break;
        default:
          throw ConfigError("method " + to_string(m) + " is not available for CIR");
      }
    }));
  }
  return runs;
}

inline std::vector<MethodRun> run_wishart_methods(const ExperimentConfig& cfg, const ObservationRecord& record,
                                                  std::uint64_t pf_seed, unsigned threads) {
  const auto w = cfg.wishart();
  const Eigen::MatrixXd x0 = cfg.wishart_x0_matrix();
  std::vector<MethodRun> runs;
  for (Method m : cfg.method_list()) {
    runs.push_back(detail::timed_run(m, record.grid, [&](MethodRun& r) {
      switch (m) {
        case Method::AFF: {
          FilterProblem problem(w.to_affine(), record, make_schedule(record.model, vech(x0)), cfg.ode_options());
          detail::take_sequence(r, aff_filter_sequence(problem, [&](const FilterProblem& p, double T) {
            return aff_mean_wishart(w, p, x0, T);
          }, threads));
          break;
        }
        case Method::PF: {
          PfOptions opt;
          opt.particles = cfg.np;
          opt.threads = threads;
          r.summaries = pf_wishart(pf_seed, w, wishart_factor(x0, w.n), record, opt);
          break;
        }
        default:
          throw ConfigError("method " + to_string(m) + " is not available for Wishart");
      }
    }));
  }
  return runs;
}

/// Signal path and observation record of one run, from seed-derived streams.
inline std::pair<SignalPath, ObservationRecord> simulate(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto srng = make_rng(seed, stream::signal);
  const auto grid = cfg.grid();
  SignalPath sp = cfg.is_cir()
                      ? cir_sample_path(srng, cfg.cir(), cfg.cir_law(), grid)
                      : wishart_sample_path(srng, cfg.wishart(), wishart_factor(cfg.wishart_x0_matrix(), cfg.wishart_n), grid);
  sp.seed = seed;
  auto orng = make_rng(seed, stream::observation);
  ObservationOptions opts;
  opts.scheme = cfg.scheme();
  auto rec = generate_observations(orng, sp, cfg.observation(), opts);
  return {std::move(sp), std::move(rec)};
}

// ---------------------------------------------------------------------------
// CIR filter comparison

struct FilterCaseResult {
  ExperimentConfig cfg;
  SignalPath signal;
  ObservationRecord record;
  std::vector<MethodRun> runs;
  std::vector<PosteriorSummary> unconditional;  // t_1 .. t_N

  bool partial_failure() const {
    return std::any_of(runs.begin(), runs.end(), [](const MethodRun& r) { return r.error.has_value(); });
  }

  const MethodRun* find(Method m) const {
    for (const auto& r : runs)
      if (r.method == m) return &r;
    return nullptr;
  }
};

/// Unconditional mean and variance of X_t under the prior max(0, Z).
inline std::vector<PosteriorSummary> unconditional_cir(const ExperimentConfig& cfg, const std::vector<double>& grid) {
  const auto prior = PriorMixture::truncated_normal(cfg.x0, cfg.s0);
  std::vector<PosteriorSummary> out;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    double m = 0.0, s = 0.0;
    for (std::size_t j = 0; j < prior.atoms.size(); ++j) {
      const auto c = cir_moments(cfg.cir(), prior.atoms[j][0], grid[i]);
      m += prior.weights[j] * c.mean;
      s += prior.weights[j] * (c.variance + c.mean * c.mean);
    }
    PosteriorSummary p;
    p.t = grid[i];
    p.mean = Eigen::VectorXd::Constant(1, m);
    p.cov = Eigen::MatrixXd::Constant(1, 1, std::max(0.0, s - m * m));
    p.method = Method::UNCOND;
    out.push_back(std::move(p));
  }
  return out;
}

/// Simulates one signal and observation path from cfg.seed and runs every
/// requested CIR method on it.
inline FilterCaseResult run_filter_case(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.is_cir()) throw ConfigError("run_filter_case needs model = cir");
  FilterCaseResult r;
  r.cfg = cfg;
  std::tie(r.signal, r.record) = simulate(cfg, cfg.seed);
  r.runs = run_cir_methods(cfg, r.record, derive_seed(cfg.seed, stream::particle_filter), cfg.threads);
  r.unconditional = unconditional_cir(cfg, r.record.grid);
  return r;
}

/// Columns t, X_true, <METHOD>_mean, <METHOD>_var for each method, xbar, v.
inline void write_filter_case_csv(const std::filesystem::path& path, const FilterCaseResult& r) {
  CsvWriter w(path);
  std::vector<std::string> h = {"t", "X_true"};
  for (const auto& run : r.runs) {
    h.push_back(to_string(run.method) + "_mean");
    h.push_back(to_string(run.method) + "_var");
  }
  h.push_back("xbar");
  h.push_back("v");
  w.header(h);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < r.unconditional.size(); ++i) {
    std::vector<double> row = {r.record.grid[i + 1], r.signal.states[i + 1][0]};
    for (const auto& run : r.runs) {
      const auto& s = run.summaries[i];
      row.push_back(s.available ? s.mean[0] : nan);
      row.push_back(s.available ? s.variance() : nan);
    }
    row.push_back(r.unconditional[i].mean[0]);
    row.push_back(r.unconditional[i].variance());
    w.row(row);
  }
}

// ---------------------------------------------------------------------------
// Wishart mean-square error

struct MseTable {
  std::vector<double> times;  // t_0 .. t_N
  std::vector<Method> methods;
  std::map<Method, std::vector<double>> e;             // average squared error per time
  std::map<Method, std::size_t> effective_m;           // successful replications
  std::map<Method, std::vector<double>> seconds;       // wall clock per successful replication
  std::map<Method, std::vector<std::string>> failures; // "replication j: message"

  double median_seconds(Method m) const { return median(seconds.at(m)); }

  /// Mean of e over the time points in [t_lo, t_hi].
  double window_mean(Method m, double t_lo, double t_hi) const {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] < t_lo - 1e-12 || times[i] > t_hi + 1e-12) continue;
      s += e.at(m)[i];
      ++n;
    }
    return n ? s / n : std::numeric_limits<double>::quiet_NaN();
  }
};

/// For j = 1..M: simulate with seed derive_seed(seed, j), filter with each
/// method and accumulate ||X_t - xhat_t||^2 (trace inner product) at t_0..t_N.
/// Failed replications are excluded per method and counted.
inline MseTable run_mse_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.is_cir()) throw ConfigError("run_mse_experiment needs model = wishart");
  const auto methods = cfg.method_list();
  const std::size_t M = cfg.replications;
  const auto grid = cfg.grid();
  const Eigen::MatrixXd x0 = cfg.wishart_x0_matrix();

  struct Rep {
    std::map<Method, std::vector<double>> err;
    std::map<Method, double> secs;
    std::map<Method, std::string> fail;
  };
  std::vector<Rep> reps(M);
  // Replications run concurrently; each filter then runs single-threaded.
  const unsigned threads = cfg.threads ? cfg.threads : default_threads();
  const unsigned outer = std::min<unsigned>(threads, static_cast<unsigned>(M));
  const unsigned inner = outer > 1 ? 1 : threads;
  parallel_for(M, outer, [&](std::size_t j) {
    const std::uint64_t seed = derive_seed(cfg.seed, j + 1);
    const auto [sp, rec] = simulate(cfg, seed);
    const auto runs = run_wishart_methods(cfg, rec, derive_seed(seed, stream::particle_filter), inner);
    for (const auto& run : runs) {
      if (run.error) {
        reps[j].fail[run.method] = *run.error;
        continue;
      }
      std::vector<double> err(grid.size());
      err[0] = (mat(sp.states[0]) - x0).squaredNorm();
      for (std::size_t i = 1; i < grid.size(); ++i)
        err[i] = (mat(sp.states[i]) - mat(run.summaries[i - 1].mean)).squaredNorm();
      reps[j].err[run.method] = std::move(err);
      reps[j].secs[run.method] = run.seconds;
    }
  });

  MseTable t;
  t.times = grid;
  t.methods = methods;
  for (Method m : methods) {
    std::vector<double> acc(grid.size(), 0.0);
    std::size_t count = 0;
    for (std::size_t j = 0; j < M; ++j) {
      if (auto it = reps[j].fail.find(m); it != reps[j].fail.end()) {
        t.failures[m].push_back("replication " + std::to_string(j + 1) + ": " + it->second);
        continue;
      }
      for (std::size_t i = 0; i < grid.size(); ++i) acc[i] += reps[j].err[m][i];
      t.seconds[m].push_back(reps[j].secs[m]);
      ++count;
    }
    for (double& a : acc) a = count ? a / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
    t.e[m] = std::move(acc);
    t.effective_m[m] = count;
    t.seconds[m];
    t.failures[m];
  }
  return t;
}

/// Columns t, e_<METHOD> for each method.
inline void write_mse_csv(const std::filesystem::path& path, const MseTable& t) {
  CsvWriter w(path);
  std::vector<std::string> h = {"t"};
  for (Method m : t.methods) h.push_back("e_" + to_string(m));
  w.header(h);
  for (std::size_t i = 0; i < t.times.size(); ++i) {
    std::vector<double> row = {t.times[i]};
    for (Method m : t.methods) row.push_back(t.e.at(m)[i]);
    w.row(row);
  }
}

/// Wall-clock data; kept apart from the deterministic outputs.
inline void write_timing_json(const std::filesystem::path& path, const std::map<Method, std::vector<double>>& secs) {
  nlohmann::ordered_json j;
  for (const auto& [m, s] : secs) {
    j[to_string(m)]["median_seconds"] = median(s);
    j[to_string(m)]["seconds"] = s;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Plot data

struct PlotSeries {
  std::string name;
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> variance;  // may be empty
};

struct PlotData {
  std::string figure;
  std::vector<PlotSeries> series;
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();
};

inline PlotData plot_data(const FilterCaseResult& r) {
  PlotData p;
  p.figure = r.cfg.name;
  PlotSeries truth{"truth", {}, {}, {}};
  for (std::size_t i = 1; i < r.signal.size(); ++i) {
    truth.t.push_back(r.signal.grid[i]);
    truth.mean.push_back(r.signal.states[i][0]);
  }
  p.series.push_back(std::move(truth));
  auto add = [&](const std::string& name, const std::vector<PosteriorSummary>& rows) {
    PlotSeries s{name, {}, {}, {}};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& row : rows) {
      s.t.push_back(row.t);
      s.mean.push_back(row.available ? row.mean[0] : nan);
      s.variance.push_back(row.available ? row.variance() : nan);
    }
    p.series.push_back(std::move(s));
  };
  for (const auto& run : r.runs) {
    add(to_string(run.method), run.summaries);
    if (run.error) p.notes["errors"][to_string(run.method)] = *run.error;
  }
  add(to_string(Method::UNCOND), r.unconditional);
  return p;
}

inline PlotData plot_data(const MseTable& t, const std::string& figure) {
  PlotData p;
  p.figure = figure;
  for (Method m : t.methods) {
    p.series.push_back({"e_" + to_string(m), t.times, t.e.at(m), {}});
    p.notes["effective_m"][to_string(m)] = t.effective_m.at(m);
    if (!t.failures.at(m).empty()) p.notes["failures"][to_string(m)] = t.failures.at(m);
  }
  return p;
}

/// Writes <figure>_<series>.csv for each series (columns t, xhat, band_lo,
/// band_hi when a variance is present, else t, value) and manifest.json.
inline std::vector<std::filesystem::path> emit_plotdata(const PlotData& p, const ExperimentConfig& cfg,
                                                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> files;
  for (const auto& s : p.series) {
    const auto path = dir / (p.figure + "_" + s.name + ".csv");
    CsvWriter w(path);
    if (s.variance.empty()) {
      w.header({"t", "value"});
      for (std::size_t i = 0; i < s.t.size(); ++i) w.row({s.t[i], s.mean[i]});
    } else {
      w.header({"t", "xhat", "band_lo", "band_hi"});
      for (std::size_t i = 0; i < s.t.size(); ++i) {
        const double sd = std::sqrt(std::max(0.0, s.variance[i]));
        w.row({s.t[i], s.mean[i], s.mean[i] - sd, s.mean[i] + sd});
      }
    }
    files.push_back(path);
  }
  nlohmann::ordered_json m;
  m["figure"] = p.figure;
  m["version"] = kVersion;
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  m["boost"] = std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
               std::to_string(BOOST_VERSION % 100);
  m["config_hash"] = hex64(cfg.hash());
  m["seed"] = cfg.seed;
  m["config"] = cfg.to_json();
  m["files"] = nlohmann::ordered_json::array();
  for (const auto& f : files) m["files"].push_back(f.filename().string());
  m["notes"] = p.notes;
  const auto manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write '" + manifest.string() + "'");
  out << m.dump(2) << '\n';
  files.push_back(manifest);
  return files;
}

}  // namespace aff
