#pragma once

// The affine functional filter: observation-driven Riccati system, normalized
// conditional characteristic function, approximate conditional moments,
// sampling of the approximate smoother and Fourier inversion.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aff/affine.hpp"
#include "aff/cir.hpp"
#include "aff/errors.hpp"
#include "aff/interpolation.hpp"
#include "aff/io.hpp"
#include "aff/observation.hpp"
#include "aff/ode.hpp"
#include "aff/parallel.hpp"
#include "aff/rng.hpp"
#include "aff/signal_path.hpp"
#include "aff/wishart.hpp"

namespace aff {

// ---------------------------------------------------------------------------
// Prior

/// Finite Dirac mixture sum_j w_j delta_{x_j}.
struct PriorMixture {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> atoms;

  static PriorMixture dirac(Eigen::VectorXd x) { return {{1.0}, {std::move(x)}}; }

  /// Law of max(0, Z), Z ~ N(x0, s0^2): Gauss-Hermite nodes of Z with the
  /// negative ones clamped to 0 and merged into a single atom.
  static PriorMixture truncated_normal(double x0, double s0, int nodes = 64) {
    if (!(s0 >= 0.0)) throw InvalidParams("truncated_normal: s0 must be >= 0");
    if (s0 == 0.0) return dirac(Eigen::VectorXd::Constant(1, std::max(0.0, x0)));
    if (nodes < 1) throw InvalidParams("truncated_normal: need at least one node");
    // Golub-Welsch for the standard normal weight: the Jacobi matrix of the
    // probabilists' Hermite recurrence has off-diagonal sqrt(k).
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nodes, nodes);
    for (int k = 1; k < nodes; ++k) jac(k - 1, k) = jac(k, k - 1) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    PriorMixture p;
    double zero_mass = 0.0;
    for (int k = 0; k < nodes; ++k) {
      const double w = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
      const double x = x0 + s0 * es.eigenvalues()[k];
      if (x <= 0.0) {
        zero_mass += w;
      } else {
        p.weights.push_back(w);
        p.atoms.push_back(Eigen::VectorXd::Constant(1, x));
      }
    }
    if (zero_mass > 0.0) {
      p.weights.insert(p.weights.begin(), zero_mass);
      p.atoms.insert(p.atoms.begin(), Eigen::VectorXd::Zero(1));
    }
    double total = 0.0;
    for (double w : p.weights) total += w;
    for (double& w : p.weights) w /= total;
    return p;
  }

  int dim() const { return atoms.empty() ? 0 : static_cast<int>(atoms.front().size()); }

  void validate() const {
    if (atoms.empty() || atoms.size() != weights.size()) throw InvalidParams("prior: need one weight per atom");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw InvalidParams("prior: weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidParams("prior: weights must sum to 1");
    for (const auto& a : atoms)
      if (a.size() != dim()) throw InvalidParams("prior: atoms of different dimension");
  }

  Eigen::VectorXd mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
    for (std::size_t j = 0; j < atoms.size(); ++j) m += weights[j] * atoms[j];
    return m;
  }
};

// ---------------------------------------------------------------------------
// Posterior summaries

enum class Method { AFF, PF, EKF, GAMMA, UNCOND };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::AFF: return "AFF";
    case Method::PF: return "PF";
    case Method::EKF: return "EKF";
    case Method::GAMMA: return "GAMMA";
    case Method::UNCOND: return "UNCOND";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::AFF, Method::PF, Method::EKF, Method::GAMMA, Method::UNCOND}) {
    std::string name = to_string(m);
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == name || s == lower) return m;
  }
  throw InvalidParams("unknown method '" + s + "'");
}

/// Mean and (optional) covariance of one approximate posterior. `available`
/// is false for time points a method could not produce.
struct PosteriorSummary {
  double t = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // empty when the method does not provide it
  Method method = Method::AFF;
  bool available = true;

  double variance() const { return cov.size() ? cov(0, 0) : std::numeric_limits<double>::quiet_NaN(); }
};

/// Columns t, mean components, variance components (covariance diagonal),
/// method.
inline void write_summaries_csv(const std::filesystem::path& path, std::span<const PosteriorSummary> rows) {
  CsvWriter w(path);
  const Eigen::Index p = rows.empty() ? 1 : rows.front().mean.size();
  std::vector<std::string> h = {"t"};
  for (Eigen::Index k = 0; k < p; ++k) h.push_back("mean" + std::to_string(k));
  for (Eigen::Index k = 0; k < p; ++k) h.push_back("var" + std::to_string(k));
  h.push_back("method");
  w.header(h);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    std::vector<std::string> cells = {fmt_double(r.t)};
    for (Eigen::Index k = 0; k < p; ++k) cells.push_back(fmt_double(r.available ? r.mean[k] : nan));
    for (Eigen::Index k = 0; k < p; ++k)
      cells.push_back(fmt_double(r.available && r.cov.size() ? r.cov(k, k) : nan));
    cells.push_back(to_string(r.method));
    w.row_strings(cells);
  }
}

// ---------------------------------------------------------------------------
// Filter Riccati system

/// Everything the filter equations depend on: the model's vector fields, the
/// observation drive y(t) in state coordinates, the linearization schedule
/// and the integration options. Immutable; solves may run concurrently.
class FilterProblem {
 public:
  /// `drive` is y(t) with y(0) = 0, already mapped to state coordinates.
  FilterProblem(AffineModel model, PathInterpolant drive, LinearizationSchedule sched, OdeOptions opts = {})
      : model_(std::move(model)), drive_(std::move(drive)), sched_(std::move(sched)), opts_(opts) {
    if (drive_.dim() != model_.dim()) throw InvalidParams("FilterProblem: drive dimension mismatch");
    if (sched_.gamma.size() != model_.dim()) throw InvalidParams("FilterProblem: gamma dimension mismatch");
  }

  /// Drive built from a raw record: y(t) = (Gamma^{-1} C)^T Gamma^{-1} Ybar(t).
  FilterProblem(AffineModel model, const ObservationRecord& record, LinearizationSchedule sched, OdeOptions opts = {})
      : FilterProblem(std::move(model), drive_from_record(record), std::move(sched), opts) {}

  static PathInterpolant drive_from_record(const ObservationRecord& record) {
    record.validate();
    const Eigen::MatrixXd k = record.model.drive_map();
    return PathInterpolant(record.grid, record.cumulative() * k.transpose(), record.scheme);
  }

  const AffineModel& model() const noexcept { return model_; }
  const PathInterpolant& drive() const noexcept { return drive_; }
  const LinearizationSchedule& schedule() const noexcept { return sched_; }
  const OdeOptions& options() const noexcept { return opts_; }
  int dim() const { return model_.dim(); }
  double t_min() const { return drive_.t_min(); }
  double horizon() const { return drive_.t_max(); }
  const std::vector<double>& knots() const noexcept { return drive_.grid(); }

  /// Integrates the backward system from T to t_min. Returns the raw
  /// trajectory (status blew_up when the threshold is crossed).
  OdeTrajectory integrate_backward(double T, const Eigen::VectorXcd& u) const {
    if (!(T > t_min()) || T > horizon() * (1 + 1e-14))
      throw InvalidParams("filter Riccati: T must lie in (t_0, t_N]");
    if (u.size() != dim()) throw InvalidParams("filter Riccati: dimension mismatch");
    T = std::min(T, horizon());
    const int d = dim();
    Eigen::VectorXd ybuf(d);
    auto field = [this, d, ybuf](double t, const Eigen::VectorXd& y) mutable {
      drive_.eval(t, ybuf);
      Eigen::VectorXcd z(d);
      for (int i = 0; i < d; ++i) z[i] = cplx(y[i] - ybuf[i], y[d + i]);
      const Eigen::VectorXcd r = model_.R(z);
      const cplx f = model_.F(z);
      Eigen::VectorXd out(2 * d + 2);
      const Eigen::VectorXd& g = sched_.gamma_at(t);
      for (int i = 0; i < d; ++i) {
        out[i] = -r[i].real() + g[i];
        out[d + i] = -r[i].imag();
      }
      out[2 * d] = -f.real() + sched_.c_at(t);
      out[2 * d + 1] = -f.imag();
      return out;
    };
    Eigen::VectorXd yT(d);
    drive_.eval(T, yT);
    const Eigen::VectorXcd psiT = u + yT.cast<cplx>();
    return integrate(field, T, t_min(), detail::pack(psiT, 0.0), opts_, interior_knots(T));
  }

  /// Phi(t0, T, u), Psi(t0, T, u) and the dense trajectory. Throws BlowUp.
  RiccatiSolution solve(double T, const Eigen::VectorXcd& u) const {
    RiccatiSolution sol;
    sol.u = u;
    sol.T = T;
    sol.trajectory = integrate_backward(T, u);
    require_completed(sol.trajectory);
    sol.psi = detail::unpack_psi(sol.trajectory.end_value());
    sol.phi = detail::unpack_phi(sol.trajectory.end_value());
    return sol;
  }

  std::span<const double> interior_knots(double T) const {
    const auto& g = drive_.grid();
    auto lo = std::upper_bound(g.begin(), g.end(), t_min());
    auto hi = std::lower_bound(g.begin(), g.end(), T);
    if (hi < lo) hi = lo;
    return {g.data() + (lo - g.begin()), static_cast<std::size_t>(hi - lo)};
  }

 private:
  AffineModel model_;
  PathInterpolant drive_;
  LinearizationSchedule sched_;
  OdeOptions opts_;
};

inline RiccatiSolution solve_filter_riccati(const AffineModel& model, const ObservationRecord& record,
                                            const LinearizationSchedule& sched, double T,
                                            const Eigen::VectorXcd& u, const OdeOptions& opts = {}) {
  return FilterProblem(model, record, sched, opts).solve(T, u);
}

// ---------------------------------------------------------------------------
// Characteristic function

namespace detail {

inline cplx bilinear(const Eigen::VectorXd& x, const Eigen::VectorXcd& psi) {
  cplx s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * psi[i];
  return s;
}

}  // namespace detail

/// log rho_T(exp<u, .>, y) = log sum_j w_j exp(Phi + <x_j, Psi>), computed
/// with a log-sum-exp shift. The imaginary part is defined modulo 2 pi.
inline cplx aff_log_rho(const FilterProblem& problem, const PriorMixture& prior, double T,
                        const Eigen::VectorXcd& u) {
  const auto sol = problem.solve(T, u);
  if (prior.atoms.size() == 1 && prior.weights[0] == 1.0) return sol.phi + detail::bilinear(prior.atoms[0], sol.psi);
  std::vector<cplx> a(prior.atoms.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (prior.weights[j] <= 0.0) continue;
    a[j] = std::log(prior.weights[j]) + sol.phi + detail::bilinear(prior.atoms[j], sol.psi);
    shift = std::max(shift, a[j].real());
  }
  cplx s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (prior.weights[j] > 0.0) s += std::exp(a[j] - shift);
  return std::log(s) + shift;
}

/// Normalized conditional characteristic function v -> E[exp(i <v, X_T>)]
/// under the AFF.
inline cplx aff_cf(const FilterProblem& problem, const PriorMixture& prior, double T, const Eigen::VectorXd& v) {
  if (v.size() != problem.dim()) throw InvalidParams("aff_cf: dimension mismatch");
  if (v.isZero(0.0)) return 1.0;
  const auto num = problem.solve(T, cplx(0.0, 1.0) * v.cast<cplx>());
  const auto den = problem.solve(T, Eigen::VectorXcd::Zero(problem.dim()));
  // Shift both sums by the largest real exponent of the denominator; the
  // numerator terms are dominated termwise by the denominator terms.
  std::vector<double> b(prior.atoms.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < b.size(); ++j) {
    b[j] = den.phi.real() + detail::bilinear(prior.atoms[j], den.psi).real();
    if (prior.weights[j] > 0.0) shift = std::max(shift, std::log(prior.weights[j]) + b[j]);
  }
  cplx numer = 0.0;
  double denom = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (prior.weights[j] <= 0.0) continue;
    const double lw = std::log(prior.weights[j]);
    denom += std::exp(lw + b[j] - shift);
    numer += std::exp(lw + num.phi + detail::bilinear(prior.atoms[j], num.psi) - shift);
  }
  if (!(denom > 0.0) || !std::isfinite(denom)) throw DegenerateNormalizer("aff_cf: normalizer is not a positive finite number");
  return numer / denom;
}

inline cplx aff_cf(const FilterProblem& problem, const PriorMixture& prior, double T, double v) {
  return aff_cf(problem, prior, T, Eigen::VectorXd::Constant(1, v));
}

// ---------------------------------------------------------------------------
// Moments

namespace detail {

/// Prior weights tilted by exp(<x_j, Psi(t0, T, 0)>), normalized.
inline std::vector<double> tilted_weights(const PriorMixture& prior, const Eigen::VectorXcd& psi0) {
  std::vector<double> lw(prior.atoms.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < lw.size(); ++j) {
    lw[j] = prior.weights[j] > 0.0 ? std::log(prior.weights[j]) + bilinear(prior.atoms[j], psi0).real()
                                   : -std::numeric_limits<double>::infinity();
    shift = std::max(shift, lw[j]);
  }
  double total = 0.0;
  for (double& l : lw) total += (l = std::exp(l - shift));
  for (double& l : lw) l /= total;
  return lw;
}

}  // namespace detail

/// Approximate conditional mean and variance of a CIR signal at time T: the
/// first two moments of the tilted dynamics
///   dX = (b + (beta + sigma^2 (Psi_s - y_s)) X) ds + sigma sqrt(X) dB
/// started from the tilted prior, with Psi_s = Psi(s, T, 0).
inline PosteriorSummary aff_moments_cir(const CirModel& cir, const FilterProblem& problem,
                                        const PriorMixture& prior, double T) {
  const auto sol = problem.solve(T, Eigen::VectorXcd::Zero(1));
  const auto w = detail::tilted_weights(prior, sol.psi);
  double m0 = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) m0 += w[j] * prior.atoms[j][0];
  double v0 = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) v0 += w[j] * (prior.atoms[j][0] - m0) * (prior.atoms[j][0] - m0);
  const double s2 = cir.sigma * cir.sigma;
  Eigen::VectorXd ybuf(1);
  auto field = [&](double s, const Eigen::VectorXd& mv) {
    problem.drive().eval(s, ybuf);
    const double a = cir.beta + s2 * (sol.trajectory(s)[0] - ybuf[0]);
    Eigen::VectorXd out(2);
    out[0] = cir.b + a * mv[0];
    out[1] = 2.0 * a * mv[1] + s2 * mv[0];
    return out;
  };
  const Eigen::VectorXd y0 = (Eigen::VectorXd(2) << m0, v0).finished();
  const auto traj = integrate(field, problem.t_min(), T, y0, problem.options(), problem.interior_knots(T));
  require_completed(traj);
  PosteriorSummary out;
  out.t = T;
  out.mean = Eigen::VectorXd::Constant(1, traj.end_value()[0]);
  out.cov = Eigen::MatrixXd::Constant(1, 1, std::max(0.0, traj.end_value()[1]));
  out.method = Method::AFF;
  return out;
}

/// Approximate conditional mean of a Wishart signal started at x0:
///   dXhat/ds = n Sigma^2 + H_s Xhat + Xhat H_s^T,  H_s = 2 Sigma^2 (Psi(s) - ybar_s)
/// in matrix form, with Psi the u = 0 backward solution.
inline PosteriorSummary aff_mean_wishart(const WishartModel& w, const FilterProblem& problem,
                                         const Eigen::MatrixXd& x0, double T) {
  const auto sol = problem.solve(T, Eigen::VectorXcd::Zero(problem.dim()));
  const int d = w.d;
  const Eigen::MatrixXd s2 = w.Sigma * w.Sigma;
  const Eigen::MatrixXd drift = static_cast<double>(w.n) * s2;
  Eigen::VectorXd ybuf(problem.dim());
  auto field = [&](double s, const Eigen::VectorXd& y) {
    problem.drive().eval(s, ybuf);
    const Eigen::VectorXd psi = sol.trajectory(s).head(problem.dim());
    const Eigen::MatrixXd h = 2.0 * s2 * vech_adjoint(Eigen::VectorXd(psi - ybuf));
    const Eigen::Map<const Eigen::MatrixXd> x(y.data(), d, d);
    Eigen::MatrixXd dx = drift + h * x + x * h.transpose();
    return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(dx.data(), d * d));
  };
  const Eigen::VectorXd y0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), d * d);
  const auto traj = integrate(field, problem.t_min(), T, y0, problem.options(), problem.interior_knots(T));
  require_completed(traj);
  const Eigen::MatrixXd xhat = Eigen::Map<const Eigen::MatrixXd>(traj.end_value().data(), d, d);
  PosteriorSummary out;
  out.t = T;
  out.mean = vech(xhat);
  out.method = Method::AFF;
  return out;
}

using MomentOp = std::function<PosteriorSummary(const FilterProblem&, double T)>;

struct FilterSequence {
  std::vector<PosteriorSummary> summaries;  // one per grid point t_1 .. t_N
  std::optional<double> blowup_time;        // first output time that failed

  bool complete() const { return !blowup_time.has_value(); }
};

/// Runs `op` at every knot t_1..t_N, re-solving the backward system for each
/// output time. If some output time blows up, it and every later time are
/// marked unavailable.
inline FilterSequence aff_filter_sequence(const FilterProblem& problem, const MomentOp& op, unsigned threads = 1) {
  const auto& g = problem.knots();
  const std::size_t n = g.size() - 1;
  FilterSequence seq;
  seq.summaries.resize(n);
  std::vector<char> failed(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    try {
      seq.summaries[i] = op(problem, g[i + 1]);
    } catch (const BlowUp&) {
      failed[i] = 1;
    }
  });
  bool tail = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i] && !tail) {
      tail = true;
      seq.blowup_time = g[i + 1];
    }
    if (tail) {
      seq.summaries[i] = PosteriorSummary{};
      seq.summaries[i].t = g[i + 1];
      seq.summaries[i].available = false;
    }
    seq.summaries[i].method = Method::AFF;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Approximate smoother

namespace detail {

struct SmootherSetup {
  std::vector<double> tilt;     // sigma^2 (Psi - y) at the left end of each Euler step
  std::vector<double> weights;  // tilted prior weights
};

inline SmootherSetup smoother_setup(const CirModel& cir, const FilterProblem& problem,
                                    const PriorMixture& prior, double t, std::size_t nsteps) {
  if (nsteps < 1) throw InvalidParams("smoother: nsteps must be >= 1");
  const auto sol = problem.solve(t, Eigen::VectorXcd::Zero(1));
  SmootherSetup s;
  s.weights = tilted_weights(prior, sol.psi);
  s.tilt.resize(nsteps);
  const double t0 = problem.t_min();
  const double h = (t - t0) / static_cast<double>(nsteps);
  Eigen::VectorXd ybuf(1);
  for (std::size_t k = 0; k < nsteps; ++k) {
    const double sk = t0 + h * static_cast<double>(k);
    problem.drive().eval(sk, ybuf);
    s.tilt[k] = cir.sigma * cir.sigma * (sol.trajectory(sk)[0] - ybuf[0]);
  }
  return s;
}

inline double sample_atom(Rng& rng, const PriorMixture& prior, const std::vector<double>& w) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng), acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    acc += w[j];
    if (u < acc) return prior.atoms[j][0];
  }
  return prior.atoms.back()[0];
}

inline double euler_full_truncation(Rng& rng, const CirModel& cir, const SmootherSetup& s, double x, double h,
                                    std::vector<double>* path) {
  std::normal_distribution<double> normal;
  const double sq = std::sqrt(h);
  for (std::size_t k = 0; k < s.tilt.size(); ++k) {
    const double xp = std::max(0.0, x);
    x += (cir.b + (cir.beta + s.tilt[k]) * xp) * h + cir.sigma * std::sqrt(xp) * sq * normal(rng);
    if (path) path->push_back(x);
  }
  return x;
}

}  // namespace detail

/// One path of the approximate smoothing law on [t0, t]: X_0 from the tilted
/// prior, then full-truncation Euler steps of the tilted CIR dynamics.
inline SignalPath smoother_sample_cir(Rng& rng, const CirModel& cir, const FilterProblem& problem,
                                      const PriorMixture& prior, double t, std::size_t nsteps) {
  const auto setup = detail::smoother_setup(cir, problem, prior, t, nsteps);
  const double t0 = problem.t_min();
  const double h = (t - t0) / static_cast<double>(nsteps);
  std::vector<double> xs;
  xs.reserve(nsteps + 1);
  xs.push_back(detail::sample_atom(rng, prior, setup.weights));
  detail::euler_full_truncation(rng, cir, setup, xs.front(), h, &xs);
  SignalPath p;
  for (std::size_t k = 0; k <= nsteps; ++k) {
    p.grid.push_back(k == nsteps ? t : t0 + h * static_cast<double>(k));
    p.states.push_back(Eigen::VectorXd::Constant(1, xs[k]));
  }
  return p;
}

/// Terminal values X_t of `npaths` independent smoother paths. Path j uses
/// the RNG stream derive_seed(seed, j), so the result does not depend on the
/// thread count.
inline std::vector<double> smoother_terminal_ensemble(std::uint64_t seed, const CirModel& cir,
                                                      const FilterProblem& problem, const PriorMixture& prior,
                                                      double t, std::size_t nsteps, std::size_t npaths,
                                                      unsigned threads = 1) {
  const auto setup = detail::smoother_setup(cir, problem, prior, t, nsteps);
  const double h = (t - problem.t_min()) / static_cast<double>(nsteps);
  std::vector<double> out(npaths);
  parallel_for(npaths, threads, [&](std::size_t j) {
    auto rng = make_rng(seed, j);
    const double x0 = detail::sample_atom(rng, prior, setup.weights);
    out[j] = detail::euler_full_truncation(rng, cir, setup, x0, h, nullptr);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Fourier inversion

struct DensityResult {
  std::vector<double> x;
  std::vector<double> density;
  double truncation = 0.0;  // |cf(V)|
  bool truncation_warning = false;
};

/// f(x) = (1/2pi) int_{-V}^{V} e^{-ivx} cf(v) dv by the trapezoidal rule on
/// n_nodes intervals, folded onto [0, V] using cf(-v) = conj(cf(v)).
inline DensityResult fourier_invert(const std::function<cplx(double)>& cf, double v_max, std::size_t n_nodes,
                                    std::span<const double> x_grid, bool strict = false, unsigned threads = 1) {
  if (!(v_max > 0.0)) throw InvalidParams("fourier_invert: v_max must be > 0");
  if (n_nodes < 2 || n_nodes % 2 != 0) throw InvalidParams("fourier_invert: n_nodes must be even and >= 2");
  const std::size_t half = n_nodes / 2;
  const double dv = v_max / static_cast<double>(half);
  std::vector<cplx> values(half + 1);
  parallel_for(half + 1, threads, [&](std::size_t k) { values[k] = cf(dv * static_cast<double>(k)); });
  DensityResult r;
  r.x.assign(x_grid.begin(), x_grid.end());
  r.density.resize(x_grid.size());
  r.truncation = std::abs(values.back());
  r.truncation_warning = r.truncation > 1e-4;
  if (strict && r.truncation_warning)
    throw TruncationWarning("fourier_invert: |cf(V)| = " + fmt_double(r.truncation) + " exceeds 1e-4");
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    const double x = x_grid[i];
    double s = 0.0;
    for (std::size_t k = 0; k <= half; ++k) {
      const double v = dv * static_cast<double>(k);
      const double term = (std::polar(1.0, -v * x) * values[k]).real();
      s += (k == 0 || k == half) ? 0.5 * term : term;
    }
    r.density[i] = s * dv / std::numbers::pi;
  }
  return r;
}

}  // namespace aff
