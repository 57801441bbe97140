#pragma once

// Reference filters: a generic bootstrap particle filter (with CIR and
// Wishart instances), an extended Kalman filter for CIR and a Gamma
// assumed-density filter for CIR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "aff/cir.hpp"
#include "aff/errors.hpp"
#include "aff/filter.hpp"
#include "aff/observation.hpp"
#include "aff/parallel.hpp"
#include "aff/rng.hpp"
#include "aff/wishart.hpp"

namespace aff {

// ---------------------------------------------------------------------------
// Particle filter

inline double effective_sample_size(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

/// Offspring indices of systematic resampling: one uniform U ~ [0, 1/n),
/// points U + k/n matched against the cumulative weights.
inline std::vector<std::size_t> systematic_resample(Rng& rng, std::span<const double> w, std::size_t n) {
  if (w.empty() || n == 0) throw InvalidParams("systematic_resample: empty input");
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double step = total / static_cast<double>(n);
  double u = unif(rng) * step;
  std::vector<std::size_t> idx(n);
  std::size_t j = 0;
  double cum = w[0];
  for (std::size_t k = 0; k < n; ++k) {
    while (u >= cum && j + 1 < w.size()) cum += w[++j];
    idx[k] = j;
    u += step;
  }
  return idx;
}

template <class State>
struct ParticleEnsemble {
  std::vector<State> particles;
  std::vector<double> weights;  // normalized
  double ess = 0.0;
};

struct PfOptions {
  std::size_t particles = 10000;
  unsigned threads = 1;
  /// Particles are processed in blocks with one RNG stream per
  /// (seed, step, block), so results do not depend on the thread count.
  std::size_t block = 4096;
  double resample_threshold = 0.5;  // resample when ESS < threshold * Np
};

/// Bootstrap particle filter over the steps of `record`.
///   init(rng) -> State
///   transition(rng, state, t_prev, t_next) -> State
///   loglik(state, step_index) -> double   (up to a constant)
///   summarize(ensemble, t) -> PosteriorSummary
/// Throws WeightCollapse when every log-weight is -inf or NaN.
template <class State, class Init, class Transition, class LogLik, class Summarize>
std::vector<PosteriorSummary> bootstrap_pf(std::uint64_t seed, const ObservationRecord& record,
                                           const PfOptions& opt, Init&& init, Transition&& transition,
                                           LogLik&& loglik, Summarize&& summarize,
                                           ParticleEnsemble<State>* final_ensemble = nullptr) {
  record.validate();
  const std::size_t np = opt.particles;
  if (np < 2) throw InvalidParams("bootstrap_pf: need at least two particles");
  const std::size_t nblocks = (np + opt.block - 1) / opt.block;
  ParticleEnsemble<State> ens;
  ens.particles.resize(np);
  ens.weights.assign(np, 1.0 / static_cast<double>(np));
  std::vector<double> logw(np, 0.0);

  parallel_for(nblocks, opt.threads, [&](std::size_t b) {
    auto rng = Rng(derive_seed(seed, 0, b));
    for (std::size_t i = b * opt.block; i < std::min(np, (b + 1) * opt.block); ++i) ens.particles[i] = init(rng);
  });

  std::vector<PosteriorSummary> out;
  out.reserve(record.steps());
  std::vector<State> scratch(np);
  for (std::size_t k = 1; k <= record.steps(); ++k) {
    const double t0 = record.grid[k - 1], t1 = record.grid[k];
    parallel_for(nblocks, opt.threads, [&](std::size_t b) {
      auto rng = Rng(derive_seed(seed, 2 * k - 1, b));
      for (std::size_t i = b * opt.block; i < std::min(np, (b + 1) * opt.block); ++i) {
        ens.particles[i] = transition(rng, ens.particles[i], t0, t1);
        logw[i] = std::log(ens.weights[i]) + loglik(ens.particles[i], k);
      }
    });
    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logw) {
      if (std::isnan(l)) throw WeightCollapse(k);
      mx = std::max(mx, l);
    }
    if (!std::isfinite(mx)) throw WeightCollapse(k);
    double total = 0.0;
    for (std::size_t i = 0; i < np; ++i) total += (ens.weights[i] = std::exp(logw[i] - mx));
    for (double& w : ens.weights) w /= total;
    ens.ess = 1.0 / std::inner_product(ens.weights.begin(), ens.weights.end(), ens.weights.begin(), 0.0);
    out.push_back(summarize(ens, t1));
    if (ens.ess < opt.resample_threshold * static_cast<double>(np)) {
      auto rng = Rng(derive_seed(seed, 2 * k, 0));
      const auto idx = systematic_resample(rng, ens.weights, np);
      for (std::size_t i = 0; i < np; ++i) scratch[i] = ens.particles[idx[i]];
      std::swap(scratch, ens.particles);
      std::fill(ens.weights.begin(), ens.weights.end(), 1.0 / static_cast<double>(np));
      ens.ess = static_cast<double>(np);
    }
  }
  if (final_ensemble) *final_ensemble = std::move(ens);
  return out;
}

namespace detail {

/// Gaussian log-likelihood of increment y_k given state x (in observation
/// coordinates C x), up to a constant: -|Gamma^{-1}(y - C x dt)|^2 / (2 dt).
class IncrementLikelihood {
 public:
  explicit IncrementLikelihood(const ObservationRecord& rec) : rec_(rec), lu_(rec.model.Gamma.partialPivLu()) {
    rec.model.validate();
    scaled_y_.reserve(rec.steps());
    for (const auto& y : rec.increments) scaled_y_.push_back(lu_.solve(y));
    scaled_c_ = lu_.solve(rec.model.C);
  }

  double operator()(const Eigen::VectorXd& x, std::size_t k) const {
    const double dt = rec_.grid[k] - rec_.grid[k - 1];
    const Eigen::VectorXd r = scaled_y_[k - 1] - scaled_c_ * x * dt;
    return -0.5 * r.squaredNorm() / dt;
  }

  /// Scalar fast path for 1 x 1 channels.
  double scalar(double x, std::size_t k) const {
    const double dt = rec_.grid[k] - rec_.grid[k - 1];
    const double r = scaled_y_[k - 1][0] - scaled_c_(0, 0) * x * dt;
    return -0.5 * r * r / dt;
  }

 private:
  const ObservationRecord& rec_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  std::vector<Eigen::VectorXd> scaled_y_;
  Eigen::MatrixXd scaled_c_;
};

}  // namespace detail

/// Bootstrap PF for CIR with exact transitions and prior max(0, Z).
inline std::vector<PosteriorSummary> pf_cir(std::uint64_t seed, const CirModel& cir, const CirInitialLaw& law,
                                            const ObservationRecord& record, const PfOptions& opt) {
  cir.validate();
  detail::IncrementLikelihood lik(record);
  return bootstrap_pf<double>(
      seed, record, opt, [&](Rng& rng) { return sample_cir_initial(rng, law); },
      [&](Rng& rng, double x, double t0, double t1) { return cir_exact_step(rng, cir, x, t1 - t0); },
      [&](double x, std::size_t k) { return lik.scalar(x, k); },
      [](const ParticleEnsemble<double>& e, double t) {
        double m = 0.0;
        for (std::size_t i = 0; i < e.particles.size(); ++i) m += e.weights[i] * e.particles[i];
        double v = 0.0;
        for (std::size_t i = 0; i < e.particles.size(); ++i)
          v += e.weights[i] * (e.particles[i] - m) * (e.particles[i] - m);
        PosteriorSummary s;
        s.t = t;
        s.mean = Eigen::VectorXd::Constant(1, m);
        s.cov = Eigen::MatrixXd::Constant(1, 1, v);
        s.method = Method::PF;
        return s;
      });
}

/// Bootstrap PF for the Wishart signal. Particles carry the factor Z (n x d),
/// propagated exactly by Z += dW Sigma; the state is X = Z^T Z.
inline std::vector<PosteriorSummary> pf_wishart(std::uint64_t seed, const WishartModel& w, const Eigen::MatrixXd& z0,
                                                const ObservationRecord& record, const PfOptions& opt) {
  w.validate();
  detail::IncrementLikelihood lik(record);
  const int p = w.dim();
  return bootstrap_pf<Eigen::MatrixXd>(
      seed, record, opt, [&](Rng&) { return z0; },
      [&](Rng& rng, const Eigen::MatrixXd& z, double t0, double t1) {
        std::normal_distribution<double> normal;
        const double sd = std::sqrt(t1 - t0);
        Eigen::MatrixXd dw(w.n, w.d);
        for (int r = 0; r < w.n; ++r)
          for (int c = 0; c < w.d; ++c) dw(r, c) = sd * normal(rng);
        return Eigen::MatrixXd(z + dw * w.Sigma);
      },
      [&](const Eigen::MatrixXd& z, std::size_t k) { return lik(vech(Eigen::MatrixXd(z.transpose() * z)), k); },
      [p](const ParticleEnsemble<Eigen::MatrixXd>& e, double t) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t i = 0; i < e.particles.size(); ++i) {
          const Eigen::VectorXd x = vech(Eigen::MatrixXd(e.particles[i].transpose() * e.particles[i]));
          m += e.weights[i] * x;
          s2 += e.weights[i] * x * x.transpose();
        }
        PosteriorSummary s;
        s.t = t;
        s.mean = m;
        s.cov = s2 - m * m.transpose();
        s.method = Method::PF;
        return s;
      });
}

// ---------------------------------------------------------------------------
// Extended Kalman filter for CIR

struct GaussianState {
  double mean = 0.0;
  double variance = 0.0;
};

/// Predict with the exact CIR moment maps (transition variance taken at the
/// current mean plus e^{2 beta dt} times the current variance); update with
/// a scalar Kalman step for y_k = x dt + noise of variance Gamma^2 dt. The
/// variance is floored at 1e-18 and the mean at 0.
inline std::vector<PosteriorSummary> ekf_cir(const ObservationRecord& record, const CirModel& cir,
                                             GaussianState prior) {
  record.validate();
  if (record.model.p() != 1 || record.model.d() != 1) throw InvalidParams("ekf_cir: scalar channel required");
  const double c = record.model.C(0, 0);
  const double g2 = record.model.Gamma(0, 0) * record.model.Gamma(0, 0);
  std::vector<PosteriorSummary> out;
  out.reserve(record.steps());
  double m = prior.mean, p = prior.variance;
  for (std::size_t k = 1; k <= record.steps(); ++k) {
    const double dt = record.grid[k] - record.grid[k - 1];
    const auto mom = cir_moments(cir, std::max(0.0, m), dt);
    const double e = std::exp(cir.beta * dt);
    m = mom.mean;
    p = mom.variance + e * e * p;
    const double h = c * dt;
    const double r = g2 * dt;
    const double s = h * h * p + r;
    const double gain = p * h / s;
    m += gain * (record.increments[k - 1][0] - h * m);
    p = std::max(1e-18, (1.0 - gain * h) * p);
    m = std::max(0.0, m);
    PosteriorSummary sum;
    sum.t = record.grid[k];
    sum.mean = Eigen::VectorXd::Constant(1, m);
    sum.cov = Eigen::MatrixXd::Constant(1, 1, p);
    sum.method = Method::EKF;
    out.push_back(std::move(sum));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gamma assumed-density filter for CIR

struct GammaState {
  double shape = 1.0;
  double scale = 1.0;

  double mean() const { return shape * scale; }
  double variance() const { return shape * scale * scale; }

  static GammaState from_moments(double mean, double variance) {
    const double k = mean * mean / variance;
    const double theta = variance / mean;
    if (!(k > 0.0) || !(theta > 0.0) || !std::isfinite(k) || !std::isfinite(theta))
      throw DegenerateGamma("moment matching produced shape " + fmt_double(k) + ", scale " + fmt_double(theta));
    return {k, theta};
  }
};

struct GammaUpdateResult {
  double mean = 0.0;
  double variance = 0.0;
  double error = 0.0;  // largest relative quadrature error estimate
};

/// Upper end of the update integral: the 1 - 1e-14 quantile of the Gamma
/// prior. Cutting at the 1 - 1e-6 quantile would already remove about 2e-5
/// of the variance.
inline double gamma_update_upper_limit(const GammaState& g) {
  return boost::math::quantile(boost::math::complement(boost::math::gamma_distribution<double>(g.shape, g.scale), 1e-14));
}

/// Posterior mean and variance of x under Gamma(k, theta)(dx) times the
/// likelihood exp(-(y - c x dt)^2 / (2 Gamma^2 dt)), by adaptive quadrature
/// over (0, q), q = gamma_update_upper_limit(g).
inline GammaUpdateResult gamma_posterior_moments(const GammaState& g, double y, double c, double gamma, double dt,
                                                 double tol = 1e-9) {
  const double a = c * c * dt / (gamma * gamma);  // precision contributed by one increment
  const double q = gamma_update_upper_limit(g);
  // Laplace-style centre and width of the posterior.
  const double prior_prec = 1.0 / g.variance();
  const double post_var = 1.0 / (prior_prec + a);
  double centre = g.mean();
  if (g.shape > 1.0) {
    // Mode: (c^2 dt / G^2) x^2 + (1/theta - c y / G^2) x - (k - 1) = 0.
    // Root taken in the form that avoids cancellation for either sign of B.
    const double B = 1.0 / g.scale - c * y / (gamma * gamma);
    const double disc = std::sqrt(B * B + 4.0 * a * (g.shape - 1.0));
    centre = B >= 0.0 ? 2.0 * (g.shape - 1.0) / (B + disc) : (disc - B) / (2.0 * a);
  }
  centre = std::clamp(centre, 0.0, q);
  const double sd = std::sqrt(post_var);
  const double ref = centre > 0.0 ? centre : 0.5 * std::min(q, sd);
  const double r_ref = y - c * ref * dt;
  // log f(x) - log f(ref), arranged so that the large shape and scale terms
  // cancel analytically rather than in floating point.
  auto log_ratio = [&](double x) {
    const double d = x - ref;
    const double dr = -c * d * dt;
    return (g.shape - 1.0) * std::log1p(d / ref) - d / g.scale - 0.5 * dr * (2.0 * r_ref + dr) / (gamma * gamma * dt);
  };
  std::vector<double> cuts = {0.0};
  const double lo = centre - 8 * sd, hi = centre + 8 * sd;
  if (lo > 0.0 && lo < q) cuts.push_back(lo);
  if (hi > 0.0 && hi < q) cuts.push_back(hi);
  cuts.push_back(q);

  double z[3] = {0.0, 0.0, 0.0};
  double err[3] = {0.0, 0.0, 0.0};
  boost::math::quadrature::tanh_sinh<double> ts;
  for (int mom = 0; mom < 3; ++mom) {
    auto f = [&](double x) {
      if (x <= 0.0) return 0.0;
      const double d = x - centre;
      const double w = mom == 0 ? 1.0 : (mom == 1 ? d : d * d);
      return w * std::exp(log_ratio(x));
    };
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      double e = 0.0, l1 = 0.0;
      double v;
      if (s == 0 && g.shape < 1.0) {
        // Integrable singularity at the origin.
        v = ts.integrate(f, cuts[s], cuts[s + 1], tol, &e, &l1);
      } else {
        // Pieces away from the centre carry little mass; their error only
        // needs to be small against the total, so a shallow depth suffices.
        const bool central = cuts[s] <= centre + 8 * sd && cuts[s + 1] >= centre - 8 * sd;
        v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[s], cuts[s + 1], central ? 15 : 6,
                                                                          tol, &e);
      }
      z[mom] += v;
      err[mom] += e;
    }
  }
  if (!(z[0] > 0.0) || !std::isfinite(z[0]) || !std::isfinite(z[1]) || !std::isfinite(z[2]))
    throw QuadratureFailure("Gamma update: normalizer is not a positive finite number");
  GammaUpdateResult r;
  const double d1 = z[1] / z[0];
  r.mean = centre + d1;
  r.variance = z[2] / z[0] - d1 * d1;
  r.error = std::max({err[0] / std::abs(z[0]), err[2] / std::max(std::abs(z[2]), 1e-300)});
  if (r.error > 1e-6 || !(r.variance > 0.0))
    throw QuadratureFailure("Gamma update: quadrature tolerance not met (relative error " + fmt_double(r.error) + ")");
  return r;
}

/// Alternates exact CIR moment prediction plus Gamma refit with a Bayesian
/// update of the Gamma density by quadrature, refit again by moments.
inline std::vector<PosteriorSummary> gamma_adf(const ObservationRecord& record, const CirModel& cir,
                                               GammaState prior) {
  record.validate();
  if (record.model.p() != 1 || record.model.d() != 1) throw InvalidParams("gamma_adf: scalar channel required");
  const double c = record.model.C(0, 0);
  const double gam = record.model.Gamma(0, 0);
  std::vector<PosteriorSummary> out;
  out.reserve(record.steps());
  GammaState g = prior;
  for (std::size_t k = 1; k <= record.steps(); ++k) {
    const double dt = record.grid[k] - record.grid[k - 1];
    const double m = g.mean(), v = g.variance();
    const auto mom = cir_moments(cir, m, dt);
    const double e = std::exp(cir.beta * dt);
    g = GammaState::from_moments(mom.mean, mom.variance + e * e * v);
    const auto post = gamma_posterior_moments(g, record.increments[k - 1][0], c, gam, dt);
    g = GammaState::from_moments(post.mean, post.variance);
    PosteriorSummary s;
    s.t = record.grid[k];
    s.mean = Eigen::VectorXd::Constant(1, post.mean);
    s.cov = Eigen::MatrixXd::Constant(1, 1, post.variance);
    s.method = Method::GAMMA;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace aff
