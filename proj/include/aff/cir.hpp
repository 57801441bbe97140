#pragma once

// Cox-Ingersoll-Ross signal: dX = (b + beta X) dt + sigma sqrt(X) dB.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "aff/affine.hpp"
#include "aff/errors.hpp"
#include "aff/rng.hpp"
#include "aff/signal_path.hpp"

namespace aff {

struct CirModel {
  double b = 0.0;
  double beta = 0.0;
  double sigma = 0.0;

  void validate() const {
    if (!(b >= 0.0)) throw InvalidParams("CIR: b must be >= 0");
    if (!(sigma > 0.0)) throw InvalidParams("CIR: sigma must be > 0");
    if (!std::isfinite(beta)) throw InvalidParams("CIR: beta must be finite");
  }

  int dim() const noexcept { return 1; }
  cplx F(const Eigen::VectorXcd& u) const { return b * u[0]; }
  Eigen::VectorXcd R(const Eigen::VectorXcd& u) const {
    Eigen::VectorXcd r(1);
    r[0] = beta * u[0] + 0.5 * sigma * sigma * u[0] * u[0];
    return r;
  }

  DiffusionParams params() const {
    DiffusionParams p;
    p.m = 1;
    p.d = 1;
    p.a = Eigen::MatrixXd::Zero(1, 1);
    p.alpha = {Eigen::MatrixXd::Constant(1, 1, sigma * sigma)};
    p.b = Eigen::VectorXd::Constant(1, b);
    p.beta = Eigen::MatrixXd::Constant(1, 1, beta);
    return p;
  }

  AffineModel to_affine() const { return AffineModel::from_params(params(), "cir"); }
};

/// Initial law X_0 = max(0, Z), Z ~ N(x0, s0^2).
struct CirInitialLaw {
  double x0 = 0.0;
  double s0 = 0.0;
};

struct CirMoments {
  double mean = 0.0;
  double variance = 0.0;
};

namespace detail {

/// (e^{beta t} - 1) / beta, continuous at beta = 0.
inline double expm1_over(double beta, double t) {
  const double z = beta * t;
  if (std::abs(z) < 1e-10) return t * (1.0 + 0.5 * z);
  return std::expm1(z) / beta;
}

}  // namespace detail

/// Exact conditional mean and variance of X_t given X_0 = x.
inline CirMoments cir_moments(const CirModel& model, double x, double t) {
  const double f1 = detail::expm1_over(model.beta, t);
  const double ebt = std::exp(model.beta * t);
  const double s2 = model.sigma * model.sigma;
  return {x * ebt + model.b * f1, s2 * x * ebt * f1 + 0.5 * model.b * s2 * f1 * f1};
}

/// Draw from the exact transition law: a scaled noncentral chi-square with
/// 4b/sigma^2 degrees of freedom, sampled as a Poisson mixture of gammas.
inline double cir_exact_step(Rng& rng, const CirModel& model, double x, double dt) {
  if (!(model.sigma > 0.0)) throw InvalidParams("cir_exact_step: sigma must be > 0");
  if (!(model.b >= 0.0)) throw InvalidParams("cir_exact_step: b must be >= 0");
  if (!(dt > 0.0) || !(x >= 0.0)) throw InvalidParams("cir_exact_step: need dt > 0, x >= 0");
  const double s2 = model.sigma * model.sigma;
  const double c = 0.25 * s2 * detail::expm1_over(model.beta, dt);
  const double dof = 4.0 * model.b / s2;
  const double noncentrality = x * std::exp(model.beta * dt) / c;
  long long n = 0;
  if (noncentrality > 0.0) {
    std::poisson_distribution<long long> pois(0.5 * noncentrality);
    n = pois(rng);
  }
  const double shape = 0.5 * dof + static_cast<double>(n);
  if (shape <= 0.0) return 0.0;
  std::gamma_distribution<double> gam(shape, 1.0);
  return 2.0 * c * gam(rng);
}

/// Mean and variance of max(0, Z).
inline CirMoments initial_moments(const CirInitialLaw& law) {
  if (law.s0 == 0.0) return {std::max(0.0, law.x0), 0.0};
  const double z = law.x0 / law.s0;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double m1 = law.x0 * cdf + law.s0 * pdf;
  const double m2 = (law.x0 * law.x0 + law.s0 * law.s0) * cdf + law.x0 * law.s0 * pdf;
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

inline double sample_cir_initial(Rng& rng, const CirInitialLaw& law) {
  if (law.s0 == 0.0) return std::max(0.0, law.x0);
  std::normal_distribution<double> normal(law.x0, law.s0);
  return std::max(0.0, normal(rng));
}

/// Samples X_0 from the clamped normal and chains exact transitions.
inline SignalPath cir_sample_path(Rng& rng, const CirModel& model,
                                  const CirInitialLaw& law,
                                  std::span<const double> grid) {
  model.validate();
  if (grid.empty()) throw InvalidParams("cir_sample_path: empty grid");
  SignalPath path;
  path.grid.assign(grid.begin(), grid.end());
  path.states.reserve(grid.size());
  double x = sample_cir_initial(rng, law);
  path.states.push_back(Eigen::VectorXd::Constant(1, x));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double dt = grid[i] - grid[i - 1];
    if (!(dt > 0.0)) throw InvalidParams("cir_sample_path: grid must be increasing");
    x = cir_exact_step(rng, model, x, dt);
    path.states.push_back(Eigen::VectorXd::Constant(1, x));
  }
  return path;
}

}  // namespace aff
