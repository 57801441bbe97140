#pragma once

// Affine diffusion machinery on the canonical state space
// R_+^m x R^(d-m): admissibility checks, the vector fields F and R on complex
// arguments, and the homogeneous generalized Riccati system.

#include <complex>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aff/errors.hpp"
#include "aff/ode.hpp"

namespace aff {

using cplx = std::complex<double>;

/// Diffusion parameters (a, alpha, b, beta). The drift is b + beta * x and
/// the diffusion matrix a + sum_i alpha[i] * x_i. Coordinates 0..m-1 are the
/// nonnegative (cone) coordinates.
struct DiffusionParams {
  int m = 0;
  int d = 0;
  Eigen::MatrixXd a;
  std::vector<Eigen::MatrixXd> alpha;
  Eigen::VectorXd b;
  Eigen::MatrixXd beta;
};

namespace detail {

inline bool is_symmetric(const Eigen::MatrixXd& s, double tol = 1e-12) {
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  return (s - s.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline bool is_psd(const Eigen::MatrixXd& s, double tol = 1e-12) {
  if (s.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

}  // namespace detail

/// Checks every diffusion admissibility condition and returns the parameters
/// unchanged. Throws Inadmissible naming the first violated rule.
inline DiffusionParams validate_params(DiffusionParams p) {
  const int d = p.d;
  const int m = p.m;
  if (d < 1 || m < 0 || m > d) throw Inadmissible("dimension", 0, "need 0 <= m <= d, d >= 1");
  if (p.a.rows() != d || p.a.cols() != d) throw Inadmissible("dimension", 0, "a must be d x d");
  if (static_cast<int>(p.alpha.size()) != m)
    throw Inadmissible("dimension", 0, "alpha must hold m matrices");
  for (std::size_t i = 0; i < p.alpha.size(); ++i) {
    if (p.alpha[i].rows() != d || p.alpha[i].cols() != d)
      throw Inadmissible("dimension", i, "alpha[i] must be d x d");
  }
  if (p.b.size() != d) throw Inadmissible("dimension", 0, "b must have length d");
  if (p.beta.rows() != d || p.beta.cols() != d)
    throw Inadmissible("dimension", 0, "beta must be d x d");

  if (!detail::is_symmetric(p.a) || !detail::is_psd(p.a))
    throw Inadmissible("admiss1", 0, "a must be symmetric positive semidefinite");
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (p.a(i, j) != 0.0)
        throw Inadmissible("admiss1", static_cast<std::size_t>(i), "a_ij must vanish on the cone block");
    }
  }

  for (int i = 0; i < m; ++i) {
    const auto& al = p.alpha[i];
    if (!detail::is_symmetric(al) || !detail::is_psd(al))
      throw Inadmissible("alphacond", static_cast<std::size_t>(i),
                         "alpha^i must be symmetric positive semidefinite");
    for (int k = 0; k < m; ++k) {
      for (int j = 0; j < m; ++j) {
        if (k == i || j == i) continue;
        if (al(k, j) != 0.0)
          throw Inadmissible("alphacond", static_cast<std::size_t>(i),
                             "alpha^i_kj must vanish for k, j in I \\ {i}");
      }
    }
  }

  for (int i = 0; i < m; ++i) {
    if (!(p.b[i] >= 0.0))
      throw Inadmissible("driftcond1", static_cast<std::size_t>(i), "b_i must be >= 0 on the cone");
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j && !(p.beta(i, j) >= 0.0))
        throw Inadmissible("driftcond2", static_cast<std::size_t>(i),
                           "beta_ij must be >= 0 for i != j on the cone");
    }
  }
  for (int i = 0; i < m; ++i) {
    for (int k = m; k < d; ++k) {
      if (p.beta(i, k) != 0.0)
        throw Inadmissible("driftcond3", static_cast<std::size_t>(i),
                           "beta_ik must vanish for i in I, k in J");
    }
  }
  return p;
}

/// Anything exposing the affine vector fields F: C^d -> C and R: C^d -> C^d.
template <class M>
concept AffineVectorFields = requires(const M& m, const Eigen::VectorXcd& u) {
  { m.dim() } -> std::convertible_to<int>;
  { m.F(u) } -> std::convertible_to<cplx>;
  { m.R(u) } -> std::convertible_to<Eigen::VectorXcd>;
};

/// Type-erased affine model: a label, the state dimension and the evaluators
/// for F and R. Built-in diffusions are created from DiffusionParams; models
/// whose state space is not canonical (Wishart in vech coordinates) supply
/// their own evaluators.
class AffineModel {
 public:
  using FFn = std::function<cplx(const Eigen::VectorXcd&)>;
  using RFn = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

  AffineModel(std::string label, int dim, FFn f, RFn r,
              std::optional<DiffusionParams> params = std::nullopt)
      : label_(std::move(label)),
        dim_(dim),
        f_(std::move(f)),
        r_(std::move(r)),
        params_(std::move(params)) {}

  /// Validates `p` and builds the closed-form diffusion vector fields
  ///   F(u)   = 1/2 <u, a u> + <b, u>
  ///   R_i(u) = 1/2 <u, alpha^i u> + (beta^T u)_i   (i < m)
  ///   R_i(u) = (beta^T u)_i                        (i >= m)
  static AffineModel from_params(DiffusionParams p, std::string label = "affine") {
    p = validate_params(std::move(p));
    const Eigen::MatrixXcd a = p.a.cast<cplx>();
    const Eigen::VectorXcd b = p.b.cast<cplx>();
    const Eigen::MatrixXcd beta_t = p.beta.transpose().cast<cplx>();
    std::vector<Eigen::MatrixXcd> alpha;
    for (const auto& al : p.alpha) alpha.push_back(al.cast<cplx>());
    const int m = p.m;
    // Bilinear pairing throughout (no conjugation), hence transpose() rather
    // than Eigen's dot().
    FFn f = [a, b](const Eigen::VectorXcd& u) -> cplx {
      return 0.5 * (u.transpose() * (a * u))(0, 0) + (b.transpose() * u)(0, 0);
    };
    RFn r = [alpha, beta_t, m](const Eigen::VectorXcd& u) -> Eigen::VectorXcd {
      Eigen::VectorXcd out = beta_t * u;
      for (int i = 0; i < m; ++i) out[i] += 0.5 * (u.transpose() * (alpha[i] * u))(0, 0);
      return out;
    };
    const int d = p.d;
    return AffineModel(std::move(label), d, std::move(f), std::move(r), std::move(p));
  }

  const std::string& label() const noexcept { return label_; }
  int dim() const noexcept { return dim_; }
  const std::optional<DiffusionParams>& params() const noexcept { return params_; }

  cplx F(const Eigen::VectorXcd& u) const { return f_(u); }
  Eigen::VectorXcd R(const Eigen::VectorXcd& u) const { return r_(u); }

 private:
  std::string label_;
  int dim_;
  FFn f_;
  RFn r_;
  std::optional<DiffusionParams> params_;
};

struct VectorFieldValues {
  cplx F;
  Eigen::VectorXcd R;
};

template <AffineVectorFields Model>
VectorFieldValues eval_vector_fields(const Model& model, const Eigen::VectorXcd& u) {
  return {model.F(u), model.R(u)};
}

/// Result of a Riccati solve. For the homogeneous system `phi`/`psi` are
/// phi(T,u), psi(T,u); for the observation-driven filter system they are
/// Phi(0,T,u), Psi(0,T,u). The trajectory stores the packed state
/// [Re psi, Im psi, Re phi, Im phi] over the integration interval.
struct RiccatiSolution {
  Eigen::VectorXcd u;
  double T = 0.0;
  cplx phi;
  Eigen::VectorXcd psi;
  OdeTrajectory trajectory;

  Eigen::VectorXcd psi_at(double t) const;
  cplx phi_at(double t) const;
};

namespace detail {

inline Eigen::VectorXd pack(const Eigen::VectorXcd& psi, cplx phi) {
  const Eigen::Index d = psi.size();
  Eigen::VectorXd y(2 * d + 2);
  y.head(d) = psi.real();
  y.segment(d, d) = psi.imag();
  y[2 * d] = phi.real();
  y[2 * d + 1] = phi.imag();
  return y;
}

inline Eigen::VectorXcd unpack_psi(const Eigen::VectorXd& y) {
  const Eigen::Index d = (y.size() - 2) / 2;
  Eigen::VectorXcd psi(d);
  for (Eigen::Index i = 0; i < d; ++i) psi[i] = cplx(y[i], y[d + i]);
  return psi;
}

inline cplx unpack_phi(const Eigen::VectorXd& y) {
  const Eigen::Index d = (y.size() - 2) / 2;
  return {y[2 * d], y[2 * d + 1]};
}

}  // namespace detail

inline Eigen::VectorXcd RiccatiSolution::psi_at(double t) const {
  return detail::unpack_psi(trajectory(t));
}

inline cplx RiccatiSolution::phi_at(double t) const {
  return detail::unpack_phi(trajectory(t));
}

/// Solves d/dt phi = F(psi), d/dt psi = R(psi), phi(0) = 0, psi(0) = u on
/// [0, T]. Throws BlowUp when the solution leaves every bounded set before T
/// (real u outside the exponential-moment domain).
template <AffineVectorFields Model>
RiccatiSolution solve_homogeneous_riccati(const Model& model, double T,
                                          const Eigen::VectorXcd& u,
                                          const OdeOptions& opts = {}) {
  if (!(T > 0.0)) throw InvalidParams("solve_homogeneous_riccati: T must be > 0");
  if (u.size() != model.dim()) throw InvalidParams("solve_homogeneous_riccati: dimension mismatch");
  auto field = [&model](double, const Eigen::VectorXd& y) {
    const Eigen::VectorXcd psi = detail::unpack_psi(y);
    return detail::pack(model.R(psi), model.F(psi));
  };
  RiccatiSolution sol;
  sol.u = u;
  sol.T = T;
  sol.trajectory = integrate(field, 0.0, T, detail::pack(u, 0.0), opts);
  require_completed(sol.trajectory);
  sol.psi = detail::unpack_psi(sol.trajectory.end_value());
  sol.phi = detail::unpack_phi(sol.trajectory.end_value());
  return sol;
}

}  // namespace aff
