#pragma once

// Wishart signal X = Z^T Z with Z = W Sigma + z0, W an n x d Brownian matrix.
// States live in vech coordinates (column-major lower triangle). Dual
// coordinates for the Fourier argument double the off-diagonal entries so that
// the bilinear pairing <u, vech X> equals tr(U X).

#include <cmath>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "aff/affine.hpp"
#include "aff/errors.hpp"
#include "aff/rng.hpp"
#include "aff/signal_path.hpp"

namespace aff {

inline int vech_size(int d) { return d * (d + 1) / 2; }

/// Inverse of vech_size; throws InvalidParams if p is not triangular.
inline int vech_side(Eigen::Index p) {
  int d = 0;
  while (vech_size(d) < p) ++d;
  if (vech_size(d) != p) throw InvalidParams("vech: length is not a triangular number");
  return d;
}

template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> vech(const Eigen::MatrixBase<Derived>& x) {
  const Eigen::Index d = x.rows();
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> v(vech_size(static_cast<int>(d)));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) v[k++] = x(i, j);
  return v;
}

/// Symmetric matrix with vech(mat(v)) = v.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> mat(const Eigen::MatrixBase<Derived>& v) {
  const int d = vech_side(v.size());
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> x(d, d);
  Eigen::Index k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      x(i, j) = v[k];
      x(j, i) = v[k];
      ++k;
    }
  return x;
}

/// Adjoint of vech w.r.t. the trace pairing: the symmetric U with
/// tr(U X) = <y, vech X>, i.e. diagonal y_kk and off-diagonal y_kl / 2.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> vech_adjoint(const Eigen::MatrixBase<Derived>& y) {
  auto u = mat(y);
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      if (i != j) u(i, j) *= 0.5;
  return u;
}

/// Dual coordinates of a symmetric U: vech with doubled off-diagonals.
/// Inverse of vech_adjoint.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> dual_vech(const Eigen::MatrixBase<Derived>& u) {
  auto v = vech(u);
  const Eigen::Index d = u.rows();
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i, ++k)
      if (i != j) v[k] *= 2.0;
  return v;
}

struct WishartModel {
  int d = 0;
  int n = 0;
  Eigen::MatrixXd Sigma;

  /// Sigma is only required to be symmetric positive semidefinite so that
  /// the degenerate Sigma = 0 case (a constant signal) stays expressible.
  void validate() const {
    if (d < 1) throw InvalidParams("Wishart: d must be >= 1");
    if (n < d + 1) throw InvalidParams("Wishart: n must be >= d + 1");
    if (Sigma.rows() != d || Sigma.cols() != d) throw InvalidParams("Wishart: Sigma must be d x d");
    if (!detail::is_symmetric(Sigma) || !detail::is_psd(Sigma))
      throw InvalidParams("Wishart: Sigma must be symmetric positive semidefinite");
  }

  int dim() const noexcept { return vech_size(d); }

  /// F(u) = n tr(Sigma^2 U).
  cplx F(const Eigen::VectorXcd& u) const {
    const Eigen::MatrixXcd s2 = (Sigma * Sigma).cast<cplx>();
    return static_cast<double>(n) * (s2 * vech_adjoint(u)).trace();
  }

  /// R(u) = 2 U Sigma^2 U, returned in dual coordinates.
  Eigen::VectorXcd R(const Eigen::VectorXcd& u) const {
    const Eigen::MatrixXcd s2 = (Sigma * Sigma).cast<cplx>();
    const Eigen::MatrixXcd U = vech_adjoint(u);
    return dual_vech(Eigen::MatrixXcd(2.0 * U * s2 * U));
  }

  AffineModel to_affine() const {
    validate();
    const WishartModel self = *this;
    return AffineModel(
        "wishart", dim(), [self](const Eigen::VectorXcd& u) { return self.F(u); },
        [self](const Eigen::VectorXcd& u) { return self.R(u); });
  }
};

/// An n x d matrix z0 with z0^T z0 = x0. Throws FactorizationError when x0 is
/// not positive semidefinite or its rank exceeds n.
inline Eigen::MatrixXd wishart_factor(const Eigen::MatrixXd& x0, int n) {
  if (x0.rows() != x0.cols()) throw FactorizationError("wishart_factor: x0 must be square");
  if (!detail::is_symmetric(x0, 1e-10)) throw FactorizationError("wishart_factor: x0 must be symmetric");
  const Eigen::Index d = x0.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (x0 + x0.transpose()));
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  if (lam.minCoeff() < -1e-10 * scale)
    throw FactorizationError("wishart_factor: x0 is not positive semidefinite");
  Eigen::MatrixXd z0 = Eigen::MatrixXd::Zero(n, d);
  int row = 0;
  for (Eigen::Index k = d - 1; k >= 0; --k) {
    if (lam[k] <= 1e-14 * scale) continue;
    if (row >= n) throw FactorizationError("wishart_factor: rank of x0 exceeds n");
    z0.row(row++) = std::sqrt(lam[k]) * es.eigenvectors().col(k).transpose();
  }
  return z0;
}

/// Exact simulation on `grid` starting from X_0 = z0^T z0.
inline SignalPath wishart_sample_path(Rng& rng, const WishartModel& model,
                                      const Eigen::MatrixXd& z0,
                                      std::span<const double> grid) {
  model.validate();
  if (z0.rows() != model.n || z0.cols() != model.d)
    throw InvalidParams("wishart_sample_path: z0 must be n x d");
  if (grid.empty()) throw InvalidParams("wishart_sample_path: empty grid");
  SignalPath path;
  path.grid.assign(grid.begin(), grid.end());
  path.matrix_dim = model.d;
  std::normal_distribution<double> normal;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(model.n, model.d);
  auto record = [&] {
    const Eigen::MatrixXd z = w * model.Sigma + z0;
    path.states.push_back(vech(Eigen::MatrixXd(z.transpose() * z)));
  };
  record();
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double dt = grid[i] - grid[i - 1];
    if (!(dt > 0.0)) throw InvalidParams("wishart_sample_path: grid must be increasing");
    const double sd = std::sqrt(dt);
    for (int r = 0; r < model.n; ++r)
      for (int c = 0; c < model.d; ++c) w(r, c) += sd * normal(rng);
    record();
  }
  return path;
}

}  // namespace aff
