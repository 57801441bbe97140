#pragma once

// Interpolation of vector-valued data on a strictly increasing grid:
// piecewise linear or natural cubic spline, component by component.

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aff/errors.hpp"

namespace aff {

enum class Interpolation { linear, cubic_spline };

inline std::string to_string(Interpolation s) {
  return s == Interpolation::linear ? "linear" : "cubic-spline";
}

inline Interpolation parse_interpolation(const std::string& s) {
  if (s == "linear") return Interpolation::linear;
  if (s == "cubic-spline" || s == "spline" || s == "cubic") return Interpolation::cubic_spline;
  throw InvalidParams("unknown interpolation scheme '" + s + "'");
}

class PathInterpolant {
 public:
  PathInterpolant() = default;

  /// `values` holds one row per grid point.
  PathInterpolant(std::vector<double> grid, Eigen::MatrixXd values, Interpolation scheme)
      : grid_(std::move(grid)), values_(std::move(values)), scheme_(scheme) {
    if (grid_.empty() || static_cast<Eigen::Index>(grid_.size()) != values_.rows())
      throw InvalidParams("PathInterpolant: grid and values disagree");
    for (std::size_t i = 1; i < grid_.size(); ++i)
      if (!(grid_[i] > grid_[i - 1])) throw InvalidParams("PathInterpolant: grid must be increasing");
    if (scheme_ == Interpolation::cubic_spline) second_ = natural_second_derivatives();
  }

  Interpolation scheme() const noexcept { return scheme_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index dim() const noexcept { return values_.cols(); }
  double t_min() const { return grid_.front(); }
  double t_max() const { return grid_.back(); }

  Eigen::VectorXd operator()(double t) const {
    Eigen::VectorXd out(values_.cols());
    eval(t, out);
    return out;
  }

  /// Allocation-free evaluation into `out` (resized on first use).
  void eval(double t, Eigen::VectorXd& out) const {
    if (grid_.empty() || t < grid_.front() || t > grid_.back()) throw OutOfDomain(t);
    out.resize(values_.cols());
    if (grid_.size() == 1) {
      out = values_.row(0).transpose();
      return;
    }
    auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
    if (hi >= grid_.size()) hi = grid_.size() - 1;
    const std::size_t lo = hi - 1;
    const double h = grid_[hi] - grid_[lo];
    const double a = (grid_[hi] - t) / h;
    const double b = 1.0 - a;
    if (t == grid_[lo]) {
      out = values_.row(lo).transpose();
      return;
    }
    if (t == grid_[hi]) {
      out = values_.row(hi).transpose();
      return;
    }
    out = a * values_.row(lo).transpose() + b * values_.row(hi).transpose();
    if (scheme_ == Interpolation::cubic_spline) {
      const double ca = (a * a * a - a) * h * h / 6.0;
      const double cb = (b * b * b - b) * h * h / 6.0;
      out += ca * second_.row(lo).transpose() + cb * second_.row(hi).transpose();
    }
  }

 private:
  // Tridiagonal (Thomas) solve for the spline's second derivatives with
  // natural end conditions M_0 = M_N = 0.
  Eigen::MatrixXd natural_second_derivatives() const {
    const std::size_t n = grid_.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(values_.rows(), values_.cols());
    if (n < 3) return m;
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), lower(k);
    Eigen::MatrixXd rhs(k, values_.cols());
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = grid_[i] - grid_[i - 1];
      const double h1 = grid_[i + 1] - grid_[i];
      diag[i - 1] = (h0 + h1) / 3.0;
      lower[i - 1] = h0 / 6.0;
      upper[i - 1] = h1 / 6.0;
      rhs.row(i - 1) = (values_.row(i + 1) - values_.row(i)) / h1 -
                       (values_.row(i) - values_.row(i - 1)) / h0;
    }
    for (std::size_t i = 1; i < k; ++i) {
      const double w = lower[i] / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs.row(i) -= w * rhs.row(i - 1);
    }
    rhs.row(k - 1) /= diag[k - 1];
    for (std::size_t i = k - 1; i-- > 0;) rhs.row(i) = (rhs.row(i) - upper[i] * rhs.row(i + 1)) / diag[i];
    m.middleRows(1, static_cast<Eigen::Index>(k)) = rhs;
    return m;
  }

  std::vector<double> grid_;
  Eigen::MatrixXd values_;
  Eigen::MatrixXd second_;
  Interpolation scheme_ = Interpolation::linear;
};

}  // namespace aff
