#pragma once

// Adaptive Dormand-Prince 5(4) integration of real ODE systems with cubic
// Hermite dense output and blow-up detection. Complex systems are integrated
// by the callers as real systems of doubled dimension.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aff/errors.hpp"

namespace aff {

namespace detail {
struct TrajectoryAccess;
}

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  /// Sup-norm of the solution above which integration stops with blew_up.
  double blowup_threshold = 1e8;
  double max_step = std::numeric_limits<double>::infinity();
  /// 0 selects the initial step automatically.
  double initial_step = 0.0;
  std::size_t max_steps = 50'000'000;
};

enum class OdeStatus { completed, blew_up };

/// Accepted steps of one integration. The grid is stored in increasing time
/// order regardless of the integration direction.
class OdeTrajectory {
 public:
  OdeTrajectory() = default;

  const std::vector<double>& grid() const noexcept { return t_; }
  const Eigen::VectorXd& value(std::size_t i) const { return y_[i]; }
  const Eigen::VectorXd& derivative(std::size_t i) const { return f_[i]; }
  std::size_t size() const noexcept { return t_.size(); }

  OdeStatus status() const noexcept { return status_; }
  bool completed() const noexcept { return status_ == OdeStatus::completed; }
  /// Time at which the blow-up threshold was crossed (NaN if completed).
  double blowup_time() const noexcept { return blowup_time_; }

  double start_time() const noexcept { return t_start_; }
  double end_time() const noexcept { return t_end_; }
  /// Value at the integration start point.
  const Eigen::VectorXd& start_value() const {
    return forward_ ? y_.front() : y_.back();
  }
  /// Value at the last accepted point in integration order.
  const Eigen::VectorXd& end_value() const {
    return forward_ ? y_.back() : y_.front();
  }

  /// Dense evaluation by cubic Hermite interpolation between accepted steps.
  Eigen::VectorXd operator()(double t) const {
    if (t_.empty() || t < t_.front() || t > t_.back()) throw OutOfDomain(t);
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - t_.begin());
    if (hi >= t_.size()) return y_.back();
    if (hi == 0) return y_.front();
    const std::size_t lo = hi - 1;
    const double h = t_[hi] - t_[lo];
    const double s = (t - t_[lo]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * y_[lo] + (h10 * h) * f_[lo] + h01 * y_[hi] + (h11 * h) * f_[hi];
  }

 private:
  friend struct detail::TrajectoryAccess;

  void push(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& f) {
    t_.push_back(t);
    y_.push_back(y);
    f_.push_back(f);
  }
  void finish(bool forward, double t_start, double t_end) {
    forward_ = forward;
    t_start_ = t_start;
    t_end_ = t_end;
    if (!forward) {
      std::reverse(t_.begin(), t_.end());
      std::reverse(y_.begin(), y_.end());
      std::reverse(f_.begin(), f_.end());
    }
  }

  std::vector<double> t_;
  std::vector<Eigen::VectorXd> y_;
  std::vector<Eigen::VectorXd> f_;
  OdeStatus status_ = OdeStatus::completed;
  double blowup_time_ = std::numeric_limits<double>::quiet_NaN();
  bool forward_ = true;
  double t_start_ = 0.0;
  double t_end_ = 0.0;
};

namespace detail {

struct TrajectoryAccess {
  static void push(OdeTrajectory& tr, double t, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& f) {
    tr.push(t, y, f);
  }
  static void finish(OdeTrajectory& tr, bool forward, double t_start, double t_end) {
    tr.finish(forward, t_start, t_end);
  }
  static void blew_up(OdeTrajectory& tr, double t) {
    tr.status_ = OdeStatus::blew_up;
    tr.blowup_time_ = t;
  }
};

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

struct StepResult {
  Eigen::VectorXd y;
  Eigen::VectorXd f;
  Eigen::VectorXd err;
};

template <class Field>
StepResult dopri5_step(Field& field, double t, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& k1, double h,
                       std::optional<double> t_end = std::nullopt) {
  using T = Dopri5;
  // Stages with c = 1 may be pinned just inside a breakpoint so that a field
  // that jumps there is sampled from the current segment only.
  const double t1 = t_end.value_or(t + h);
  const Eigen::VectorXd k2 = field(t + T::c2 * h, Eigen::VectorXd(y + h * (T::a21 * k1)));
  const Eigen::VectorXd k3 =
      field(t + T::c3 * h, Eigen::VectorXd(y + h * (T::a31 * k1 + T::a32 * k2)));
  const Eigen::VectorXd k4 = field(
      t + T::c4 * h, Eigen::VectorXd(y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3)));
  const Eigen::VectorXd k5 =
      field(t + T::c5 * h, Eigen::VectorXd(y + h * (T::a51 * k1 + T::a52 * k2 +
                                                    T::a53 * k3 + T::a54 * k4)));
  const Eigen::VectorXd k6 =
      field(t1, Eigen::VectorXd(y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 +
                                            T::a64 * k4 + T::a65 * k5)));
  StepResult r;
  r.y = y + h * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
  r.f = field(t1, r.y);
  r.err = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 +
               T::e7 * r.f);
  return r;
}

inline double scaled_rms(const Eigen::VectorXd& v, const Eigen::VectorXd& y0,
                         const Eigen::VectorXd& y1, const OdeOptions& o) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double q = v[i] / sc;
    s += q * q;
  }
  return std::sqrt(s / static_cast<double>(std::max<Eigen::Index>(1, v.size())));
}

inline bool exceeds(const Eigen::VectorXd& y, double threshold) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || std::abs(y[i]) > threshold) return true;
  }
  return false;
}

template <class Field>
double initial_step(Field& field, double t0, const Eigen::VectorXd& y0,
                    const Eigen::VectorXd& f0, double dir, const OdeOptions& o, double span) {
  const double d0 = scaled_rms(y0, y0, y0, o);
  const double d1 = scaled_rms(f0, y0, y0, o);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  // The probe step must stay inside the first segment, where the field is
  // known to be defined and smooth.
  h0 = std::min(h0, span);
  const Eigen::VectorXd y1 = y0 + dir * h0 * f0;
  const Eigen::VectorXd f1 = field(t0 + dir * h0, y1);
  const double d2 = scaled_rms(Eigen::VectorXd(f1 - f0), y0, y0, o) / h0;
  const double dm = std::max(d1, d2);
  const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  return std::min(100 * h0, h1);
}

}  // namespace detail

/// Integrates y' = field(t, y) from t0 to t1 (either direction) with adaptive
/// Dormand-Prince 5(4) steps whose local error satisfies the mixed
/// rtol/atol criterion. Steps land exactly on every breakpoint strictly
/// between t0 and t1, so fields that are only piecewise smooth in t are
/// integrated segment by segment. When the solution sup-norm crosses
/// opts.blowup_threshold (or turns non-finite) the trajectory is returned
/// with status blew_up.
template <class Field>
OdeTrajectory integrate(Field&& field, double t0, double t1,
                        const Eigen::VectorXd& y0, const OdeOptions& opts = {},
                        std::span<const double> breakpoints = {}) {
  OdeTrajectory traj;
  const bool forward = t1 >= t0;
  const double dir = forward ? 1.0 : -1.0;

  std::vector<double> stops;
  for (double b : breakpoints) {
    if (dir * (b - t0) > 0 && dir * (t1 - b) > 0) stops.push_back(b);
  }
  std::sort(stops.begin(), stops.end());
  if (!forward) std::reverse(stops.begin(), stops.end());
  stops.push_back(t1);

  double t = t0;
  Eigen::VectorXd y = y0;
  Eigen::VectorXd f = field(t, y);
  detail::TrajectoryAccess::push(traj, t, y, f);
  if (t0 == t1) {
    detail::TrajectoryAccess::finish(traj, forward, t0, t1);
    return traj;
  }
  if (detail::exceeds(y, opts.blowup_threshold)) {
    detail::TrajectoryAccess::blew_up(traj, t);
    detail::TrajectoryAccess::finish(traj, forward, t0, t0);
    return traj;
  }

  double h = opts.initial_step > 0 ? opts.initial_step
                                   : detail::initial_step(field, t, y, f, dir, opts, std::abs(stops.front() - t0));
  std::size_t steps = 0;
  constexpr double eps = std::numeric_limits<double>::epsilon();

  for (double stop : stops) {
    while (dir * (stop - t) > 0) {
      if (++steps > opts.max_steps) throw StepSizeUnderflow(t);
      h = std::min({h, opts.max_step});
      const double remaining = std::abs(stop - t);
      bool last = false;
      if (h >= remaining * (1 - 1e-12)) {
        h = remaining;
        last = true;
      } else if (h > 0.5 * remaining) {
        // Avoid leaving a sliver before the stop.
        h = 0.5 * remaining;
      }
      if (h < 16 * eps * std::max(1.0, std::abs(t))) throw StepSizeUnderflow(t);

      auto step = last ? detail::dopri5_step(field, t, y, f, dir * h, std::nextafter(stop, t))
                       : detail::dopri5_step(field, t, y, f, dir * h);
      const double err = detail::scaled_rms(step.err, y, step.y, opts);
      if (!std::isfinite(err)) {
        h *= 0.2;
        continue;
      }
      if (err <= 1.0) {
        t = last ? stop : t + dir * h;
        y = std::move(step.y);
        f = std::move(step.f);
        detail::TrajectoryAccess::push(traj, t, y, f);
        if (detail::exceeds(y, opts.blowup_threshold)) {
          detail::TrajectoryAccess::blew_up(traj, t);
          detail::TrajectoryAccess::finish(traj, forward, t0, t);
          return traj;
        }
        const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        // Keep the last full step size when the step was truncated by a stop.
        h = last ? std::max(h, h * fac) : h * fac;
      } else {
        h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
    // The field may jump at a breakpoint; restart the next segment from its
    // own one-sided value instead of the FSAL stage of the previous one.
    if (stop != t1) f = field(t, y);
  }
  detail::TrajectoryAccess::finish(traj, forward, t0, t1);
  return traj;
}

/// Fixed-step fifth-order Dormand-Prince integration (no error control);
/// used for convergence-order checks.
template <class Field>
OdeTrajectory integrate_fixed(Field&& field, double t0, double t1,
                              const Eigen::VectorXd& y0, std::size_t nsteps) {
  OdeTrajectory traj;
  const double h = (t1 - t0) / static_cast<double>(nsteps);
  double t = t0;
  Eigen::VectorXd y = y0;
  Eigen::VectorXd f = field(t, y);
  detail::TrajectoryAccess::push(traj, t, y, f);
  for (std::size_t i = 0; i < nsteps; ++i) {
    auto step = detail::dopri5_step(field, t, y, f, h);
    t = (i + 1 == nsteps) ? t1 : t0 + static_cast<double>(i + 1) * h;
    y = std::move(step.y);
    f = std::move(step.f);
    detail::TrajectoryAccess::push(traj, t, y, f);
  }
  detail::TrajectoryAccess::finish(traj, t1 >= t0, t0, t1);
  return traj;
}

/// Throws BlowUp when the trajectory did not reach its end point.
inline const OdeTrajectory& require_completed(const OdeTrajectory& traj) {
  if (!traj.completed()) throw BlowUp(traj.blowup_time());
  return traj;
}

}  // namespace aff
