#pragma once

// Observation channel dY = C X dt + Gamma dW, its discrete right-endpoint
// Riemann-sum version, the continuous path rebuilt from the increments and
// the linearization schedule (gamma, c) of the quadratic term.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aff/errors.hpp"
#include "aff/interpolation.hpp"
#include "aff/io.hpp"
#include "aff/rng.hpp"
#include "aff/signal_path.hpp"

namespace aff {

struct ObservationModel {
  Eigen::MatrixXd C;      // p x d
  Eigen::MatrixXd Gamma;  // p x p

  int p() const { return static_cast<int>(C.rows()); }
  int d() const { return static_cast<int>(C.cols()); }

  static ObservationModel scalar(double c, double gamma) {
    return {Eigen::MatrixXd::Constant(1, 1, c), Eigen::MatrixXd::Constant(1, 1, gamma)};
  }

  /// Full vech observation of a d x d matrix signal with noise gamma0 * I.
  static ObservationModel vech_identity(int p, double gamma0) {
    return {Eigen::MatrixXd::Identity(p, p), gamma0 * Eigen::MatrixXd::Identity(p, p)};
  }

  double condition_number() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Gamma);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[s.size() - 1] == 0.0) return std::numeric_limits<double>::infinity();
    return s[0] / s[s.size() - 1];
  }

  /// Throws SingularGamma when Gamma is not invertible in floating point.
  void validate() const {
    if (C.rows() < 1 || C.cols() < 1) throw InvalidParams("observation: C must be non-empty");
    if (Gamma.rows() != C.rows() || Gamma.cols() != C.rows())
      throw InvalidParams("observation: Gamma must be p x p with p = rows(C)");
    if (!C.allFinite() || !Gamma.allFinite()) throw InvalidParams("observation: non-finite entries");
    if ((Gamma - Gamma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Gamma.cwiseAbs().maxCoeff()))
      throw InvalidParams("observation: Gamma must be symmetric");
    const double k = condition_number();
    if (!(k < 1e14)) throw SingularGamma("observation: Gamma is singular (condition number " + fmt_double(k) + ")");
  }

  /// Gamma^{-1} C, the observation map after rescaling to unit noise.
  Eigen::MatrixXd scaled_C() const {
    validate();
    return Gamma.partialPivLu().solve(C);
  }

  /// K = (Gamma^{-1} C)^T Gamma^{-1}: maps raw observation paths to the drive
  /// of the filter equations in state (dual) coordinates.
  Eigen::MatrixXd drive_map() const {
    const Eigen::MatrixXd gi = Gamma.partialPivLu().inverse();
    return scaled_C().transpose() * gi;
  }
};

struct ObservationRecord {
  std::vector<double> grid;                 // t_0 < ... < t_N
  std::vector<Eigen::VectorXd> increments;  // y_1 .. y_N
  ObservationModel model;
  Interpolation scheme = Interpolation::linear;
  std::uint64_t seed = 0;

  std::size_t steps() const noexcept { return increments.size(); }
  double horizon() const { return grid.back(); }

  /// Cumulative sums Y(t_i), one row per grid point, Y(t_0) = 0.
  Eigen::MatrixXd cumulative() const {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), model.p());
    for (std::size_t i = 0; i < increments.size(); ++i)
      y.row(static_cast<Eigen::Index>(i + 1)) = y.row(static_cast<Eigen::Index>(i)) + increments[i].transpose();
    return y;
  }

  /// Continuous observation path y(t) with y(t_i) = sum_{j <= i} y_j.
  PathInterpolant path() const { return build_path(); }

  PathInterpolant build_path() const { return PathInterpolant(grid, cumulative(), scheme); }

  void validate() const {
    if (grid.size() < 2) throw InvalidParams("observation record needs at least one step");
    if (increments.size() + 1 != grid.size())
      throw InvalidParams("observation record: need one increment per grid interval");
    for (const auto& y : increments)
      if (y.size() != model.p()) throw InvalidParams("observation record: increment dimension mismatch");
  }
};

/// Builds the interpolated path of cumulative sums anchored at y(t_0) = 0.
inline PathInterpolant build_path(const std::vector<Eigen::VectorXd>& increments,
                                  const std::vector<double>& grid, Interpolation scheme) {
  if (increments.size() + 1 != grid.size()) throw InvalidParams("build_path: need N increments for N + 1 grid points");
  const Eigen::Index p = increments.empty() ? 1 : increments.front().size();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), p);
  for (std::size_t i = 0; i < increments.size(); ++i)
    y.row(static_cast<Eigen::Index>(i + 1)) = y.row(static_cast<Eigen::Index>(i)) + increments[i].transpose();
  return PathInterpolant(grid, y, scheme);
}

struct ObservationOptions {
  Interpolation scheme = Interpolation::linear;
  /// Test hook: drop the noise term entirely.
  bool noiseless = false;
};

/// y_i = C X_{t_i} (t_i - t_{i-1}) + Gamma sqrt(t_i - t_{i-1}) eps_i.
inline ObservationRecord generate_observations(Rng& rng, const SignalPath& path,
                                               const ObservationModel& model,
                                               const ObservationOptions& opts = {}) {
  model.validate();
  if (path.size() < 2) throw InvalidParams("generate_observations: path needs two points");
  ObservationRecord rec;
  rec.grid = path.grid;
  rec.model = model;
  rec.scheme = opts.scheme;
  rec.seed = path.seed;
  std::normal_distribution<double> normal;
  Eigen::VectorXd eps(model.p());
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double dt = path.grid[i] - path.grid[i - 1];
    if (path.states[i].size() != model.d()) throw InvalidParams("generate_observations: state dimension mismatch");
    Eigen::VectorXd y = model.C * path.states[i] * dt;
    if (!opts.noiseless) {
      for (Eigen::Index k = 0; k < eps.size(); ++k) eps[k] = normal(rng);
      y += model.Gamma * eps * std::sqrt(dt);
    }
    rec.increments.push_back(std::move(y));
  }
  return rec;
}

/// The affine replacement gamma_t^T x + c_t of the quadratic term
/// |Gamma^{-1} C x|^2 / 2, linearized at x0. Constant in time.
struct LinearizationSchedule {
  Eigen::VectorXd gamma;
  double c = 0.0;
  Eigen::VectorXd x0;

  const Eigen::VectorXd& gamma_at(double) const { return gamma; }
  double c_at(double) const { return c; }

  static LinearizationSchedule zero(int d) {
    return {Eigen::VectorXd::Zero(d), 0.0, Eigen::VectorXd::Zero(d)};
  }
};

inline LinearizationSchedule make_schedule(const ObservationModel& model, const Eigen::VectorXd& x0) {
  if (x0.size() != model.d()) throw InvalidParams("make_schedule: x0 dimension mismatch");
  const Eigen::MatrixXd h = model.scaled_C();
  const Eigen::VectorXd hx = h * x0;
  return {h.transpose() * hx, 0.5 * hx.squaredNorm(), x0};
}

/// The equivalent record with unit noise: C -> Gamma^{-1} C, Gamma -> I and
/// increments y_i -> Gamma^{-1} y_i.
inline ObservationRecord normalize_record(const ObservationRecord& rec) {
  rec.model.validate();
  ObservationRecord out = rec;
  const auto lu = rec.model.Gamma.partialPivLu();
  out.model.C = lu.solve(rec.model.C);
  out.model.Gamma = Eigen::MatrixXd::Identity(rec.model.p(), rec.model.p());
  for (auto& y : out.increments) y = lu.solve(y);
  return out;
}

/// Columns i, t_i, y0, y1, ...; the seed, model and interpolation scheme go
/// to the JSON sidecar `<csv>.json`.
inline void write_increments(const std::filesystem::path& csv, const ObservationRecord& rec) {
  CsvWriter w(csv);
  std::vector<std::string> h = {"i", "t_i"};
  for (int k = 0; k < rec.model.p(); ++k) h.push_back("y" + std::to_string(k));
  w.header(h);
  for (std::size_t i = 0; i < rec.increments.size(); ++i) {
    std::vector<std::string> r = {std::to_string(i + 1), fmt_double(rec.grid[i + 1])};
    for (Eigen::Index k = 0; k < rec.increments[i].size(); ++k) r.push_back(fmt_double(rec.increments[i][k]));
    w.row_strings(r);
  }
  auto to_rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(m(i, j));
    return rows;
  };
  nlohmann::ordered_json j;
  j["seed"] = rec.seed;
  j["t0"] = rec.grid.front();
  j["interpolation"] = to_string(rec.scheme);
  j["C"] = to_rows(rec.model.C);
  j["Gamma"] = to_rows(rec.model.Gamma);
  std::ofstream side(csv.string() + ".json");
  if (!side) throw IoError("cannot write sidecar for '" + csv.string() + "'");
  side << j.dump(2) << '\n';
}

inline ObservationRecord read_increments(const std::filesystem::path& csv) {
  std::ifstream side(csv.string() + ".json");
  if (!side) throw IoError("missing sidecar '" + csv.string() + ".json'");
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad sidecar JSON: ") + e.what());
  }
  auto from_rows = [](const nlohmann::json& a) {
    const auto rows = a.get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    return m;
  };
  ObservationRecord rec;
  rec.seed = j.at("seed").get<std::uint64_t>();
  rec.scheme = parse_interpolation(j.at("interpolation").get<std::string>());
  rec.model.C = from_rows(j.at("C"));
  rec.model.Gamma = from_rows(j.at("Gamma"));
  rec.grid.push_back(j.at("t0").get<double>());
  const CsvTable t = read_csv(csv);
  const std::size_t tcol = t.column("t_i");
  for (const auto& row : t.rows) {
    rec.grid.push_back(parse_double(row[tcol]));
    Eigen::VectorXd y(rec.model.p());
    for (int k = 0; k < rec.model.p(); ++k) y[k] = parse_double(row[t.column("y" + std::to_string(k))]);
    rec.increments.push_back(y);
  }
  rec.validate();
  return rec;
}

}  // namespace aff
