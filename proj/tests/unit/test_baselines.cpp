#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "aff/baselines.hpp"
#include "test_util.hpp"

using namespace aff;

namespace {

const CirModel kCase1{1e-6, -0.2, 0.04};

std::vector<double> uniform_grid(double T, int n) {
  std::vector<double> g(n + 1);
  for (int i = 0; i <= n; ++i) g[i] = T * i / n;
  return g;
}

ObservationRecord cir_record(std::uint64_t seed, const CirModel& cir, CirInitialLaw law, double gamma, int n,
                             double T) {
  auto rng = make_rng(seed, stream::signal);
  const auto sp = cir_sample_path(rng, cir, law, uniform_grid(T, n));
  auto orng = make_rng(seed, stream::observation);
  return generate_observations(orng, sp, ObservationModel::scalar(1.0, gamma));
}

ObservationRecord record_from(const std::vector<double>& grid, const std::vector<double>& ys, double gamma) {
  ObservationRecord rec;
  rec.grid = grid;
  rec.model = ObservationModel::scalar(1.0, gamma);
  for (double y : ys) rec.increments.push_back(Eigen::VectorXd::Constant(1, y));
  return rec;
}

}  // namespace

TEST(Resampling, EffectiveSampleSize) {
  const std::vector<double> flat(10, 0.1);
  EXPECT_NEAR(effective_sample_size(flat), 10.0, 1e-12);
  const std::vector<double> spike = {0.0, 1.0, 0.0};
  EXPECT_NEAR(effective_sample_size(spike), 1.0, 1e-15);
}

TEST(Resampling, SystematicIsUnbiased) {
  const std::vector<double> w = {0.05, 0.3, 0.01, 0.14, 0.25, 0.25};
  const std::size_t np = 7;
  const int reps = 100000;
  std::vector<double> counts(w.size(), 0.0);
  auto rng = make_rng(99);
  for (int r = 0; r < reps; ++r)
    for (auto i : systematic_resample(rng, w, np)) counts[i] += 1.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double expect = np * w[j];
    const double f = expect - std::floor(expect);
    // Systematic offspring counts take only the two values floor and ceil.
    const double se = std::sqrt(f * (1.0 - f) / reps);
    EXPECT_NEAR(counts[j] / reps, expect, 4.0 * se + 1e-12) << "j=" << j;
  }
}

TEST(Resampling, CountsAreFloorOrCeil) {
  const std::vector<double> w = {0.1, 0.2, 0.3, 0.4};
  auto rng = make_rng(1);
  for (int r = 0; r < 1000; ++r) {
    std::array<int, 4> c{};
    for (auto i : systematic_resample(rng, w, 10)) ++c[i];
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GE(c[j], static_cast<int>(std::floor(10 * w[j] - 1e-9)));
      EXPECT_LE(c[j], static_cast<int>(std::ceil(10 * w[j] + 1e-9)));
    }
  }
}

namespace {

// Three-state chain observed through y_k = x_k dt + gamma sqrt(dt) eps.
struct Toy {
  std::array<double, 3> values = {0.0, 1.0, 2.0};
  std::array<double, 3> init = {0.5, 0.3, 0.2};
  std::array<std::array<double, 3>, 3> P = {{{0.8, 0.15, 0.05}, {0.1, 0.7, 0.2}, {0.3, 0.3, 0.4}}};
  double gamma = 0.8;
  std::vector<double> grid = {0.0, 1.0, 2.0};
  std::vector<double> ys = {1.3, 0.4};

  double lik(int s, std::size_t k) const {
    const double dt = grid[k] - grid[k - 1];
    const double r = ys[k - 1] - values[s] * dt;
    return std::exp(-0.5 * r * r / (gamma * gamma * dt));
  }

  /// Exact filtering mean after each step by enumeration.
  std::vector<double> exact_means() const {
    std::array<double, 3> pi = init;
    std::vector<double> out;
    for (std::size_t k = 1; k < grid.size(); ++k) {
      std::array<double, 3> next{};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) next[j] += pi[i] * P[i][j];
      double z = 0.0;
      for (int j = 0; j < 3; ++j) z += (next[j] *= lik(j, k));
      double m = 0.0;
      for (int j = 0; j < 3; ++j) m += (pi[j] = next[j] / z) * values[j];
      out.push_back(m);
    }
    return out;
  }

  std::vector<PosteriorSummary> run_pf(std::uint64_t seed, std::size_t np) const {
    const auto rec = record_from(grid, ys, gamma);
    PfOptions opt;
    opt.particles = np;
    auto draw = [](Rng& rng, const std::array<double, 3>& p) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double x = u(rng);
      return x < p[0] ? 0 : (x < p[0] + p[1] ? 1 : 2);
    };
    return bootstrap_pf<int>(
        seed, rec, opt, [&](Rng& rng) { return draw(rng, init); },
        [&](Rng& rng, int s, double, double) { return draw(rng, P[s]); },
        [&](int s, std::size_t k) { return std::log(lik(s, k)); },
        [&](const ParticleEnsemble<int>& e, double t) {
          PosteriorSummary out;
          out.t = t;
          double m = 0.0;
          for (std::size_t i = 0; i < e.particles.size(); ++i) m += e.weights[i] * values[e.particles[i]];
          out.mean = Eigen::VectorXd::Constant(1, m);
          out.method = Method::PF;
          return out;
        });
  }
};

}  // namespace

TEST(ParticleFilter, ToyModelMatchesEnumeration) {
  const Toy toy;
  const auto exact = toy.exact_means();
  const int runs = 10;
  std::vector<std::vector<double>> est(exact.size());
  for (int r = 0; r < runs; ++r) {
    const auto s = toy.run_pf(1000 + r, 100000);
    for (std::size_t k = 0; k < exact.size(); ++k) est[k].push_back(s[k].mean[0]);
  }
  for (std::size_t k = 0; k < exact.size(); ++k) {
    const auto st = testutil::sample_stats(est[k]);
    EXPECT_NEAR(st.mean, exact[k], 3.0 * st.mean_se) << "step " << k + 1;
  }
}

TEST(ParticleFilter, StaticModelConcentratesLikeConjugateNormal) {
  // X constant, X_0 ~ N(mu0, s0^2): the posterior after k steps is normal
  // with precision 1/s0^2 + t_k / gamma^2.
  const double mu0 = 1.0, s0 = 0.5, gamma = 0.5, x_true = 1.3;
  const int n = 20;
  const auto grid = uniform_grid(2.0, n);
  std::vector<double> ys;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int k = 1; k <= n; ++k) {
    const double dt = grid[k] - grid[k - 1];
    ys.push_back(x_true * dt + gamma * std::sqrt(dt) * normal(rng));
  }
  const auto rec = record_from(grid, ys, gamma);
  PfOptions opt;
  opt.particles = 200000;
  const auto out = bootstrap_pf<double>(
      7, rec, opt,
      [&](Rng& r) {
        std::normal_distribution<double> z(mu0, s0);
        return z(r);
      },
      [](Rng&, double x, double, double) { return x; },
      [&](double x, std::size_t k) {
        const double dt = grid[k] - grid[k - 1];
        const double r = ys[k - 1] - x * dt;
        return -0.5 * r * r / (gamma * gamma * dt);
      },
      [](const ParticleEnsemble<double>& e, double t) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < e.particles.size(); ++i) m += e.weights[i] * e.particles[i];
        for (std::size_t i = 0; i < e.particles.size(); ++i) v += e.weights[i] * (e.particles[i] - m) * (e.particles[i] - m);
        PosteriorSummary s;
        s.t = t;
        s.mean = Eigen::VectorXd::Constant(1, m);
        s.cov = Eigen::MatrixXd::Constant(1, 1, v);
        return s;
      });
  double prec = 1.0 / (s0 * s0), lin = mu0 / (s0 * s0);
  for (int k = 1; k <= n; ++k) {
    prec += (grid[k] - grid[k - 1]) / (gamma * gamma);
    lin += ys[k - 1] / (gamma * gamma);
    const double mean = lin / prec, var = 1.0 / prec;
    // Static particles lose diversity at each resampling; allow for an
    // effective sample a tenth of the nominal size.
    EXPECT_NEAR(out[k - 1].mean[0], mean, 4.0 * std::sqrt(var / (opt.particles / 10.0)));
    EXPECT_NEAR(out[k - 1].variance(), var, 0.05 * var);
  }
  EXPECT_LT(out.back().variance(), out.front().variance());
}

TEST(ParticleFilter, UninformativeObservationsGiveUnconditionalMean) {
  const auto rec = cir_record(5, kCase1, {0.005, 2e-5}, 1e6, 100, 1.0);
  PfOptions opt;
  opt.particles = 20000;
  const auto out = pf_cir(11, kCase1, {0.005, 2e-5}, rec, opt);
  ASSERT_EQ(out.size(), 100u);
  for (std::size_t k : {9u, 49u, 99u}) {
    const auto m = cir_moments(kCase1, 0.005, out[k].t);
    const double se = std::sqrt((m.variance + 4e-10 * std::exp(2 * kCase1.beta * out[k].t)) / opt.particles);
    EXPECT_NEAR(out[k].mean[0], m.mean, 4.0 * se);
  }
}

TEST(ParticleFilter, DeterministicAcrossThreadCounts) {
  const auto rec = cir_record(6, kCase1, {0.005, 2e-5}, 0.005, 50, 0.5);
  PfOptions a;
  a.particles = 10000;
  a.block = 1000;
  PfOptions b = a;
  b.threads = 3;
  const auto x = pf_cir(3, kCase1, {0.005, 2e-5}, rec, a);
  const auto y = pf_cir(3, kCase1, {0.005, 2e-5}, rec, b);
  const auto z = pf_cir(4, kCase1, {0.005, 2e-5}, rec, a);
  bool differs = false;
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k].mean[0], y[k].mean[0]);
    EXPECT_EQ(x[k].variance(), y[k].variance());
    differs = differs || x[k].mean[0] != z[k].mean[0];
  }
  EXPECT_TRUE(differs);
}

TEST(ParticleFilter, WeightCollapseReportsStep) {
  const auto rec = record_from({0.0, 1.0, 2.0}, {0.1, 0.2}, 1.0);
  PfOptions opt;
  opt.particles = 100;
  try {
    bootstrap_pf<double>(
        1, rec, opt, [](Rng&) { return 0.0; }, [](Rng&, double x, double, double) { return x; },
        [](double, std::size_t k) { return k == 2 ? -std::numeric_limits<double>::infinity() : 0.0; },
        [](const ParticleEnsemble<double>&, double t) {
          PosteriorSummary s;
          s.t = t;
          return s;
        });
    FAIL() << "expected WeightCollapse";
  } catch (const WeightCollapse& e) {
    EXPECT_EQ(e.step(), 2u);
  }
  opt.particles = 1;
  EXPECT_THROW(pf_cir(1, kCase1, {0.005, 0.0}, rec, opt), InvalidParams);
}

TEST(ParticleFilter, WishartRunsAndStaysPsd) {
  const WishartModel w{3, 4, 0.04 * Eigen::MatrixXd::Identity(3, 3)};
  const Eigen::MatrixXd x0 = Eigen::Vector3d(0.5625, 0.25, 0.0625).asDiagonal();
  const Eigen::MatrixXd z0 = wishart_factor(x0, 4);
  auto rng = make_rng(8, stream::signal);
  const auto sp = wishart_sample_path(rng, w, z0, uniform_grid(1.0, 20));
  auto orng = make_rng(8, stream::observation);
  const auto rec = generate_observations(orng, sp, ObservationModel::vech_identity(6, 0.06));
  PfOptions opt;
  opt.particles = 2000;
  const auto out = pf_wishart(2, w, z0, rec, opt);
  ASSERT_EQ(out.size(), 20u);
  for (const auto& s : out) {
    ASSERT_EQ(s.mean.size(), 6);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mat(s.mean));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_EQ(s.cov.rows(), 6);
  }
}

TEST(Ekf, ReducesToKalmanWithoutSignalNoise) {
  const CirModel cir{0.01, -0.5, 1e-9};
  const double gamma = 0.1;
  const auto grid = uniform_grid(1.0, 10);
  const std::vector<double> ys = {0.021, 0.018, 0.025, 0.02, 0.017, 0.019, 0.022, 0.016, 0.02, 0.018};
  const auto rec = record_from(grid, ys, gamma);
  const auto out = ekf_cir(rec, cir, {0.2, 0.01});
  double m = 0.2, p = 0.01;
  for (int k = 1; k <= 10; ++k) {
    const double dt = grid[k] - grid[k - 1];
    const double a = std::exp(cir.beta * dt);
    m = a * m + cir.b * (a - 1.0) / cir.beta;
    p = a * a * p;
    const double h = dt, r = gamma * gamma * dt;
    const double gain = p * h / (h * h * p + r);
    m += gain * (ys[k - 1] - h * m);
    p *= 1.0 - gain * h;
    EXPECT_NEAR(out[k - 1].mean[0], m, 1e-10);
    EXPECT_NEAR(out[k - 1].variance(), p, 1e-10);
    EXPECT_EQ(out[k - 1].method, Method::EKF);
  }
}

TEST(Ekf, UninformativeTracksUnconditionalMean) {
  const auto rec = cir_record(9, kCase1, {0.005, 2e-5}, 1e6, 200, 1.0);
  const auto out = ekf_cir(rec, kCase1, {0.005, 4e-10});
  for (const auto& s : out) EXPECT_NEAR(s.mean[0], cir_moments(kCase1, 0.005, s.t).mean, 1e-8);
}

TEST(Ekf, MeansStayInCone) {
  for (double b : {1e-6, 2e-5}) {
    const double x0 = b == 1e-6 ? 0.005 : 1e-4;
    const CirModel cir{b, -0.2, 0.04};
    const auto rec = cir_record(10, cir, {x0, 2e-5}, x0, 1000, 1.0);
    for (const auto& s : ekf_cir(rec, cir, {x0, 4e-10})) {
      EXPECT_GE(s.mean[0], 0.0);
      EXPECT_GE(s.variance(), 1e-18);
    }
  }
}

TEST(GammaAdf, StateFromMoments) {
  const auto g = GammaState::from_moments(0.005, 4e-10);
  EXPECT_NEAR(g.mean(), 0.005, 1e-18);
  EXPECT_NEAR(g.variance(), 4e-10, 1e-24);
  EXPECT_THROW(GammaState::from_moments(-0.1, 1.0), DegenerateGamma);
  EXPECT_THROW(GammaState::from_moments(0.1, 0.0), DegenerateGamma);
}

namespace {

/// Posterior mean and variance by a 1e7-point midpoint rule on (0, q).
std::pair<double, double> riemann_oracle(const GammaState& g, double y, double gamma, double dt) {
  const double q = gamma_update_upper_limit(g);
  const std::size_t n = 10000000;
  const double h = q / static_cast<double>(n);
  auto logf = [&](double x) {
    const double r = y - x * dt;
    return (g.shape - 1.0) * std::log(x) - x / g.scale - 0.5 * r * r / (gamma * gamma * dt);
  };
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; i += 1000) shift = std::max(shift, logf((static_cast<double>(i) + 0.5) * h));
  long double z0 = 0, z1 = 0, z2 = 0;
  const double c = g.mean();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * h;
    const double f = std::exp(logf(x) - shift);
    z0 += f;
    z1 += f * (x - c);
    z2 += f * (x - c) * (x - c);
  }
  const double d = static_cast<double>(z1 / z0);
  return {c + d, static_cast<double>(z2 / z0) - d * d};
}

}  // namespace

TEST(GammaAdf, UpdateMatchesRiemannOracle) {
  struct Case {
    GammaState g;
    double y, gamma, dt;
  };
  const std::vector<Case> cases = {
      {GammaState::from_moments(0.005, 4e-10), 0.0062 * 1e-3 + 0.005 * std::sqrt(1e-3) * 0.7, 0.005, 1e-3},
      {GammaState{3.0, 0.5}, 2.4, 0.4, 1.0},
      {GammaState{1.5, 2.0}, 0.3, 1.0, 0.5},
  };
  for (const auto& c : cases) {
    const auto r = gamma_posterior_moments(c.g, c.y, 1.0, c.gamma, c.dt);
    const auto [m, v] = riemann_oracle(c.g, c.y, c.gamma, c.dt);
    EXPECT_LT(testutil::rel_err(r.mean, m), 1e-6) << "shape " << c.g.shape;
    EXPECT_LT(testutil::rel_err(r.variance, v), 1e-6) << "shape " << c.g.shape;
  }
}

TEST(GammaAdf, UninformativeUpdatePreservesMoments) {
  const auto g = GammaState::from_moments(0.005, 4e-10);
  const auto r = gamma_posterior_moments(g, 0.0, 1.0, 1e6, 1e-3);
  EXPECT_LT(testutil::rel_err(r.mean, g.mean()), 1e-6);
  EXPECT_LT(testutil::rel_err(r.variance, g.variance()), 1e-6);
  const auto rec = cir_record(12, kCase1, {0.005, 2e-5}, 1e6, 100, 1.0);
  const auto out = gamma_adf(rec, kCase1, g);
  double m = g.mean(), v = g.variance();
  for (const auto& s : out) {
    const double dt = 0.01;
    const auto mom = cir_moments(kCase1, m, dt);
    const double e = std::exp(kCase1.beta * dt);
    v = mom.variance + e * e * v;
    m = mom.mean;
    EXPECT_LT(testutil::rel_err(s.mean[0], m), 1e-6);
    EXPECT_LT(testutil::rel_err(s.variance(), v), 1e-6);
  }
}

TEST(GammaAdf, Case1RunStaysInCone) {
  const auto rec = cir_record(13, kCase1, {0.005, 2e-5}, 0.005, 1000, 1.0);
  const auto out = gamma_adf(rec, kCase1, GammaState::from_moments(0.005, 4e-10));
  ASSERT_EQ(out.size(), 1000u);
  for (const auto& s : out) {
    EXPECT_GT(s.mean[0], 0.0);
    EXPECT_GT(s.variance(), 0.0);
    EXPECT_EQ(s.method, Method::GAMMA);
  }
  const auto again = gamma_adf(rec, kCase1, GammaState::from_moments(0.005, 4e-10));
  EXPECT_EQ(again.back().mean[0], out.back().mean[0]);
}
