#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aff/bench.hpp"

using namespace aff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("aff_bench_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_cir() {
  auto c = ExperimentConfig::case1();
  c.N = 40;
  c.np = 500;
  c.seed = 11;
  return c;
}

ExperimentConfig small_wishart() {
  auto c = ExperimentConfig::wishart_mse();
  c.N = 10;
  c.np = 200;
  c.replications = 3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Config, Presets) {
  const auto c1 = ExperimentConfig::preset("case1");
  EXPECT_EQ(c1.model, "cir");
  EXPECT_DOUBLE_EQ(c1.b, 1e-6);
  EXPECT_DOUBLE_EQ(c1.beta, -0.2);
  EXPECT_DOUBLE_EQ(c1.sigma, 0.04);
  EXPECT_DOUBLE_EQ(c1.gamma, 0.005);
  EXPECT_DOUBLE_EQ(c1.x0, 0.005);
  EXPECT_DOUBLE_EQ(c1.s0, 2e-5);
  EXPECT_DOUBLE_EQ(c1.T, 1.0);
  EXPECT_EQ(c1.N, 1000);
  EXPECT_EQ(c1.scheme(), Interpolation::linear);

  const auto c2 = ExperimentConfig::preset("case2");
  EXPECT_DOUBLE_EQ(c2.b, 2e-5);
  EXPECT_DOUBLE_EQ(c2.gamma, 1e-4);
  EXPECT_DOUBLE_EQ(c2.x0, 1e-4);

  const auto w = ExperimentConfig::preset("wishart-mse");
  EXPECT_EQ(w.model, "wishart");
  EXPECT_EQ(w.wishart_d, 3);
  EXPECT_EQ(w.N, 100);
  EXPECT_EQ(w.replications, 100u);
  EXPECT_EQ(w.np, 10000u);
  EXPECT_DOUBLE_EQ(w.gamma, 0.06);
  EXPECT_EQ(w.scheme(), Interpolation::cubic_spline);
  const Eigen::MatrixXd x0 = w.wishart_x0_matrix();
  EXPECT_DOUBLE_EQ(x0(0, 0), 0.5625);
  EXPECT_DOUBLE_EQ(x0(1, 1), 0.25);
  EXPECT_DOUBLE_EQ(x0(2, 2), 0.0625);
  EXPECT_DOUBLE_EQ(x0(0, 1), 0.0);

  for (const auto& c : {c1, c2, w}) EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(ExperimentConfig::preset("case3"), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  auto bad = [](auto mutate) {
    auto c = ExperimentConfig::case1();
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.N = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.T = -1.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.gamma = 0.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.sigma = 0.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.model = "heston"; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.methods = {"AFF", "UKF"}; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.interpolation = "quadratic"; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.np = 1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.replications = 0; }).validate(), ConfigError);

  auto w = ExperimentConfig::wishart_mse();
  w.methods = {"AFF", "EKF"};
  EXPECT_THROW(w.validate(), ConfigError);
  w = ExperimentConfig::wishart_mse();
  w.wishart_x0 = {1.0, 2.0};
  EXPECT_THROW(w.validate(), ConfigError);
  w.wishart_x0 = {1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0};
  EXPECT_THROW(w.validate(), ConfigError);
  w = ExperimentConfig::wishart_mse();
  w.wishart_n = 1;  // rank 3 start needs n >= 3
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Config, MethodListDropsDuplicatesAndUnconditional) {
  auto c = ExperimentConfig::case1();
  c.methods = {"EKF", "AFF", "EKF", "UNCOND"};
  const auto m = c.method_list();
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], Method::EKF);
  EXPECT_EQ(m[1], Method::AFF);
}

TEST(Config, HashIgnoresOutputLocationAndThreads) {
  auto a = ExperimentConfig::case1();
  auto b = a;
  b.out = "elsewhere";
  b.threads = 4;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 2;
  EXPECT_NE(a.hash(), b.hash());
  auto c = a;
  c.gamma *= 1.0 + 1e-15;
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(hex64(a.hash()).size(), 16u);
}

TEST(Config, FnvOfKnownString) {
  // Published FNV-1a 64 test vectors.
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(fnv1a64("foobar")), "85944171f73967e8");
}

TEST(FilterCase, ProducesExpectedColumns) {
  const auto r = run_filter_case(small_cir());
  const auto dir = scratch("columns");
  write_filter_case_csv(dir / "f.csv", r);
  const auto t = read_csv(dir / "f.csv");
  const std::vector<std::string> want = {"t",        "X_true",  "AFF_mean",   "AFF_var",   "PF_mean", "PF_var",
                                         "EKF_mean", "EKF_var", "GAMMA_mean", "GAMMA_var", "xbar",    "v"};
  EXPECT_EQ(t.header, want);
  ASSERT_EQ(t.rows.size(), 40u);
  EXPECT_FALSE(r.partial_failure());
  for (const auto& row : t.rows)
    for (const auto& cell : row) EXPECT_TRUE(std::isfinite(parse_double(cell)));
}

TEST(FilterCase, UnconditionalColumnsMatchClosedForm) {
  auto c = small_cir();
  c.s0 = 0.0;
  c.methods = {};
  const auto r = run_filter_case(c);
  for (const auto& u : r.unconditional) {
    const double e = std::exp(c.beta * u.t);
    const double mean = c.x0 * e + c.b * (e - 1.0) / c.beta;
    EXPECT_NEAR(u.mean[0], mean, 1e-15);
  }
}

TEST(FilterCase, NoMethodsEmitsTruthAndUnconditionalOnly) {
  auto c = small_cir();
  c.methods = {};
  const auto r = run_filter_case(c);
  EXPECT_TRUE(r.runs.empty());
  const auto dir = scratch("nomethods");
  write_filter_case_csv(dir / "f.csv", r);
  const auto t = read_csv(dir / "f.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"t", "X_true", "xbar", "v"}));
  EXPECT_EQ(t.rows.size(), 40u);
}

TEST(FilterCase, FailingMethodDoesNotStopOthers) {
  auto c = small_cir();
  c.s0 = 0.0;  // zero prior variance: no Gamma law matches it
  c.methods = {"AFF", "GAMMA", "EKF"};
  const auto r = run_filter_case(c);
  EXPECT_TRUE(r.partial_failure());
  ASSERT_NE(r.find(Method::GAMMA), nullptr);
  EXPECT_TRUE(r.find(Method::GAMMA)->error.has_value());
  for (const auto& s : r.find(Method::GAMMA)->summaries) EXPECT_FALSE(s.available);
  for (Method m : {Method::AFF, Method::EKF}) {
    const auto* run = r.find(m);
    ASSERT_NE(run, nullptr);
    EXPECT_FALSE(run->error.has_value());
    ASSERT_EQ(run->summaries.size(), 40u);
    for (const auto& s : run->summaries) EXPECT_TRUE(s.available);
  }
  const auto dir = scratch("partial");
  write_filter_case_csv(dir / "f.csv", r);
  const auto t = read_csv(dir / "f.csv");
  EXPECT_TRUE(std::isnan(parse_double(t.rows[3][t.column("GAMMA_mean")])));
  EXPECT_TRUE(std::isfinite(parse_double(t.rows[3][t.column("AFF_mean")])));
}

TEST(FilterCase, SameSeedGivesIdenticalFiles) {
  const auto c = small_cir();
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  auto c2 = c;
  c2.threads = 3;
  const auto r1 = run_filter_case(c);
  const auto r2 = run_filter_case(c2);
  write_filter_case_csv(d1 / "f.csv", r1);
  write_filter_case_csv(d2 / "f.csv", r2);
  EXPECT_EQ(slurp(d1 / "f.csv"), slurp(d2 / "f.csv"));
  emit_plotdata(plot_data(r1), c, d1 / "plot");
  emit_plotdata(plot_data(r2), c2, d2 / "plot");
  for (const auto& e : fs::directory_iterator(d1 / "plot"))
    EXPECT_EQ(slurp(e.path()), slurp(d2 / "plot" / e.path().filename())) << e.path();

  auto c3 = c;
  c3.seed = 12;
  const auto r3 = run_filter_case(c3);
  EXPECT_NE(r1.signal.states.back()[0], r3.signal.states.back()[0]);
}

TEST(FilterCase, RejectsWishartModel) {
  EXPECT_THROW(run_filter_case(small_wishart()), ConfigError);
}

TEST(Mse, TableShapeAndNonNegative) {
  const auto c = small_wishart();
  const auto t = run_mse_experiment(c);
  ASSERT_EQ(t.times.size(), 11u);
  EXPECT_DOUBLE_EQ(t.times.front(), 0.0);
  EXPECT_DOUBLE_EQ(t.times.back(), 1.0);
  for (Method m : {Method::AFF, Method::PF}) {
    EXPECT_EQ(t.effective_m.at(m), 3u);
    EXPECT_EQ(t.seconds.at(m).size(), 3u);
    EXPECT_TRUE(t.failures.at(m).empty());
    EXPECT_EQ(t.e.at(m)[0], 0.0);  // known start
    for (double e : t.e.at(m)) EXPECT_GE(e, 0.0);
    EXPECT_GT(t.e.at(m).back(), 0.0);
  }
  EXPECT_TRUE(std::isfinite(t.window_mean(Method::AFF, 0.5, 1.0)));
}

TEST(Mse, ConstantSignalHasZeroError) {
  auto c = small_wishart();
  c.wishart_sigma = 0.0;
  c.replications = 1;
  const auto t = run_mse_experiment(c);
  for (Method m : {Method::AFF, Method::PF})
    for (double e : t.e.at(m)) EXPECT_LT(e, 1e-20);
}

TEST(Mse, ThreadCountDoesNotChangeResults) {
  auto a = small_wishart();
  auto b = a;
  b.threads = 2;
  const auto ta = run_mse_experiment(a);
  const auto tb = run_mse_experiment(b);
  for (Method m : ta.methods) EXPECT_EQ(ta.e.at(m), tb.e.at(m));
}

TEST(Mse, MatchesDirectReplicationLoop) {
  // Recompute the table by hand from the documented seeding rule.
  const auto c = small_wishart();
  const auto t = run_mse_experiment(c);
  std::vector<double> acc(t.times.size(), 0.0);
  for (std::size_t j = 1; j <= c.replications; ++j) {
    const auto seed = derive_seed(c.seed, j);
    auto [sp, rec] = simulate(c, seed);
    PfOptions opt;
    opt.particles = c.np;
    const auto pf = pf_wishart(derive_seed(seed, stream::particle_filter), c.wishart(),
                               wishart_factor(c.wishart_x0_matrix(), c.wishart_n), rec, opt);
    for (std::size_t i = 1; i < t.times.size(); ++i)
      acc[i] += (mat(sp.states[i]) - mat(pf[i - 1].mean)).squaredNorm() / static_cast<double>(c.replications);
  }
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_NEAR(t.e.at(Method::PF)[i], acc[i], 1e-15 + 1e-12 * acc[i]);
}

TEST(Mse, WritersProduceExpectedFiles) {
  const auto c = small_wishart();
  const auto t = run_mse_experiment(c);
  const auto dir = scratch("mse");
  write_mse_csv(dir / "mse.csv", t);
  const auto tab = read_csv(dir / "mse.csv");
  EXPECT_EQ(tab.header, (std::vector<std::string>{"t", "e_AFF", "e_PF"}));
  EXPECT_EQ(tab.rows.size(), 11u);
  write_timing_json(dir / "timing.json", t.seconds);
  std::ifstream in(dir / "timing.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["PF"]["seconds"].size(), 3u);
  EXPECT_NEAR(j["PF"]["median_seconds"].get<double>(), t.median_seconds(Method::PF), 1e-12);
}

TEST(PlotData, BandColumnsAndManifest) {
  const auto c = small_cir();
  const auto r = run_filter_case(c);
  const auto dir = scratch("plot");
  const auto files = emit_plotdata(plot_data(r), c, dir);
  ASSERT_TRUE(fs::exists(dir / "manifest.json"));
  const auto t = read_csv(dir / "case1_AFF.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"t", "xhat", "band_lo", "band_hi"}));
  const auto* aff = r.find(Method::AFF);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double x = parse_double(t.rows[i][1]);
    const double sd = std::sqrt(aff->summaries[i].variance());
    EXPECT_NEAR(x, aff->summaries[i].mean[0], 1e-15);
    EXPECT_NEAR(parse_double(t.rows[i][2]), x - sd, 1e-15);
    EXPECT_NEAR(parse_double(t.rows[i][3]), x + sd, 1e-15);
  }
  std::ifstream in(dir / "manifest.json");
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m["config_hash"], hex64(c.hash()));
  EXPECT_EQ(m["seed"], c.seed);
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_EQ(m["files"].size(), files.size() - 1);
}

TEST(PlotData, EmptyResultsWriteManifestOnly) {
  const auto dir = scratch("empty");
  PlotData p;
  p.figure = "nothing";
  const auto files = emit_plotdata(p, ExperimentConfig::case1(), dir);
  ASSERT_EQ(files.size(), 1u);
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++n;
  EXPECT_EQ(n, 1u);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Util, Median) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}
