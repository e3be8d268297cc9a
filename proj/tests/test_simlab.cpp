#include <doctest.h>

#include <cmath>
#include <sstream>

#include "transport/simlab.hpp"

using namespace transport;
using namespace transport::sim;

namespace {

double normal_pdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2 * M_PI));
}

// Baseline bound by quadrature over (X0, X1); X2 and X3 have the same law in
// both samples, so they only add 1 + 9 * 0.25 to the conditional spread of tau(X).
EfficiencyBound baseline_bound_by_quadrature(double n0, double n1, double sigma) {
  const double p1 = n1 / (n0 + n1);
  const double p0 = 1 - p1;
  double ew2 = 0, ew2h = 0;
  const int steps = 40000;
  const double lo = -25, hi = 25, h = (hi - lo) / steps;
  for (int x1 = 0; x1 <= 1; ++x1) {
    const double b1 = x1 ? 0.4 : 0.6;
    const double b0 = x1 ? 0.6 : 0.4;
    for (int k = 0; k <= steps; ++k) {
      const double x0 = lo + k * h;
      const double f1 = normal_pdf(x0, 1, 2) * b1;
      const double f0 = normal_pdf(x0, -1, 2) * b0;
      const double mix = p1 * f1 + p0 * f0;
      const double w = p0 * f0 / mix;
      const double m = 5 + 3 * x0 - x1 - 1.5 - (-0.1);
      const double trap = (k == 0 || k == steps) ? 0.5 : 1.0;
      ew2 += trap * h * mix * w * w;
      ew2h += trap * h * mix * w * w * (m * m + 3.25);
    }
  }
  EfficiencyBound b;
  b.tau = -0.1;
  b.variance_term = sigma * sigma * 4 * ew2 / (p0 * p0);
  b.heterogeneity_term = ew2h / (p0 * p0);
  b.total = b.variance_term + b.heterogeneity_term;
  return b;
}

}  // namespace

TEST_CASE("names round trip") {
  for (Scenario s : kAllScenarios) CHECK(parse_scenario(to_string(s)) == s);
  CHECK(parse_variant("literal") == DgpVariant::Literal);
  CHECK_THROWS_AS(parse_scenario("nope"), Error);
  CHECK(covariate_count(Scenario::Sparse) == 8);
  CHECK(covariate_count(Scenario::Baseline) == 4);
}

TEST_CASE("configuration validation") {
  ScenarioConfig cfg;
  cfg.n1 = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.n1 = 100;
  cfg.sigma = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("generated shapes and treatment balance") {
  ScenarioConfig cfg;
  cfg.scenario = Scenario::Sparse;
  cfg.n1 = 1000;
  cfg.n0 = 700;
  const auto d = generate(cfg);
  CHECK(d.trial.size() == 1000);
  CHECK(d.trial.x.cols() == 8);
  CHECK(d.target.x.rows() == 700);
  CHECK(std::abs(double(d.trial.treated_count()) - 500) <= 80);
  CHECK(d.target_effects.size() == 700);
}

TEST_CASE("target law moments") {
  std::mt19937_64 rng(5);
  const MatrixXd x = draw_covariates(Scenario::Baseline, DgpVariant::Calibrated, false, 40000, rng);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  CHECK(std::abs(mean[0] + 1) <= 4 * 2 / std::sqrt(40000.0));
  CHECK(std::abs(mean[1] - 0.6) <= 0.01);
  CHECK(std::abs(mean[3] - 0.5) <= 0.01);
  const MatrixXd t = draw_covariates(Scenario::Baseline, DgpVariant::Calibrated, true, 40000, rng);
  CHECK(std::abs(t.col(0).mean() - 1) <= 0.04);
  CHECK(std::abs(t.col(1).mean() - 0.4) <= 0.01);
}

TEST_CASE("baseline conditional effect averages to the truth") {
  ScenarioConfig cfg;
  cfg.n0 = 20000;
  cfg.seed = 3;
  const auto d = generate(cfg);
  CHECK(std::abs(d.conditional_sate() + 0.1) <= 0.1);
  CHECK(std::abs(d.realized_sate() - d.conditional_sate()) <= 0.05);
}

TEST_CASE("outcome means ignore the extra sparse covariates") {
  ScenarioConfig cfg;
  cfg.scenario = Scenario::Sparse;
  Eigen::RowVectorXd a(8), b(8);
  a << 0.3, 1, -0.2, 0, 5, 0, -3, 1;
  b = a;
  b.tail(4) << -7, 1, 2, 0;
  CHECK(mu0(cfg, a) == mu0(cfg, b));
  CHECK(mu1(cfg, a) == mu1(cfg, b));
  CHECK(mu1(cfg, a) - mu0(cfg, a) == doctest::Approx(5 + 0.9 - 1 - 0.2));
}

TEST_CASE("true population effects") {
  CHECK(analytic_true_pate(Scenario::Baseline) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(analytic_true_pate(Scenario::Sparse) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(analytic_true_pate(Scenario::Interaction) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(analytic_true_pate(Scenario::Positivity) == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(analytic_true_pate(Scenario::Interaction, DgpVariant::Literal) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(analytic_true_pate(Scenario::Positivity, DgpVariant::Literal) ==
        doctest::Approx(6.2).epsilon(1e-12));
  CHECK(analytic_true_pate(Scenario::Baseline, DgpVariant::Calibrated, false) == 5.0);

  for (Scenario s : kAllScenarios) {
    for (DgpVariant v : {DgpVariant::Calibrated, DgpVariant::Literal}) {
      const OracleValue o = oracle_true_pate(s, 400000, 11, v);
      CHECK(std::abs(o.value - analytic_true_pate(s, v)) <= 4 * o.mc_se);
    }
  }
}

TEST_CASE("density ratio matches the component laws") {
  Eigen::RowVectorXd x(4);
  x << 0.5, 1, 0, 0;
  // N(1,2) vs N(-1,2) at 0.5 and Bern(0.4) vs Bern(0.6) at 1
  const double expect = (-0.5 * 0.0625 + 0.5 * 0.5625) + std::log(0.4 / 0.6);
  CHECK(log_density_ratio(Scenario::Baseline, DgpVariant::Calibrated, x) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("efficiency bound") {
  ScenarioConfig cfg;
  cfg.n0 = 1000;
  cfg.n1 = 1000;
  SUBCASE("agrees with quadrature") {
    const EfficiencyBound mc = oracle_efficiency_bound(cfg, 2'000'000);
    const EfficiencyBound q = baseline_bound_by_quadrature(1000, 1000, 1);
    CHECK(mc.tau == doctest::Approx(-0.1).epsilon(0.05));
    CHECK(mc.variance_term == doctest::Approx(q.variance_term).epsilon(0.01));
    CHECK(mc.heterogeneity_term == doctest::Approx(q.heterogeneity_term).epsilon(0.01));
    cfg.n1 = 4000;
    const EfficiencyBound mc4 = oracle_efficiency_bound(cfg, 2'000'000);
    const EfficiencyBound q4 = baseline_bound_by_quadrature(1000, 4000, 1);
    CHECK(mc4.total == doctest::Approx(q4.total).epsilon(0.01));
  }
  SUBCASE("noise scales the variance term only") {
    const EfficiencyBound a = oracle_efficiency_bound(cfg, 200000);
    cfg.sigma = 2;
    const EfficiencyBound b = oracle_efficiency_bound(cfg, 200000);
    CHECK(b.variance_term == doctest::Approx(4 * a.variance_term).epsilon(1e-12));
    CHECK(b.heterogeneity_term == a.heterogeneity_term);
  }
  SUBCASE("homogeneous effects drop the heterogeneity term") {
    cfg.effect_modification = false;
    const EfficiencyBound b = oracle_efficiency_bound(cfg, 200000);
    CHECK(b.heterogeneity_term == 0.0);
    CHECK(b.tau == doctest::Approx(5).epsilon(1e-12));
    CHECK(b.variance_term >= 4.0);
  }
}

TEST_CASE("replication is deterministic across thread counts") {
  ScenarioConfig cell;
  cell.n0 = 500;
  cell.n1 = 200;
  const auto a = run_table1_cell(cell, 12, 7, -0.1, 1);
  const auto b = run_table1_cell(cell, 12, 7, -0.1, 4);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].estimate == b.records[i].estimate);
    CHECK(a.records[i].converged == b.records[i].converged);
  }
  std::ostringstream sa, sb;
  write_table1_csv(sa, {a});
  write_table1_csv(sb, {b});
  CHECK(sa.str() == sb.str());

  const auto other = run_table1_cell(cell, 12, 8, -0.1, 2);
  CHECK(other.records[0].estimate != a.records[0].estimate);
}

TEST_CASE("replicate streams differ by cell and replicate") {
  ScenarioConfig a, b;
  b.n0 = 500;
  auto r1 = replicate_stream(1, 1, a, 0);
  auto r2 = replicate_stream(1, 1, a, 1);
  auto r3 = replicate_stream(1, 1, b, 0);
  auto r4 = replicate_stream(1, 1, a, 0);
  const auto v1 = r1();
  CHECK(v1 != r2());
  CHECK(v1 != r3());
  CHECK(v1 == r4());
}

TEST_CASE("coverage cell bookkeeping") {
  ScenarioConfig cell;
  cell.n0 = 500;
  cell.n1 = 1000;
  const auto s = run_table2_cell(cell, 20, 3, -0.1, 2);
  CHECK(s.replicates == 20);
  CHECK(s.monotonicity_violations == 0);
  for (CoverageColumn c : kAllCoverageColumns) {
    CHECK(s.at(c) >= 0);
    CHECK(s.at(c) <= 1);
  }
  CHECK(s.usable[0] + s.excluded == 20);
  CHECK(std::abs(s.mean_realized_sate + 0.1) <= 0.5);
  std::ostringstream out;
  write_table2_csv(out, {s});
  CHECK(out.str().find("eb_pate_individual") != std::string::npos);
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 5) throw Error(ErrorKind::Config, "boom");
  }));
}
