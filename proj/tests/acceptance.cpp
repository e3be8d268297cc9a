// End-to-end checks, one PASS/FAIL line per criterion.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "transport/cli.hpp"
#include "transport/csv_io.hpp"
#include "transport/inference.hpp"
#include "transport/simlab.hpp"

using namespace transport;
using namespace transport::sim;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << detail
            << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

std::string cell_name(const ScenarioConfig& c) {
  return std::string(to_string(c.scenario)) + " n0=" + std::to_string(c.n0) +
         " n1=" + std::to_string(c.n1);
}

double arm_residual(const MatrixXd& c, const VectorXd& gamma, const VectorXd& z, double arm,
                    const VectorXd& theta0, double n1) {
  VectorXd s = VectorXd::Zero(c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    if (z[i] == arm) s += gamma[i] * c.row(i).transpose();
  }
  return (s - n1 * theta0).lpNorm<Eigen::Infinity>();
}

// ---------------------------------------------------------------------------

void bias_efficiency_convergence() {
  Table1Options opts;
  opts.replicates = 1000;
  opts.seed = 2024;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_table1(opts);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  print_table1(std::cout, rows);

  // Bias.
  bool ok1 = secs < 600;
  std::string why;
  for (const auto& r : rows) {
    auto z = [&](Method m) {
      const auto& s = r.at(m);
      return std::abs(s.mean - r.truth) / s.mean_se();
    };
    for (Method m : {Method::EB, Method::TMLE, Method::MOM}) {
      if (!(z(m) <= 3)) {
        ok1 = false;
        why += " " + std::string(to_string(m)) + "@" + cell_name(r.cell) + " z=" + fmt(z(m));
      }
    }
    if (r.cell.scenario == Scenario::Interaction &&
        !(std::abs(r.at(Method::OM).mean - r.truth) > 0.3)) {
      ok1 = false;
      why += " OM unbiased@" + cell_name(r.cell);
    }
    if (r.cell.scenario == Scenario::Positivity && z(Method::IOSW) <= 3) {
      ok1 = false;
      why += " IOSW unbiased@" + cell_name(r.cell);
    }
  }
  report(1, ok1,
         "EB/TMLE/MOM within 3 MC SE of the oracle truth in all " + std::to_string(rows.size()) +
             " cells, OM biased under interaction, IOSW biased under positivity; grid took " +
             fmt(secs, 3) + " s" + why);

  // Efficiency ordering.
  bool ok2 = true;
  why.clear();
  double worst_tmle = 0;
  for (const auto& r : rows) {
    const double eb = r.at(Method::EB).mc_se;
    if (eb > r.at(Method::MOM).mc_se) {
      ok2 = false;
      why += " EB>MOM@" + cell_name(r.cell);
    }
    const double ratio = eb / r.at(Method::TMLE).mc_se;
    worst_tmle = std::max(worst_tmle, ratio);
    if (ratio > 1.1) {
      ok2 = false;
      why += " EB/TMLE=" + fmt(ratio, 4) + "@" + cell_name(r.cell);
    }
    if (r.cell.scenario == Scenario::Baseline) {
      for (Method m : {Method::EB, Method::TMLE, Method::MOM, Method::OM}) {
        if (r.at(m).mc_se >= r.at(Method::IOSW).mc_se) {
          ok2 = false;
          why += " IOSW not largest@" + cell_name(r.cell);
        }
      }
    }
  }
  report(2, ok2,
         "EB SE <= MOM SE and <= 1.1 x TMLE SE everywhere (worst EB/TMLE ratio " +
             fmt(worst_tmle, 4) + "), IOSW SE largest in baseline cells" + why);

  // Convergence.
  bool ok3 = true;
  std::string rates;
  for (const auto& r : rows) {
    if (r.cell.scenario != Scenario::Sparse || r.cell.n1 != 200) continue;
    const double rate = r.at(Method::EB).convergence_rate();
    rates += " " + fmt(rate, 3) + " (n0=" + std::to_string(r.cell.n0) + ")";
    ok3 = ok3 && rate >= 0.55 && rate <= 0.80;
  }
  report(3, ok3, "sparse n1=200 EB convergence fraction in [0.55, 0.80]:" + rates);
}

void coverage() {
  Table2Options opts;
  opts.replicates = 1000;
  opts.seed = 2024;
  const auto rows = run_table2(opts);
  print_table2(std::cout, rows);
  bool ok = true;
  std::string why;
  for (const auto& r : rows) {
    const double sate = r.at(CoverageColumn::EbSate);
    const double ind = r.at(CoverageColumn::EbPateIndividual);
    const std::string name = "n0=" + std::to_string(r.cell.n0) + " n1=" + std::to_string(r.cell.n1);
    if (sate < 0.92 || sate > 0.98) {
      ok = false;
      why += " sate=" + fmt(sate, 3) + "@" + name;
    }
    if (ind < 0.92 || ind > 0.98) {
      ok = false;
      why += " pate_individual=" + fmt(ind, 3) + "@" + name;
    }
    if (r.cell.n1 >= 10 * r.cell.n0) {
      const double pm = r.at(CoverageColumn::EbPate);
      why += " pate_moments=" + fmt(pm, 3) + "@" + name;
      if (pm > 0.55) ok = false;
    }
  }
  report(4, ok,
         "EB SATE and individual-level PATE coverage in [0.92, 0.98], moments-only PATE "
         "coverage <= 0.55 when n1/n0 >= 10:" + why);
}

void double_robustness() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> n_law(20, 100), m_law(2, 6);
  int done = 0, skipped = 0;
  double worst = 0;
  while (done < 1000) {
    const int n = n_law(rng);
    const int m = m_law(rng);
    MatrixXd x(n, m - 1);
    VectorXd z(n), y(n);
    for (int i = 0; i < n; ++i) {
      z[i] = i % 2;
      for (int j = 0; j < m - 1; ++j) x(i, j) = g(rng);
      y[i] = x.row(i).sum() + z[i] * (1 + x(i, 0)) + g(rng);
    }
    const TrialSample t = TrialSample::make(x, z, y);
    const auto spec = BalanceSpec::main_effects(m - 1);
    const MatrixXd c = apply_balance_spec(spec, x);
    VectorXd theta = c.colwise().mean().transpose();
    for (int j = 1; j < m; ++j) theta[j] += 0.3 * g(rng);
    EstimateResult eb;
    try {
      eb = estimate_eb(t, TargetMoments{theta, std::nullopt}, spec);
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    MatrixXd c1(n / 2, m), c0(n - n / 2, m);
    VectorXd y1(n / 2), y0(n - n / 2);
    for (int i = 0, a = 0, b = 0; i < n; ++i) {
      if (z[i] == 1) {
        c1.row(a) = c.row(i);
        y1[a++] = y[i];
      } else {
        c0.row(b) = c.row(i);
        y0[b++] = y[i];
      }
    }
    const VectorXd alpha = oracle::ols_normal_equations(c1, y1);
    const VectorXd beta = oracle::ols_normal_equations(c0, y0);
    const double dr = oracle::tau_dr(eb.weights->gamma, z, y, c, theta, alpha, beta);
    worst = std::max(worst, std::abs(eb.tau_hat - dr) / (1 + std::abs(eb.tau_hat)));
    ++done;
  }
  report(5, worst <= 1e-10,
         "1000 instances, max |EB - DR| / (1 + |EB|) = " + fmt(worst, 3) + " (" +
             std::to_string(skipped) + " infeasible draws redrawn)");
}

void residuals() {
  std::size_t eb_solves = 0, mom_solves = 0;
  double worst_eb = 0, worst_mom = 0;
  for (Scenario s : kAllScenarios) {
    for (std::size_t n1 : {200u, 1000u}) {
      ScenarioConfig cell;
      cell.scenario = s;
      cell.n1 = n1;
      cell.n0 = 1000;
      for (std::size_t r = 0; r < 50; ++r) {
        auto rng = replicate_stream(99, 3, cell, r);
        const auto d = generate(cell, rng);
        const auto spec = BalanceSpec::main_effects(covariate_count(s));
        const VectorXd theta = compute_target_moments(d.target, spec);
        const TargetInfo target = TargetMoments{theta, std::nullopt};
        const MatrixXd c = apply_balance_spec(spec, d.trial.x);
        const double n = static_cast<double>(d.trial.size());
        try {
          const EstimateResult eb = estimate_eb(d.trial, target, spec);
          for (double arm : {0.0, 1.0}) {
            worst_eb = std::max(
                worst_eb, arm_residual(c, eb.weights->gamma, d.trial.z, arm, theta, n) / n);
          }
          ++eb_solves;
        } catch (const Error&) {
        }
        try {
          const EstimateResult mom = estimate_mom(d.trial, target, spec);
          MatrixXd ct(c.rows(), c.cols() + 1);
          ct << (2 * d.trial.z.array() - 1).matrix(), c;
          VectorXd tt(theta.size() + 1);
          tt << 0, theta;
          const VectorXd res = ct.transpose() * mom.weights->gamma - n * tt;
          worst_mom = std::max(worst_mom, res.lpNorm<Eigen::Infinity>() / n);
          ++mom_solves;
        } catch (const Error&) {
        }
      }
    }
  }
  report(6, worst_eb <= 1e-7 && worst_mom <= 1e-7,
         std::to_string(eb_solves) + " EB and " + std::to_string(mom_solves) +
             " MOM converged solves; max residual / n1: EB " + fmt(worst_eb, 3) + ", MOM " +
             fmt(worst_mom, 3));
}

void dual_oracle() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> n_law(6, 12), m_law(2, 3);
  double worst_l = 0, worst_w = 0;
  int done = 0, failed = 0;
  while (done < 200) {
    const int n = n_law(rng);
    const int m = m_law(rng);
    MatrixXd c(n, m);
    for (int i = 0; i < n; ++i) {
      c(i, 0) = 1;
      for (int j = 1; j < m; ++j) c(i, j) = g(rng);
    }
    const VectorXd theta = oracle::interior_point(c, rng);
    const double n1 = n + n_law(rng);
    DualSolution s;
    try {
      s = solve_arm_dual(c, theta, n1);
    } catch (const Error&) {
      ++failed;
      continue;
    }
    const VectorXd ref = oracle::minimize_tilt(c, theta, n1, 6.0);
    worst_l = std::max(worst_l, (s.lambda - ref).lpNorm<Eigen::Infinity>());
    const VectorXd w = (-(c * s.lambda)).array().exp();
    const VectorXd wr = (-(c * ref)).array().exp();
    worst_w = std::max(worst_w, (w - wr).lpNorm<Eigen::Infinity>());
    ++done;
  }
  report(7, worst_l <= 1e-6 && worst_w <= 1e-8 && failed == 0,
         "200 instances of 6-12 units: max lambda gap " + fmt(worst_l, 3) +
             ", max weight gap " + fmt(worst_w, 3) + ", Newton failures " +
             std::to_string(failed));
}

void sandwich_checks() {
  double worst = 0;
  int instances = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (Scenario s : {Scenario::Baseline, Scenario::Interaction, Scenario::Positivity}) {
      ScenarioConfig cell;
      cell.scenario = s;
      cell.seed = seed;
      cell.n1 = 300;
      cell.n0 = 200;
      const auto d = generate(cell);
      const auto spec = BalanceSpec::main_effects(4);
      const TargetInfo target = d.target;
      const EstimateResult eb = estimate_eb(d.trial, target, spec);
      const EstimateResult om = estimate_om(d.trial, target, spec);
      const EbFit fit{*eb.weights, eb.duals[0], eb.duals[1]};
      for (Estimand e : {Estimand::SATE, Estimand::PATE}) {
        const InfluenceStack se = eb_stack(d.trial, target, spec, fit, eb.tau_hat, e);
        const EbEquations eqe(d.trial, target, spec, e);
        const MatrixXd fde = oracle::fd_jacobian_sum(
            [&](const VectorXd& eta) { return eqe.values(eta); }, se.estimate);
        worst = std::max(worst, (se.bread * double(se.n) - fde).lpNorm<Eigen::Infinity>() /
                                    fde.lpNorm<Eigen::Infinity>());
        const InfluenceStack so = om_stack(d.trial, target, spec, *om.outcome, om.tau_hat, e);
        const OmEquations eqo(d.trial, target, spec, e);
        const MatrixXd fdo = oracle::fd_jacobian_sum(
            [&](const VectorXd& eta) { return eqo.values(eta); }, so.estimate);
        worst = std::max(worst, (so.bread * double(so.n) - fdo).lpNorm<Eigen::Infinity>() /
                                    fdo.lpNorm<Eigen::Infinity>());
        instances += 2;
      }
    }
  }

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(1, 2);
  double worst_mean = 0;
  for (int n : {10, 100, 1000}) {
    VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = g(rng);
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().sum() / n);
    const auto stack = InfluenceStack::assemble((y.array() - mean).matrix(),
                                                MatrixXd::Constant(1, 1, -n),
                                                VectorXd::Constant(1, mean), Estimand::SATE,
                                                TargetMode::IndividualLevel);
    worst_mean = std::max(worst_mean, std::abs(sandwich(stack).std_err - sd / std::sqrt(n)));
  }
  report(8, worst <= 1e-4 && worst_mean <= 1e-10,
         std::to_string(instances) + " stacks: max relative bread gap " + fmt(worst, 3) +
             "; mean reduction gap " + fmt(worst_mean, 3));
}

void efficiency_bound() {
  ScenarioConfig cell;
  cell.n0 = 10000;
  cell.n1 = 10000;
  const std::size_t reps = 500;
  std::vector<double> est(reps, 0.0);
  std::vector<char> ok(reps, 0);
  parallel_for(reps, 0, [&](std::size_t r) {
    auto rng = replicate_stream(31, 4, cell, r);
    const auto d = generate(cell, rng);
    try {
      est[r] = estimate_eb(d.trial, TargetInfo(d.target), BalanceSpec::main_effects(4)).tau_hat;
      ok[r] = 1;
    } catch (const Error&) {
    }
  });
  double sum = 0, sum_sq = 0, k = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    if (!ok[r]) continue;
    sum += est[r];
    k += 1;
  }
  const double mean = sum / k;
  for (std::size_t r = 0; r < reps; ++r) {
    if (ok[r]) sum_sq += (est[r] - mean) * (est[r] - mean);
  }
  const double scaled = static_cast<double>(cell.n1) * sum_sq / (k - 1);
  const EfficiencyBound b = oracle_efficiency_bound(cell, 4'000'000);
  const double rel = std::abs(scaled / b.total - 1);
  report(9, rel <= 0.15,
         "n1 x var(EB) = " + fmt(scaled) + " over " + std::to_string(int(k)) +
             " replicates vs bound " + fmt(b.total) + " (relative gap " + fmt(rel, 3) + ")");
}

int run_cli(std::vector<std::string> args, std::string& out) {
  args.insert(args.begin(), "transport");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  out = o.str() + e.str();
  return code;
}

void end_to_end() {
  const fs::path dir = fs::temp_directory_path() / "transport_acceptance";
  fs::create_directories(dir);
  const auto spec = BalanceSpec::main_effects(4);
  bool ok = true;
  std::string why;

  // Summary-level target only.
  ScenarioConfig cell;
  cell.seed = 41;
  const auto d = generate(cell);
  {
    std::ofstream t(dir / "trial.csv"), m(dir / "moments.csv");
    csv::write_trial(t, d.trial);
    csv::write_moments(m, spec, compute_target_moments(d.target, spec));
  }
  std::string text;
  int code = run_cli({"transport", "--trial", (dir / "trial.csv").string(), "--target-moments",
                      (dir / "moments.csv").string(), "--method", "eb", "--out",
                      (dir / "moments.json").string()},
                     text);
  const auto rep = nlohmann::json::parse(std::ifstream(dir / "moments.json"));
  const auto& eb = rep["methods"][0];
  const bool complete = code == 0 && eb.contains("tau_hat") && eb.contains("interval") &&
                        eb["interval"]["estimand"] == "SATE" && eb.contains("balance") &&
                        eb["balance"]["max_abs_smd_after"].get<double>() <= 1e-6;
  if (!complete) {
    ok = false;
    why += " moments-only run incomplete (exit " + std::to_string(code) + ")";
  }

  // Individual-level target where a main-effects sampling model is wrong.
  ScenarioConfig pos;
  pos.scenario = Scenario::Positivity;
  pos.seed = 43;
  const auto p = generate(pos);
  {
    std::ofstream t(dir / "pos_trial.csv"), g(dir / "pos_target.csv");
    csv::write_trial(t, p.trial);
    csv::write_target(g, p.target);
  }
  code = run_cli({"balance", "--trial", (dir / "pos_trial.csv").string(), "--target",
                  (dir / "pos_target.csv").string(), "--method", "eb,iosw", "--out",
                  (dir / "balance.json").string()},
                 text);
  const auto bal = nlohmann::json::parse(std::ifstream(dir / "balance.json"));
  double eb_max = 0, iosw_min = 1e300;
  if (code != 0 || bal["methods"].size() != 2) {
    ok = false;
    why += " balance run failed";
  } else {
    const auto& fe = bal["methods"][0]["features"];
    const auto& fi = bal["methods"][1]["features"];
    for (std::size_t j = 0; j < fe.size(); ++j) {
      const double a = std::abs(fe[j]["smd_after"].get<double>());
      const double b = std::abs(fi[j]["smd_after"].get<double>());
      eb_max = std::max(eb_max, a);
      iosw_min = std::min(iosw_min, b);
      if (!(a < b)) {
        ok = false;
        why += " feature " + fe[j]["feature"].get<std::string>() + " EB " + fmt(a, 3) +
               " >= IOSW " + fmt(b, 3);
      }
    }
  }
  report(10, ok,
         "moments-only CLI run gives estimate, SATE interval and balance report; positivity "
         "scenario EB |SMD| max " + fmt(eb_max, 3) + " below every IOSW |SMD| (min " +
             fmt(iosw_min, 3) + ")" + why);
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  bias_efficiency_convergence();
  coverage();
  double_robustness();
  residuals();
  dual_oracle();
  sandwich_checks();
  efficiency_bound();
  end_to_end();
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << '\n';
  return failures == 0 ? 0 : 1;
}
