#include "transport/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace transport::sim {

namespace {

constexpr double kPi = 0.5;
constexpr std::uint64_t kTable1Tag = 1;
constexpr std::uint64_t kTable2Tag = 2;

struct Law {
  bool normal = true;
  double a = 0.0;  // mean, or success probability
  double b = 1.0;  // sd

  double draw(std::mt19937_64& rng) const {
    if (normal) return std::normal_distribution<double>(a, b)(rng);
    return std::bernoulli_distribution(a)(rng) ? 1.0 : 0.0;
  }
  double log_density(double x) const {
    if (normal) {
      const double u = (x - a) / b;
      return -0.5 * u * u - std::log(b);
    }
    return x == 1.0 ? std::log(a) : std::log1p(-a);
  }
};

Law normal(double mean, double sd) { return {true, mean, sd}; }
Law bern(double p) { return {false, p, 0.0}; }

std::vector<Law> base_laws(Scenario scenario, DgpVariant variant, bool trial) {
  std::vector<Law> laws;
  if (trial) {
    laws = {normal(1, 2), bern(0.4), normal(0, 1), bern(0.5)};
  } else {
    laws = {normal(-1, 2), bern(0.6), normal(0, 1), bern(0.5)};
  }
  if (scenario == Scenario::Positivity) {
    if (variant == DgpVariant::Calibrated) {
      if (trial) {
        laws[1] = bern(0.3);
      } else {
        laws[0] = normal(-1, 1);
        laws[1] = bern(0.7);
      }
    } else {
      if (trial) {
        laws[1] = bern(0.7);
      } else {
        laws[0] = normal(1, 1);
        laws[1] = bern(0.3);
      }
    }
  }
  return laws;
}

std::vector<Law> laws_for(Scenario scenario, DgpVariant variant, bool trial) {
  auto laws = base_laws(scenario, variant, trial);
  if (scenario == Scenario::Sparse) {
    const auto swapped = base_laws(scenario, variant, !trial);
    laws.insert(laws.end(), swapped.begin(), swapped.end());
  }
  return laws;
}

double law_mean(const Law& law) { return law.a; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Effect-modification part of mu1 - mu0 beyond the constant 5.
double effect_terms(const ScenarioConfig& config,
                    const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (!config.effect_modification) return 0.0;
  double t = 3 * x[0] - x[1] + x[2] - 3 * x[3];
  if (config.scenario == Scenario::Interaction) {
    if (config.variant == DgpVariant::Calibrated) {
      t += -x[0] * x[1] + 2 * x[0] * x[3];
    } else {
      t += -x[0] * x[2] + 2 * x[1] * x[3];
    }
  }
  return t;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::Baseline: return "baseline";
    case Scenario::Interaction: return "interaction";
    case Scenario::Positivity: return "positivity";
    case Scenario::Sparse: return "sparse";
  }
  return "?";
}

Scenario parse_scenario(std::string_view name) {
  const auto s = lower(name);
  for (auto sc : kAllScenarios) {
    if (s == to_string(sc)) return sc;
  }
  throw Error(ErrorKind::Config, "unknown scenario '" + std::string(name) +
                                     "' (expected baseline, interaction, positivity, sparse)");
}

std::string_view to_string(DgpVariant variant) {
  return variant == DgpVariant::Calibrated ? "calibrated" : "literal";
}

DgpVariant parse_variant(std::string_view name) {
  const auto s = lower(name);
  if (s == "calibrated") return DgpVariant::Calibrated;
  if (s == "literal") return DgpVariant::Literal;
  throw Error(ErrorKind::Config, "unknown DGP variant '" + std::string(name) +
                                     "' (expected calibrated or literal)");
}

void ScenarioConfig::validate(bool table_run) const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::Config, "sigma must be positive");
  }
  if (n0 < 1 || n1 < 2) {
    throw Error(ErrorKind::Config, "need n0 >= 1 and n1 >= 2");
  }
  if (table_run && (n0 < 50 || n1 < 50)) {
    throw Error(ErrorKind::Config, "table runs need n0, n1 >= 50");
  }
}

int covariate_count(Scenario scenario) { return scenario == Scenario::Sparse ? 8 : 4; }

MatrixXd draw_covariates(Scenario scenario, DgpVariant variant, bool trial, std::size_t n,
                         std::mt19937_64& rng) {
  const auto laws = laws_for(scenario, variant, trial);
  MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(laws.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = laws[j].draw(rng);
  }
  return x;
}

double mu0(const ScenarioConfig& config, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  double m = 10 - 3 * x[0] - x[1] + x[2] + 3 * x[3];
  if (config.effect_modification && config.scenario == Scenario::Interaction) {
    m += 2 * x[0] * x[1] - x[0] * x[3];
  }
  return m;
}

double mu1(const ScenarioConfig& config, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return mu0(config, x) + 5 + effect_terms(config, x);
}

double log_density_ratio(Scenario scenario, DgpVariant variant,
                         const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const auto l1 = laws_for(scenario, variant, true);
  const auto l0 = laws_for(scenario, variant, false);
  double r = 0.0;
  for (std::size_t j = 0; j < l1.size(); ++j) {
    r += l1[j].log_density(x[static_cast<Eigen::Index>(j)]) -
         l0[j].log_density(x[static_cast<Eigen::Index>(j)]);
  }
  return r;
}

SimulatedData generate(const ScenarioConfig& config) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32)};
  std::mt19937_64 rng(seq);
  return generate(config, rng);
}

SimulatedData generate(const ScenarioConfig& config, std::mt19937_64& rng) {
  config.validate();
  SimulatedData d;
  std::normal_distribution<double> noise(0.0, config.sigma);
  std::bernoulli_distribution assign(kPi);

  const auto n1 = static_cast<Eigen::Index>(config.n1);
  MatrixXd x1 = draw_covariates(config.scenario, config.variant, true, config.n1, rng);
  VectorXd z(n1);
  VectorXd y(n1);
  for (Eigen::Index i = 0; i < n1; ++i) {
    z[i] = assign(rng) ? 1.0 : 0.0;
    const double y0 = mu0(config, x1.row(i)) + noise(rng);
    const double y1 = mu1(config, x1.row(i)) + noise(rng);
    y[i] = z[i] == 1.0 ? y1 : y0;
  }
  d.trial = TrialSample{std::move(x1), std::move(z), std::move(y)};

  const auto n0 = static_cast<Eigen::Index>(config.n0);
  MatrixXd x0 = draw_covariates(config.scenario, config.variant, false, config.n0, rng);
  d.target_effects.resize(n0);
  d.target_cate.resize(n0);
  for (Eigen::Index i = 0; i < n0; ++i) {
    const double m0 = mu0(config, x0.row(i));
    const double m1 = mu1(config, x0.row(i));
    const double y0 = m0 + noise(rng);
    const double y1 = m1 + noise(rng);
    d.target_effects[i] = y1 - y0;
    d.target_cate[i] = m1 - m0;
  }
  d.target = TargetIndividual{std::move(x0), std::nullopt};
  return d;
}

OracleValue oracle_true_pate(Scenario scenario, std::size_t draws, std::uint64_t seed,
                             DgpVariant variant, bool effect_modification) {
  if (draws < 2) throw Error(ErrorKind::Config, "oracle needs at least 2 draws");
  ScenarioConfig cfg;
  cfg.scenario = scenario;
  cfg.variant = variant;
  cfg.effect_modification = effect_modification;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x0ac1eu, static_cast<std::uint32_t>(scenario)};
  std::mt19937_64 rng(seq);

  constexpr std::size_t chunk = 100000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t done = 0; done < draws;) {
    const std::size_t k = std::min(chunk, draws - done);
    const MatrixXd x = draw_covariates(scenario, variant, false, k, rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double t = 5 + effect_terms(cfg, x.row(i));
      sum += t;
      sum_sq += t * t;
    }
    done += k;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1));
  return {mean, std::sqrt(var / n)};
}

double analytic_true_pate(Scenario scenario, DgpVariant variant, bool effect_modification) {
  if (!effect_modification) return 5.0;
  const auto laws = laws_for(scenario, variant, false);
  std::vector<double> e(laws.size());
  for (std::size_t j = 0; j < laws.size(); ++j) e[j] = law_mean(laws[j]);
  double t = 5 + 3 * e[0] - e[1] + e[2] - 3 * e[3];
  if (scenario == Scenario::Interaction) {
    if (variant == DgpVariant::Calibrated) {
      t += -e[0] * e[1] + 2 * e[0] * e[3];
    } else {
      t += -e[0] * e[2] + 2 * e[1] * e[3];
    }
  }
  return t;
}

EfficiencyBound oracle_efficiency_bound(const ScenarioConfig& config, std::size_t draws) {
  config.validate();
  if (draws < 2) throw Error(ErrorKind::Config, "oracle needs at least 2 draws");
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32), 0xb0u,
                    static_cast<std::uint32_t>(config.scenario)};
  std::mt19937_64 rng(seq);

  const double n0 = static_cast<double>(config.n0);
  const double n1 = static_cast<double>(config.n1);
  const double share1 = n1 / (n0 + n1);

  // Stratified over the two mixture components.
  struct Acc {
    double w = 0, w2 = 0, w2t = 0, w2t2 = 0, wt = 0;
  };
  Acc acc[2];
  const std::size_t per = (draws + 1) / 2;
  for (int s = 0; s < 2; ++s) {
    constexpr std::size_t chunk = 100000;
    for (std::size_t done = 0; done < per;) {
      const std::size_t k = std::min(chunk, per - done);
      const MatrixXd x = draw_covariates(config.scenario, config.variant, s == 1, k, rng);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double lr = log_density_ratio(config.scenario, config.variant, x.row(i));
        // 1 - rho = n0 f0 / (n1 f1 + n0 f0)
        const double w = 1.0 / (1.0 + (n1 / n0) * std::exp(lr));
        const double t = 5 + effect_terms(config, x.row(i));
        acc[s].w += w;
        acc[s].w2 += w * w;
        acc[s].wt += w * t;
        acc[s].w2t += w * w * t;
        acc[s].w2t2 += w * w * t * t;
      }
      done += k;
    }
  }
  const double p = static_cast<double>(per);
  const auto mix = [&](double Acc::*field) {
    return share1 * (acc[1].*field / p) + (1 - share1) * (acc[0].*field / p);
  };
  const double ew = mix(&Acc::w);
  const double ew2 = mix(&Acc::w2);
  const double tau = mix(&Acc::wt) / ew;
  const double hetero = mix(&Acc::w2t2) - 2 * tau * mix(&Acc::w2t) + tau * tau * ew2;

  EfficiencyBound b;
  b.tau = tau;
  const double s2 = config.sigma * config.sigma;
  b.variance_term = s2 * (1.0 / kPi + 1.0 / (1.0 - kPi)) * ew2 / (ew * ew);
  b.heterogeneity_term = config.effect_modification ? std::max(0.0, hetero) / (ew * ew) : 0.0;
  b.total = b.variance_term + b.heterogeneity_term;
  return b;
}

// ---------------------------------------------------------------------------

std::mt19937_64 replicate_stream(std::uint64_t master_seed, std::uint64_t tag,
                                 const ScenarioConfig& cell, std::size_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(cell.scenario),
                    static_cast<std::uint32_t>(cell.variant),
                    static_cast<std::uint32_t>(cell.n0),
                    static_cast<std::uint32_t>(cell.n1),
                    static_cast<std::uint32_t>(replicate),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(replicate) >> 32)};
  return std::mt19937_64(seq);
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double MethodSummary::mean_se() const {
  return converged > 0 ? mc_se / std::sqrt(static_cast<double>(converged)) : 0.0;
}

double MethodSummary::convergence_rate() const {
  return replicates > 0 ? static_cast<double>(converged) / static_cast<double>(replicates)
                        : 0.0;
}

const MethodSummary& ReplicationSummary::at(Method method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw Error(ErrorKind::Config, "no summary for method " + std::string(to_string(method)));
}

ReplicationSummary run_table1_cell(const ScenarioConfig& cell, std::size_t replicates,
                                   std::uint64_t master_seed, double truth, unsigned threads,
                                   const SolverOptions& solver) {
  cell.validate();
  constexpr std::size_t kMethods = std::size(kAllMethods);
  std::vector<ReplicateRecord> records(replicates * kMethods);
  const BalanceSpec spec = BalanceSpec::main_effects(covariate_count(cell.scenario));

  parallel_for(replicates, threads, [&](std::size_t r) {
    auto rng = replicate_stream(master_seed, kTable1Tag, cell, r);
    const SimulatedData data = generate(cell, rng);
    const TargetInfo target = data.target;
    for (std::size_t k = 0; k < kMethods; ++k) {
      ReplicateRecord& rec = records[r * kMethods + k];
      rec.replicate = r;
      rec.method = kAllMethods[k];
      try {
        rec.estimate = estimate(rec.method, data.trial, target, spec, solver).tau_hat;
        rec.converged = std::isfinite(rec.estimate);
        if (!rec.converged) rec.error = "non-finite estimate";
      } catch (const Error& e) {
        rec.converged = false;
        rec.error = std::string(to_string(e.kind()));
      }
    }
  });

  ReplicationSummary out;
  out.cell = cell;
  out.replicates = replicates;
  out.truth = truth;
  for (std::size_t k = 0; k < kMethods; ++k) {
    std::vector<double> est;
    for (std::size_t r = 0; r < replicates; ++r) {
      const auto& rec = records[r * kMethods + k];
      if (rec.converged) est.push_back(rec.estimate);
    }
    MethodSummary s;
    s.method = kAllMethods[k];
    s.replicates = replicates;
    s.converged = est.size();
    s.mean = mean_of(est);
    s.mc_se = sample_sd(est, s.mean);
    out.methods.push_back(s);
  }
  out.records = std::move(records);
  return out;
}

std::vector<ReplicationSummary> run_table1(const Table1Options& options) {
  std::vector<ReplicationSummary> rows;
  for (std::size_t n0 : options.n0) {
    for (std::size_t n1 : options.n1) {
      for (Scenario sc : options.scenarios) {
        ScenarioConfig cell;
        cell.scenario = sc;
        cell.n0 = n0;
        cell.n1 = n1;
        cell.sigma = options.sigma;
        cell.variant = options.variant;
        cell.validate(true);
        const double truth =
            oracle_true_pate(sc, options.oracle_draws, options.seed, options.variant).value;
        rows.push_back(run_table1_cell(cell, options.replicates, options.seed, truth,
                                       options.threads, options.solver));
      }
    }
  }
  return rows;
}

std::string_view to_string(CoverageColumn column) {
  switch (column) {
    case CoverageColumn::EbSate: return "eb_sate";
    case CoverageColumn::EbPate: return "eb_pate";
    case CoverageColumn::OmSate: return "om_sate";
    case CoverageColumn::OmPate: return "om_pate";
    case CoverageColumn::EbPateIndividual: return "eb_pate_individual";
  }
  return "?";
}

CoverageSummary run_table2_cell(const ScenarioConfig& cell, std::size_t replicates,
                                std::uint64_t master_seed, double pate, unsigned threads,
                                double level, const SolverOptions& solver) {
  cell.validate();
  constexpr std::size_t kCols = std::size(kAllCoverageColumns);
  std::vector<CoverageRecord> records(replicates * kCols);
  std::vector<double> realized(replicates);
  std::vector<char> violation(replicates, 0);
  const BalanceSpec spec = BalanceSpec::main_effects(covariate_count(cell.scenario));

  parallel_for(replicates, threads, [&](std::size_t r) {
    auto rng = replicate_stream(master_seed, kTable2Tag, cell, r);
    const SimulatedData data = generate(cell, rng);
    realized[r] = data.realized_sate();
    const double sate = data.conditional_sate();
    const TargetInfo moments =
        TargetMoments{compute_target_moments(data.target, spec), cell.n0};
    const TargetInfo individual = data.target;

    auto put = [&](CoverageColumn col, const IntervalResult& iv, double truth) {
      auto& rec = records[r * kCols + static_cast<std::size_t>(col)];
      rec.ok = true;
      rec.interval = iv;
      rec.truth = truth;
      rec.covered = iv.covers(truth);
    };
    for (std::size_t k = 0; k < kCols; ++k) {
      records[r * kCols + k].replicate = r;
      records[r * kCols + k].column = kAllCoverageColumns[k];
    }

    try {
      const VectorXd theta0 = std::get<TargetMoments>(moments).theta0;
      const EbFit fit = eb_weights(data.trial, spec, theta0, solver);
      const double tau = horvitz_thompson_contrast(fit.weights.gamma, data.trial.z, data.trial.y);
      const IntervalResult s =
          sandwich(eb_stack(data.trial, moments, spec, fit, tau, Estimand::SATE), level);
      const IntervalResult p =
          sandwich(eb_stack(data.trial, individual, spec, fit, tau, Estimand::PATE), level);
      put(CoverageColumn::EbSate, s, sate);
      put(CoverageColumn::EbPate, s, pate);
      put(CoverageColumn::EbPateIndividual, p, pate);
      if (p.std_err < s.std_err * (1.0 - 1e-12)) violation[r] = 1;
    } catch (const Error&) {
    }
    try {
      const EstimateResult om = estimate_om(data.trial, moments, spec);
      const IntervalResult s = sandwich(
          om_stack(data.trial, moments, spec, *om.outcome, om.tau_hat, Estimand::SATE), level);
      put(CoverageColumn::OmSate, s, sate);
      put(CoverageColumn::OmPate, s, pate);
    } catch (const Error&) {
    }
  });

  CoverageSummary out;
  out.cell = cell;
  out.replicates = replicates;
  out.pate = pate;
  for (std::size_t r = 0; r < replicates; ++r) {
    if (!records[r * kCols].ok) ++out.excluded;
    if (violation[r]) ++out.monotonicity_violations;
    for (std::size_t k = 0; k < kCols; ++k) {
      const auto& rec = records[r * kCols + k];
      if (!rec.ok) continue;
      ++out.usable[k];
      if (rec.covered) out.coverage[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < kCols; ++k) {
    if (out.usable[k] > 0) out.coverage[k] /= static_cast<double>(out.usable[k]);
  }
  out.mean_realized_sate = mean_of(realized);
  out.sd_realized_sate = sample_sd(realized, out.mean_realized_sate);
  out.records = std::move(records);
  return out;
}

std::vector<CoverageSummary> run_table2(const Table2Options& options) {
  const double pate = analytic_true_pate(options.scenario, options.variant);
  std::vector<CoverageSummary> rows;
  for (std::size_t n0 : options.n0) {
    for (std::size_t n1 : options.n1) {
      ScenarioConfig cell;
      cell.scenario = options.scenario;
      cell.n0 = n0;
      cell.n1 = n1;
      cell.sigma = options.sigma;
      cell.variant = options.variant;
      cell.validate(true);
      rows.push_back(run_table2_cell(cell, options.replicates, options.seed, pate,
                                     options.threads, options.level, options.solver));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

void write_table1_csv(std::ostream& out, const std::vector<ReplicationSummary>& rows) {
  out << "scenario,n0,n1,method,mean,mc_se,converged,truth_oracle\n";
  out << std::setprecision(12);
  for (const auto& row : rows) {
    for (const auto& m : row.methods) {
      out << to_string(row.cell.scenario) << ',' << row.cell.n0 << ',' << row.cell.n1 << ','
          << to_string(m.method) << ',' << m.mean << ',' << m.mc_se << ',' << m.converged
          << ',' << row.truth << '\n';
    }
  }
}

void write_table1_replicates_csv(std::ostream& out,
                                 const std::vector<ReplicationSummary>& rows) {
  out << "scenario,n0,n1,replicate,method,converged,estimate,error\n";
  out << std::setprecision(12);
  for (const auto& row : rows) {
    for (const auto& rec : row.records) {
      out << to_string(row.cell.scenario) << ',' << row.cell.n0 << ',' << row.cell.n1 << ','
          << rec.replicate << ',' << to_string(rec.method) << ',' << (rec.converged ? 1 : 0)
          << ',';
      if (rec.converged) out << rec.estimate;
      out << ',' << rec.error << '\n';
    }
  }
}

void write_table2_csv(std::ostream& out, const std::vector<CoverageSummary>& rows) {
  out << "n0,n1,column,coverage\n";
  out << std::setprecision(12);
  for (const auto& row : rows) {
    for (auto col : kAllCoverageColumns) {
      out << row.cell.n0 << ',' << row.cell.n1 << ',' << to_string(col) << ','
          << row.at(col) << '\n';
    }
  }
}

void write_table2_replicates_csv(std::ostream& out, const std::vector<CoverageSummary>& rows) {
  out << "n0,n1,replicate,column,ok,tau_hat,std_err,ci_lower,ci_upper,truth,covered\n";
  out << std::setprecision(12);
  for (const auto& row : rows) {
    for (const auto& rec : row.records) {
      out << row.cell.n0 << ',' << row.cell.n1 << ',' << rec.replicate << ','
          << to_string(rec.column) << ',' << (rec.ok ? 1 : 0) << ',';
      if (rec.ok) {
        out << rec.interval.tau_hat << ',' << rec.interval.std_err << ','
            << rec.interval.ci_lower << ',' << rec.interval.ci_upper << ',' << rec.truth << ','
            << (rec.covered ? 1 : 0);
      } else {
        out << ",,,,,";
      }
      out << '\n';
    }
  }
}

void print_table1(std::ostream& out, const std::vector<ReplicationSummary>& rows) {
  const auto flags = out.flags();
  out << std::left << std::setw(6) << "n0" << std::setw(6) << "n1" << std::setw(13)
      << "scenario" << std::setw(8) << "PATE";
  for (auto m : kAllMethods) out << std::setw(17) << to_string(m);
  out << '\n' << std::fixed << std::setprecision(2);
  for (const auto& row : rows) {
    out << std::setw(6) << row.cell.n0 << std::setw(6) << row.cell.n1 << std::setw(13)
        << to_string(row.cell.scenario) << std::setw(8) << row.truth;
    for (const auto& m : row.methods) {
      std::ostringstream cellText;
      cellText << std::fixed << std::setprecision(2) << m.mean << " (" << m.mc_se << ")";
      if (m.converged < m.replicates) cellText << '*';
      out << std::setw(17) << cellText.str();
    }
    out << '\n';
  }
  bool any = false;
  for (const auto& row : rows) {
    for (const auto& m : row.methods) {
      if (m.converged < m.replicates) {
        if (!any) out << "* converged in fewer than all replicates:\n";
        any = true;
        out << "  " << to_string(row.cell.scenario) << " n0=" << row.cell.n0
            << " n1=" << row.cell.n1 << ' ' << to_string(m.method) << ": " << m.converged << '/'
            << m.replicates << '\n';
      }
    }
  }
  out.flags(flags);
}

void print_table2(std::ostream& out, const std::vector<CoverageSummary>& rows) {
  const auto flags = out.flags();
  out << std::left << std::setw(7) << "n0" << std::setw(7) << "n1";
  for (auto col : kAllCoverageColumns) out << std::setw(20) << to_string(col);
  out << '\n' << std::fixed << std::setprecision(3);
  for (const auto& row : rows) {
    out << std::setw(7) << row.cell.n0 << std::setw(7) << row.cell.n1;
    for (auto col : kAllCoverageColumns) out << std::setw(20) << row.at(col);
    out << '\n';
  }
  out.flags(flags);
}

}  // namespace transport::sim
