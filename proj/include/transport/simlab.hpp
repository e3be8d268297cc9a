#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "transport/data_model.hpp"
#include "transport/estimators.hpp"
#include "transport/inference.hpp"

namespace transport::sim {

enum class Scenario { Baseline, Interaction, Positivity, Sparse };

inline constexpr Scenario kAllScenarios[] = {Scenario::Baseline, Scenario::Interaction,
                                             Scenario::Positivity, Scenario::Sparse};

std::string_view to_string(Scenario scenario);
Scenario parse_scenario(std::string_view name);

/// Which parameterization of the interaction and positivity scenarios to use.
///
/// Literal: interaction effect terms -X0*X2 + 2*X1*X3; positivity target
/// X0 ~ N(1, 1), X1 ~ Bern(0.3) in the target and Bern(0.7) in the trial.
/// True PATEs +0.5 and 6.2.
///
/// Calibrated (default): effect terms -X0*X1 + 2*X0*X3; positivity target
/// X0 ~ N(-1, sd 1), X1 ~ Bern(0.7) in the target and Bern(0.3) in the
/// trial. True PATEs -0.5 and -0.2, an outcome model with main effects only
/// is biased by -0.4 under interaction, and IOSW breaks down under
/// positivity. Baseline and sparse are identical in both.
enum class DgpVariant { Calibrated, Literal };

std::string_view to_string(DgpVariant variant);
DgpVariant parse_variant(std::string_view name);

struct ScenarioConfig {
  Scenario scenario = Scenario::Baseline;
  std::size_t n0 = 1000;  // target sample
  std::size_t n1 = 1000;  // trial sample
  double sigma = 1.0;
  std::uint64_t seed = 1;
  DgpVariant variant = DgpVariant::Calibrated;
  bool effect_modification = true;  // false: tau(X) = 5, no interactions

  /// table_run additionally demands n0, n1 >= 50.
  void validate(bool table_run = false) const;
};

/// Covariate count d of a scenario (4, or 8 for sparse).
int covariate_count(Scenario scenario);

struct SimulatedData {
  TrialSample trial;
  TargetIndividual target;
  VectorXd target_effects;  // realized Y(1) - Y(0) per target unit
  VectorXd target_cate;     // mu1(X) - mu0(X) per target unit

  double realized_sate() const { return target_effects.mean(); }
  /// SATE conditional on the drawn target covariates.
  double conditional_sate() const { return target_cate.mean(); }
};

SimulatedData generate(const ScenarioConfig& config);
SimulatedData generate(const ScenarioConfig& config, std::mt19937_64& rng);

/// Draws n covariate rows from the trial (S=1) or target (S=0) law.
MatrixXd draw_covariates(Scenario scenario, DgpVariant variant, bool trial,
                         std::size_t n, std::mt19937_64& rng);

/// Conditional means of the potential outcomes for one covariate row.
double mu0(const ScenarioConfig& config, const Eigen::Ref<const Eigen::RowVectorXd>& x);
double mu1(const ScenarioConfig& config, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// log f(x | S=1) - log f(x | S=0).
double log_density_ratio(Scenario scenario, DgpVariant variant,
                         const Eigen::Ref<const Eigen::RowVectorXd>& x);

struct OracleValue {
  double value = 0.0;
  double mc_se = 0.0;
};

/// Mean of mu1 - mu0 over target-law draws.
OracleValue oracle_true_pate(Scenario scenario, std::size_t draws, std::uint64_t seed,
                             DgpVariant variant = DgpVariant::Calibrated,
                             bool effect_modification = true);

/// Closed form of the same expectation (all laws are independent).
double analytic_true_pate(Scenario scenario, DgpVariant variant = DgpVariant::Calibrated,
                          bool effect_modification = true);

struct EfficiencyBound {
  double variance_term = 0.0;       // E[(1-rho)^2 (s1/pi + s0/(1-pi))] / E[1-rho]^2
  double heterogeneity_term = 0.0;  // E[(1-rho)^2 (tau(X) - tau)^2] / E[1-rho]^2
  double total = 0.0;
  double tau = 0.0;
};

/// Monte Carlo evaluation over the n1:n0 mixture of the two laws, with
/// rho(x) = n1 f1(x) / (n1 f1(x) + n0 f0(x)), pi = 0.5 and V[Y(z)|X] = sigma^2.
EfficiencyBound oracle_efficiency_bound(const ScenarioConfig& config, std::size_t draws);

// ---------------------------------------------------------------------------
// Replication

/// Replicate streams are keyed by (master seed, experiment tag, cell, replicate)
/// and do not depend on the worker count.
std::mt19937_64 replicate_stream(std::uint64_t master_seed, std::uint64_t tag,
                                 const ScenarioConfig& cell, std::size_t replicate);

/// Runs task(i) for i in [0, count) on `threads` workers (0: hardware).
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task);

struct MethodSummary {
  Method method = Method::EB;
  double mean = 0.0;
  double mc_se = 0.0;  // sd of converged estimates
  std::size_t converged = 0;
  std::size_t replicates = 0;

  /// Standard error of `mean`.
  double mean_se() const;
  double convergence_rate() const;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  Method method = Method::EB;
  bool converged = false;
  double estimate = 0.0;
  std::string error;  // empty when converged
};

struct ReplicationSummary {
  ScenarioConfig cell;
  std::size_t replicates = 0;
  double truth = 0.0;
  std::vector<MethodSummary> methods;
  std::vector<ReplicateRecord> records;

  const MethodSummary& at(Method method) const;
};

struct Table1Options {
  std::vector<Scenario> scenarios{std::begin(kAllScenarios), std::end(kAllScenarios)};
  std::vector<std::size_t> n0{500, 1000};
  std::vector<std::size_t> n1{200, 1000};
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  double sigma = 1.0;
  DgpVariant variant = DgpVariant::Calibrated;
  unsigned threads = 0;
  std::size_t oracle_draws = 10'000'000;
  SolverOptions solver;
};

ReplicationSummary run_table1_cell(const ScenarioConfig& cell, std::size_t replicates,
                                   std::uint64_t master_seed, double truth,
                                   unsigned threads = 0, const SolverOptions& solver = {});

std::vector<ReplicationSummary> run_table1(const Table1Options& options);

enum class CoverageColumn { EbSate, EbPate, OmSate, OmPate, EbPateIndividual };

inline constexpr CoverageColumn kAllCoverageColumns[] = {
    CoverageColumn::EbSate, CoverageColumn::EbPate, CoverageColumn::OmSate,
    CoverageColumn::OmPate, CoverageColumn::EbPateIndividual};

std::string_view to_string(CoverageColumn column);

struct CoverageRecord {
  std::size_t replicate = 0;
  CoverageColumn column = CoverageColumn::EbSate;
  bool ok = false;
  IntervalResult interval;
  double truth = 0.0;
  bool covered = false;
};

struct CoverageSummary {
  ScenarioConfig cell;
  std::size_t replicates = 0;
  double pate = 0.0;
  double coverage[5] = {0, 0, 0, 0, 0};
  std::size_t usable[5] = {0, 0, 0, 0, 0};
  std::size_t excluded = 0;  // replicates with a failed EB solve
  // Replicates where the individual-level PATE standard error fell below
  // the SATE one (should never happen).
  std::size_t monotonicity_violations = 0;
  double mean_realized_sate = 0.0;
  double sd_realized_sate = 0.0;
  std::vector<CoverageRecord> records;

  double at(CoverageColumn column) const { return coverage[static_cast<int>(column)]; }
};

struct Table2Options {
  std::vector<std::size_t> n0{500, 1000, 10000};
  std::vector<std::size_t> n1{1000, 10000};
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  double sigma = 1.0;
  Scenario scenario = Scenario::Baseline;
  DgpVariant variant = DgpVariant::Calibrated;
  unsigned threads = 0;
  double level = 0.95;
  SolverOptions solver;
};

CoverageSummary run_table2_cell(const ScenarioConfig& cell, std::size_t replicates,
                                std::uint64_t master_seed, double pate,
                                unsigned threads = 0, double level = 0.95,
                                const SolverOptions& solver = {});

std::vector<CoverageSummary> run_table2(const Table2Options& options);

// CSV output
void write_table1_csv(std::ostream& out, const std::vector<ReplicationSummary>& rows);
void write_table1_replicates_csv(std::ostream& out,
                                 const std::vector<ReplicationSummary>& rows);
void write_table2_csv(std::ostream& out, const std::vector<CoverageSummary>& rows);
void write_table2_replicates_csv(std::ostream& out,
                                 const std::vector<CoverageSummary>& rows);

void print_table1(std::ostream& out, const std::vector<ReplicationSummary>& rows);
void print_table2(std::ostream& out, const std::vector<CoverageSummary>& rows);

}  // namespace transport::sim
