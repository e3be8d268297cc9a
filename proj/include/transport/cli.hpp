#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "transport/calibration.hpp"
#include "transport/data_model.hpp"
#include "transport/estimators.hpp"
#include "transport/simlab.hpp"

namespace transport::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,  // parse and configuration errors
  kInfeasible = 3,
  kEstimandUnavailable = 4,
};

int exit_code_for(ErrorKind kind);

struct RunConfig {
  std::string subcommand;

  // transport / balance
  std::string trial_path;
  std::string target_path;
  std::string moments_path;
  std::vector<Method> methods{Method::EB};
  Estimand estimand = Estimand::SATE;
  std::string spec_text;  // empty: all main effects
  SolverOptions solver;
  double level = 0.95;
  int bootstrap = 2000;  // IOSW percentile bootstrap resamples, 0 disables

  // simulate / coverage
  std::vector<sim::Scenario> scenarios;
  std::vector<std::size_t> n0;
  std::vector<std::size_t> n1;
  std::size_t reps = 1000;
  double sigma = 1.0;
  sim::DgpVariant variant = sim::DgpVariant::Calibrated;
  unsigned threads = 0;
  std::size_t oracle_draws = 10'000'000;

  std::optional<std::uint64_t> seed;
  std::string out;

  /// Cross-field checks, e.g. tmle needs individual-level target rows.
  void validate() const;
};

int cmd_transport(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_balance(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_coverage(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace transport::cli
