#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "transport/calibration.hpp"
#include "transport/data_model.hpp"
#include "transport/estimators.hpp"

namespace transport {

/// Stacked estimating equations evaluated at the fitted parameters.
/// The treatment effect is always the last parameter.
struct InfluenceStack {
  MatrixXd values;    // n x p, one row per unit
  MatrixXd bread;     // A: average Jacobian of the per-unit equations
  MatrixXd meat;      // B: average outer product of the per-unit equations
  VectorXd estimate;  // fitted parameters eta
  std::size_t n = 0;
  Estimand estimand = Estimand::SATE;
  TargetMode mode = TargetMode::MomentsOnly;

  Eigen::Index dimension() const { return estimate.size(); }

  /// Builds meat from `values`; `jacobian_sum` is the sum over units.
  static InfluenceStack assemble(MatrixXd values, const MatrixXd& jacobian_sum,
                                 VectorXd estimate, Estimand estimand, TargetMode mode);
};

struct IntervalResult {
  double tau_hat = 0.0;
  double std_err = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double level = 0.95;
  Estimand estimand = Estimand::SATE;
  TargetMode mode = TargetMode::MomentsOnly;

  bool covers(double value) const { return ci_lower <= value && value <= ci_upper; }
};

/// Entropy-balancing estimating system.
///
/// Parameters are (theta0, lambda0, lambda1, tau) for the PATE and
/// (lambda0, lambda1, tau) for the SATE, where theta0 is held at its sample
/// value. Per trial unit with arm weight g_z = exp(-c' lambda_z):
///
///   zeta_z = 1{Z = z} g_z c - theta0        (dual first-order condition)
///   psi    = Z g_1 (Y - tau) - (1 - Z) g_0 Y
///
/// and per target unit delta = q (c - theta0). Rows are trial units first,
/// then target units (PATE only).
class EbEquations {
 public:
  EbEquations(const TrialSample& trial, const TargetInfo& target,
              const BalanceSpec& spec, Estimand estimand);

  Eigen::Index dimension() const;
  std::size_t units() const;
  Estimand estimand() const { return estimand_; }
  const VectorXd& theta0_hat() const { return theta0_hat_; }

  VectorXd pack(const VectorXd& lambda0, const VectorXd& lambda1, double tau) const;

  MatrixXd values(const VectorXd& eta) const;
  /// Sum over units of d g_i / d eta (p x p).
  MatrixXd jacobian_sum(const VectorXd& eta) const;

 private:
  struct View {
    VectorXd theta0;
    VectorXd lambda0;
    VectorXd lambda1;
    double tau;
  };
  View unpack(const VectorXd& eta) const;

  MatrixXd trial_features_;
  MatrixXd target_features_;  // empty for the SATE
  VectorXd q_;                // target weights, ones when absent
  VectorXd z_;
  VectorXd y_;
  VectorXd theta0_hat_;
  Eigen::Index m_ = 0;
  Estimand estimand_;
};

/// Outcome-model estimating system: per-arm OLS scores, delta for theta0
/// (PATE only), and tau - theta0' (alpha - beta) for every unit.
/// Parameters are (theta0, alpha, beta, tau) or (alpha, beta, tau).
class OmEquations {
 public:
  OmEquations(const TrialSample& trial, const TargetInfo& target,
              const BalanceSpec& spec, Estimand estimand);

  Eigen::Index dimension() const;
  std::size_t units() const;
  const VectorXd& theta0_hat() const { return theta0_hat_; }

  VectorXd pack(const VectorXd& alpha, const VectorXd& beta, double tau) const;

  MatrixXd values(const VectorXd& eta) const;
  MatrixXd jacobian_sum(const VectorXd& eta) const;

 private:
  MatrixXd trial_features_;
  MatrixXd target_features_;
  VectorXd q_;
  VectorXd z_;
  VectorXd y_;
  VectorXd theta0_hat_;
  Eigen::Index m_ = 0;
  Estimand estimand_;
};

InfluenceStack eb_stack(const TrialSample& trial, const TargetInfo& target,
                        const BalanceSpec& spec, const EbFit& fit, double tau_hat,
                        Estimand estimand);

InfluenceStack om_stack(const TrialSample& trial, const TargetInfo& target,
                        const BalanceSpec& spec, const OutcomeFits& fits,
                        double tau_hat, Estimand estimand);

/// V = A^-1 B A^-T / n; normal-quantile interval for the last parameter.
IntervalResult sandwich(const InfluenceStack& stack, double level = 0.95);

/// Variance-covariance A^-1 B A^-T / n of all stacked parameters.
MatrixXd sandwich_covariance(const InfluenceStack& stack);

/// Fit + stack + sandwich in one call.
IntervalResult eb_interval(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec, Estimand estimand,
                           const SolverOptions& opts = {}, double level = 0.95);
IntervalResult om_interval(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec, Estimand estimand,
                           double level = 0.95);

/// Two-sided standard normal quantile for a central `level` interval.
double normal_critical_value(double level);

/// Percentile bootstrap over trial units (target held fixed). Resamples in
/// which the estimator fails are dropped and counted.
struct BootstrapInterval {
  double tau_hat = 0.0;
  double std_err = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double level = 0.95;
  int resamples = 0;
  int failures = 0;
};

BootstrapInterval bootstrap_interval(
    const std::function<double(const TrialSample&)>& estimator,
    const TrialSample& trial, int resamples = 2000, std::uint64_t seed = 1,
    double level = 0.95);

}  // namespace transport
