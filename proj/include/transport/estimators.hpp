#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "transport/calibration.hpp"
#include "transport/data_model.hpp"
#include "transport/regression.hpp"

namespace transport {

enum class Method { IOSW, OM, TMLE, MOM, EB };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);  // case-insensitive: eb, om, ...

inline constexpr Method kAllMethods[] = {Method::IOSW, Method::OM, Method::TMLE,
                                         Method::MOM, Method::EB};

struct OutcomeFits {
  LinearFit treated;  // alpha
  LinearFit control;  // beta
};

struct EstimateResult {
  double tau_hat = 0.0;
  Method method = Method::EB;
  TargetMode mode = TargetMode::MomentsOnly;
  std::optional<WeightSet> weights;
  std::optional<OutcomeFits> outcome;
  std::optional<LogisticFit> sampling;
  std::vector<DualSolution> duals;  // EB: {control, treated}; MOM: {pooled}
  std::optional<std::pair<double, double>> fluctuation;  // TMLE (eps0, eps1)
};

/// Inverse odds of sampling weights and their Hajek contrast.
/// Requires individual-level target rows.
EstimateResult estimate_iosw(const TrialSample& trial, const TargetInfo& target,
                             const BalanceSpec& spec);

/// g-computation with one OLS fit per arm; the moments-only form evaluates
/// theta0' (alpha - beta).
EstimateResult estimate_om(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec);

/// Gaussian-outcome TMLE: OM fits fluctuated along the IOSW clever covariates.
EstimateResult estimate_tmle(const TrialSample& trial, const TargetInfo& target,
                             const BalanceSpec& spec);

EstimateResult estimate_mom(const TrialSample& trial, const TargetInfo& target,
                            const BalanceSpec& spec, const SolverOptions& opts = {});

EstimateResult estimate_eb(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec, const SolverOptions& opts = {});

EstimateResult estimate(Method method, const TrialSample& trial,
                        const TargetInfo& target, const BalanceSpec& spec,
                        const SolverOptions& opts = {});

/// sum gamma (2z - 1) y / sum gamma z.
double horvitz_thompson_contrast(const VectorXd& gamma, const VectorXd& z,
                                 const VectorXd& y);

/// Difference of gamma-weighted arm means.
double hajek_contrast(const VectorXd& gamma, const VectorXd& z, const VectorXd& y);

/// IOSW weights (1 - rho)/(rho pi) for treated and (1 - rho)/(rho (1 - pi))
/// for control, given fitted participation probabilities of trial units.
VectorXd inverse_odds_weights(const VectorXd& rho, const VectorXd& z);

struct FeatureBalance {
  std::string label;
  bool defined = true;     // false when the pooled spread is zero
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct BalanceReport {
  std::vector<FeatureBalance> features;  // one per non-intercept feature
  double ess_treated = 0.0;
  double ess_control = 0.0;

  double max_abs_smd_after() const;
  double max_abs_smd_before() const;
};

/// Standardized mean differences of the weighted trial against the target.
/// The pooled spread is sqrt((var_trial + var_target) / 2); with a
/// moments-only target only the trial variance is available and is used alone.
BalanceReport balance_report(const TrialSample& trial, const WeightSet& weights,
                             const TargetInfo& target, const BalanceSpec& spec);

}  // namespace transport
