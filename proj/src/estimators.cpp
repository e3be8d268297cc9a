#include "transport/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace transport {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::IOSW: return "IOSW";
    case Method::OM: return "OM";
    case Method::TMLE: return "TMLE";
    case Method::MOM: return "MOM";
    case Method::EB: return "EB";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "iosw") return Method::IOSW;
  if (lower == "om") return Method::OM;
  if (lower == "tmle") return Method::TMLE;
  if (lower == "mom") return Method::MOM;
  if (lower == "eb") return Method::EB;
  throw Error(ErrorKind::Config, "unknown method '" + std::string(name) + "'");
}

namespace {

const TargetIndividual& require_individual(const TargetInfo& target, Method method) {
  const auto* rows = std::get_if<TargetIndividual>(&target);
  if (rows == nullptr) {
    throw Error(ErrorKind::EstimandUnavailable,
                std::string(to_string(method)) +
                    " requires individual-level target covariate data; only target "
                    "moments were supplied");
  }
  rows->validate();
  return *rows;
}

MatrixXd select_rows(const MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
  }
  return out;
}

VectorXd select(const VectorXd& v, const std::vector<Eigen::Index>& rows) {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[rows[k]];
  return out;
}

// Target-sample average of per-row values, honoring survey weights.
double target_mean(const TargetIndividual& target, const VectorXd& values) {
  if (target.q) return target.q->dot(values) / target.q->sum();
  return values.mean();
}

OutcomeFits fit_outcome_models(const TrialSample& trial, const MatrixXd& features) {
  const auto treated = trial.arm_rows(Arm::Treated);
  const auto control = trial.arm_rows(Arm::Control);
  const auto m = static_cast<std::size_t>(features.cols());
  if (treated.size() < m || control.size() < m) {
    throw Error(ErrorKind::Rank, "outcome model: each arm needs at least " +
                                     std::to_string(m) + " units");
  }
  try {
    return OutcomeFits{
        ols_fit(select_rows(features, treated), select(trial.y, treated), Arm::Treated),
        ols_fit(select_rows(features, control), select(trial.y, control), Arm::Control)};
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("outcome model: ") + e.what());
  }
}

struct SamplingModel {
  LogisticFit fit;
  VectorXd rho_trial;
  VectorXd rho_target;
};

SamplingModel fit_sampling_model(const MatrixXd& trial_features,
                                 const MatrixXd& target_features) {
  const auto n1 = trial_features.rows();
  const auto n0 = target_features.rows();
  MatrixXd stacked(n1 + n0, trial_features.cols());
  stacked.topRows(n1) = trial_features;
  stacked.bottomRows(n0) = target_features;
  VectorXd s(n1 + n0);
  s.head(n1).setOnes();
  s.tail(n0).setZero();

  SamplingModel model;
  model.fit = logistic_fit(stacked, s);
  model.rho_trial = predict_rho(model.fit, trial_features);
  model.rho_target = predict_rho(model.fit, target_features);
  return model;
}

}  // namespace

double horvitz_thompson_contrast(const VectorXd& gamma, const VectorXd& z,
                                 const VectorXd& y) {
  const double denom = gamma.dot(z);
  if (!(denom > 0.0)) {
    throw Error(ErrorKind::Degenerate, "treated weights sum to zero");
  }
  const VectorXd sign = 2.0 * z.array() - 1.0;
  return (gamma.array() * sign.array() * y.array()).sum() / denom;
}

double hajek_contrast(const VectorXd& gamma, const VectorXd& z, const VectorXd& y) {
  const double w1 = gamma.dot(z);
  const double w0 = gamma.sum() - w1;
  if (!(w1 > 0.0) || !(w0 > 0.0)) {
    throw Error(ErrorKind::Degenerate, "an arm has zero total weight");
  }
  const VectorXd control = (1.0 - z.array()).matrix();
  return (gamma.array() * z.array() * y.array()).sum() / w1 -
         (gamma.array() * control.array() * y.array()).sum() / w0;
}

VectorXd inverse_odds_weights(const VectorXd& rho, const VectorXd& z) {
  const double pi = z.mean();
  VectorXd gamma(rho.size());
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    const double odds = (1.0 - rho[i]) / rho[i];
    gamma[i] = odds / (z[i] == 1.0 ? pi : 1.0 - pi);
  }
  return gamma;
}

EstimateResult estimate_iosw(const TrialSample& trial, const TargetInfo& target,
                             const BalanceSpec& spec) {
  trial.validate();
  const auto& rows = require_individual(target, Method::IOSW);
  const MatrixXd features = apply_balance_spec(spec, trial.x);
  const auto model = fit_sampling_model(features, apply_balance_spec(spec, rows.x));

  EstimateResult result;
  result.method = Method::IOSW;
  result.mode = TargetMode::IndividualLevel;
  result.weights = WeightSet{inverse_odds_weights(model.rho_trial, trial.z),
                             WeightMethod::IOSW};
  result.tau_hat = hajek_contrast(result.weights->gamma, trial.z, trial.y);
  result.sampling = model.fit;
  return result;
}

EstimateResult estimate_om(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec) {
  trial.validate();
  const MatrixXd features = apply_balance_spec(spec, trial.x);
  EstimateResult result;
  result.method = Method::OM;
  result.mode = mode_of(target);
  result.outcome = fit_outcome_models(trial, features);
  const VectorXd contrast = result.outcome->treated.coef - result.outcome->control.coef;

  if (const auto* rows = std::get_if<TargetIndividual>(&target)) {
    rows->validate();
    const MatrixXd target_features = apply_balance_spec(spec, rows->x);
    result.tau_hat = target_mean(*rows, predict_mu(result.outcome->treated, target_features) -
                                            predict_mu(result.outcome->control, target_features));
  } else {
    result.tau_hat = resolve_target_moments(target, spec).dot(contrast);
  }
  return result;
}

EstimateResult estimate_tmle(const TrialSample& trial, const TargetInfo& target,
                             const BalanceSpec& spec) {
  trial.validate();
  const auto& rows = require_individual(target, Method::TMLE);
  const MatrixXd features = apply_balance_spec(spec, trial.x);
  const MatrixXd target_features = apply_balance_spec(spec, rows.x);

  EstimateResult result;
  result.method = Method::TMLE;
  result.mode = TargetMode::IndividualLevel;
  result.outcome = fit_outcome_models(trial, features);
  const auto model = fit_sampling_model(features, target_features);
  result.sampling = model.fit;

  const double pi = trial.z.mean();
  const VectorXd odds_trial = (1.0 - model.rho_trial.array()) / model.rho_trial.array();
  const VectorXd odds_target = (1.0 - model.rho_target.array()) / model.rho_target.array();

  // Clever covariates z*gamma and (1 - z)*gamma, offset by the arm's fit.
  const VectorXd mu1 = predict_mu(result.outcome->treated, features);
  const VectorXd mu0 = predict_mu(result.outcome->control, features);
  MatrixXd clever(features.rows(), 2);
  VectorXd residual(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const bool treated = trial.z[i] == 1.0;
    clever(i, 0) = treated ? odds_trial[i] / pi : 0.0;
    clever(i, 1) = treated ? 0.0 : odds_trial[i] / (1.0 - pi);
    residual[i] = trial.y[i] - (treated ? mu1[i] : mu0[i]);
  }
  const LinearFit fluct = ols_fit(clever, residual);
  const double eps1 = fluct.coef[0];
  const double eps0 = fluct.coef[1];
  result.fluctuation = std::make_pair(eps0, eps1);
  result.weights = WeightSet{inverse_odds_weights(model.rho_trial, trial.z),
                             WeightMethod::IOSW};

  // Target units have no observed z; each potential-outcome fit is updated
  // with the clever covariate of its own arm.
  const VectorXd mu1_t = predict_mu(result.outcome->treated, target_features) +
                         eps1 * odds_target / pi;
  const VectorXd mu0_t = predict_mu(result.outcome->control, target_features) +
                         eps0 * odds_target / (1.0 - pi);
  result.tau_hat = target_mean(rows, mu1_t - mu0_t);
  return result;
}

EstimateResult estimate_mom(const TrialSample& trial, const TargetInfo& target,
                            const BalanceSpec& spec, const SolverOptions& opts) {
  const VectorXd theta0 = resolve_target_moments(target, spec);
  auto fit = mom_weights(trial, spec, theta0, opts);
  EstimateResult result;
  result.method = Method::MOM;
  result.mode = mode_of(target);
  result.tau_hat = horvitz_thompson_contrast(fit.weights.gamma, trial.z, trial.y);
  result.weights = std::move(fit.weights);
  result.duals.push_back(std::move(fit.dual));
  return result;
}

EstimateResult estimate_eb(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec, const SolverOptions& opts) {
  const VectorXd theta0 = resolve_target_moments(target, spec);
  auto fit = eb_weights(trial, spec, theta0, opts);
  EstimateResult result;
  result.method = Method::EB;
  result.mode = mode_of(target);
  result.tau_hat = horvitz_thompson_contrast(fit.weights.gamma, trial.z, trial.y);
  result.weights = std::move(fit.weights);
  result.duals.push_back(std::move(fit.control));
  result.duals.push_back(std::move(fit.treated));
  return result;
}

EstimateResult estimate(Method method, const TrialSample& trial, const TargetInfo& target,
                        const BalanceSpec& spec, const SolverOptions& opts) {
  switch (method) {
    case Method::IOSW: return estimate_iosw(trial, target, spec);
    case Method::OM: return estimate_om(trial, target, spec);
    case Method::TMLE: return estimate_tmle(trial, target, spec);
    case Method::MOM: return estimate_mom(trial, target, spec, opts);
    case Method::EB: return estimate_eb(trial, target, spec, opts);
  }
  throw Error(ErrorKind::Config, "unknown method");
}

// ---------------------------------------------------------------------------
// Balance diagnostics

double BalanceReport::max_abs_smd_after() const {
  double out = 0.0;
  for (const auto& f : features) {
    if (f.defined) out = std::max(out, std::abs(f.smd_after));
  }
  return out;
}

double BalanceReport::max_abs_smd_before() const {
  double out = 0.0;
  for (const auto& f : features) {
    if (f.defined) out = std::max(out, std::abs(f.smd_before));
  }
  return out;
}

namespace {

double effective_size(const VectorXd& gamma, const VectorXd& z, double flag) {
  double sum = 0.0;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < gamma.size(); ++i) {
    if (z[i] != flag) continue;
    sum += gamma[i];
    sq += gamma[i] * gamma[i];
  }
  return sq > 0.0 ? sum * sum / sq : 0.0;
}

VectorXd column_variance(const MatrixXd& features) {
  const Eigen::RowVectorXd mean = features.colwise().mean();
  const double denom = std::max<double>(1.0, static_cast<double>(features.rows() - 1));
  return ((features.rowwise() - mean).array().square().colwise().sum() / denom).transpose();
}

}  // namespace

BalanceReport balance_report(const TrialSample& trial, const WeightSet& weights,
                             const TargetInfo& target, const BalanceSpec& spec) {
  trial.validate();
  if (weights.gamma.size() != trial.y.size()) {
    throw Error(ErrorKind::Dimension, "balance report: one weight per trial unit expected");
  }
  const double total = weights.gamma.sum();
  if (!(total > 0.0)) {
    throw Error(ErrorKind::Degenerate, "balance report: weights sum to zero");
  }
  const MatrixXd features = apply_balance_spec(spec, trial.x);
  const VectorXd theta0 = resolve_target_moments(target, spec);
  const VectorXd before = features.colwise().mean().transpose();
  const VectorXd after = features.transpose() * weights.gamma / total;
  const VectorXd trial_var = column_variance(features);
  VectorXd pooled_var = trial_var;
  if (const auto* rows = std::get_if<TargetIndividual>(&target)) {
    pooled_var = 0.5 * (trial_var + column_variance(apply_balance_spec(spec, rows->x)));
  }

  BalanceReport report;
  const auto labels = spec.labels();
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j + 1);
    FeatureBalance fb;
    fb.label = labels[j];
    const double spread = std::sqrt(pooled_var[k]);
    if (!(spread > 0.0)) {
      fb.defined = false;
    } else {
      fb.smd_before = (before[k] - theta0[k]) / spread;
      fb.smd_after = (after[k] - theta0[k]) / spread;
    }
    report.features.push_back(std::move(fb));
  }
  report.ess_treated = effective_size(weights.gamma, trial.z, 1.0);
  report.ess_control = effective_size(weights.gamma, trial.z, 0.0);
  return report;
}

}  // namespace transport
