#include "transport/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace transport {

namespace {

struct Units {
  MatrixXd target_features;
  VectorXd q;
  VectorXd theta0_hat;
};

// theta0_hat plus, for the PATE, the target rows that estimate it.
Units target_units(const TargetInfo& target, const BalanceSpec& spec, Estimand estimand) {
  Units u;
  u.theta0_hat = resolve_target_moments(target, spec);
  if (estimand == Estimand::SATE) return u;
  const auto* rows = std::get_if<TargetIndividual>(&target);
  if (rows == nullptr) {
    throw Error(ErrorKind::EstimandUnavailable,
                "PATE inference needs individual-level target covariate data: "
                "treating target moments as fixed only supports the SATE");
  }
  u.target_features = apply_balance_spec(spec, rows->x);
  u.q = rows->q ? *rows->q : VectorXd::Ones(rows->x.rows());
  return u;
}

}  // namespace

InfluenceStack InfluenceStack::assemble(MatrixXd values, const MatrixXd& jacobian_sum,
                                        VectorXd estimate, Estimand estimand,
                                        TargetMode mode) {
  InfluenceStack s;
  s.n = static_cast<std::size_t>(values.rows());
  const double n = static_cast<double>(s.n);
  s.bread = jacobian_sum / n;
  s.meat = values.transpose() * values / n;
  s.values = std::move(values);
  s.estimate = std::move(estimate);
  s.estimand = estimand;
  s.mode = mode;
  return s;
}

// ---------------------------------------------------------------------------
// Entropy balancing

EbEquations::EbEquations(const TrialSample& trial, const TargetInfo& target,
                         const BalanceSpec& spec, Estimand estimand)
    : estimand_(estimand) {
  trial.validate();
  auto u = target_units(target, spec, estimand);
  trial_features_ = apply_balance_spec(spec, trial.x);
  target_features_ = std::move(u.target_features);
  q_ = std::move(u.q);
  theta0_hat_ = std::move(u.theta0_hat);
  z_ = trial.z;
  y_ = trial.y;
  m_ = trial_features_.cols();
}

Eigen::Index EbEquations::dimension() const {
  return (estimand_ == Estimand::PATE ? 3 : 2) * m_ + 1;
}

std::size_t EbEquations::units() const {
  return static_cast<std::size_t>(trial_features_.rows() + target_features_.rows());
}

VectorXd EbEquations::pack(const VectorXd& lambda0, const VectorXd& lambda1,
                           double tau) const {
  VectorXd eta(dimension());
  Eigen::Index at = 0;
  if (estimand_ == Estimand::PATE) {
    eta.segment(at, m_) = theta0_hat_;
    at += m_;
  }
  eta.segment(at, m_) = lambda0;
  eta.segment(at + m_, m_) = lambda1;
  eta[dimension() - 1] = tau;
  return eta;
}

EbEquations::View EbEquations::unpack(const VectorXd& eta) const {
  if (eta.size() != dimension()) {
    throw Error(ErrorKind::Dimension, "EB estimating equations: parameter size mismatch");
  }
  View v;
  Eigen::Index at = 0;
  if (estimand_ == Estimand::PATE) {
    v.theta0 = eta.segment(at, m_);
    at += m_;
  } else {
    v.theta0 = theta0_hat_;
  }
  v.lambda0 = eta.segment(at, m_);
  v.lambda1 = eta.segment(at + m_, m_);
  v.tau = eta[dimension() - 1];
  return v;
}

MatrixXd EbEquations::values(const VectorXd& eta) const {
  const View v = unpack(eta);
  const Eigen::Index p = dimension();
  const Eigen::Index n1 = trial_features_.rows();
  const Eigen::Index off = estimand_ == Estimand::PATE ? m_ : 0;
  MatrixXd g = MatrixXd::Zero(static_cast<Eigen::Index>(units()), p);

  const VectorXd g0 = (-(trial_features_ * v.lambda0)).array().exp();
  const VectorXd g1 = (-(trial_features_ * v.lambda1)).array().exp();
  for (Eigen::Index i = 0; i < n1; ++i) {
    const auto c = trial_features_.row(i).transpose();
    const bool treated = z_[i] == 1.0;
    g.row(i).segment(off, m_) =
        ((treated ? 0.0 : g0[i]) * c - v.theta0).transpose();
    g.row(i).segment(off + m_, m_) =
        ((treated ? g1[i] : 0.0) * c - v.theta0).transpose();
    g(i, p - 1) = treated ? g1[i] * (y_[i] - v.tau) : -g0[i] * y_[i];
  }
  for (Eigen::Index k = 0; k < target_features_.rows(); ++k) {
    g.row(n1 + k).head(m_) =
        (q_[k] * (target_features_.row(k).transpose() - v.theta0)).transpose();
  }
  return g;
}

MatrixXd EbEquations::jacobian_sum(const VectorXd& eta) const {
  const View v = unpack(eta);
  const Eigen::Index p = dimension();
  const Eigen::Index n1 = trial_features_.rows();
  const bool pate = estimand_ == Estimand::PATE;
  const Eigen::Index l0 = pate ? m_ : 0;
  const Eigen::Index l1 = l0 + m_;
  const Eigen::Index t = p - 1;
  MatrixXd jac = MatrixXd::Zero(p, p);

  const VectorXd g0 = (-(trial_features_ * v.lambda0)).array().exp();
  const VectorXd g1 = (-(trial_features_ * v.lambda1)).array().exp();
  VectorXd w0 = VectorXd::Zero(n1);
  VectorXd w1 = VectorXd::Zero(n1);
  for (Eigen::Index i = 0; i < n1; ++i) {
    (z_[i] == 1.0 ? w1 : w0)[i] = z_[i] == 1.0 ? g1[i] : g0[i];
  }
  const MatrixXd& c = trial_features_;

  // zeta blocks
  jac.block(l0, l0, m_, m_) = -(c.transpose() * w0.asDiagonal() * c);
  jac.block(l1, l1, m_, m_) = -(c.transpose() * w1.asDiagonal() * c);
  if (pate) {
    const double n1d = static_cast<double>(n1);
    jac.block(l0, 0, m_, m_) = -n1d * MatrixXd::Identity(m_, m_);
    jac.block(l1, 0, m_, m_) = -n1d * MatrixXd::Identity(m_, m_);
    jac.block(0, 0, m_, m_) = -q_.sum() * MatrixXd::Identity(m_, m_);
  }

  // psi row
  const VectorXd resid1 = (y_.array() - v.tau).matrix();
  jac.block(t, l1, 1, m_) = -(w1.array() * resid1.array()).matrix().transpose() * c;
  jac.block(t, l0, 1, m_) = (w0.array() * y_.array()).matrix().transpose() * c;
  jac(t, t) = -w1.sum();
  return jac;
}

// ---------------------------------------------------------------------------
// Outcome modeling

OmEquations::OmEquations(const TrialSample& trial, const TargetInfo& target,
                         const BalanceSpec& spec, Estimand estimand)
    : estimand_(estimand) {
  trial.validate();
  auto u = target_units(target, spec, estimand);
  trial_features_ = apply_balance_spec(spec, trial.x);
  target_features_ = std::move(u.target_features);
  q_ = std::move(u.q);
  theta0_hat_ = std::move(u.theta0_hat);
  z_ = trial.z;
  y_ = trial.y;
  m_ = trial_features_.cols();
}

Eigen::Index OmEquations::dimension() const {
  return (estimand_ == Estimand::PATE ? 3 : 2) * m_ + 1;
}

std::size_t OmEquations::units() const {
  return static_cast<std::size_t>(trial_features_.rows() + target_features_.rows());
}

VectorXd OmEquations::pack(const VectorXd& alpha, const VectorXd& beta, double tau) const {
  VectorXd eta(dimension());
  Eigen::Index at = 0;
  if (estimand_ == Estimand::PATE) {
    eta.head(m_) = theta0_hat_;
    at = m_;
  }
  eta.segment(at, m_) = alpha;
  eta.segment(at + m_, m_) = beta;
  eta[dimension() - 1] = tau;
  return eta;
}

MatrixXd OmEquations::values(const VectorXd& eta) const {
  if (eta.size() != dimension()) {
    throw Error(ErrorKind::Dimension, "OM estimating equations: parameter size mismatch");
  }
  const bool pate = estimand_ == Estimand::PATE;
  const Eigen::Index a = pate ? m_ : 0;
  const Eigen::Index b = a + m_;
  const Eigen::Index p = dimension();
  const VectorXd theta0 = pate ? VectorXd(eta.head(m_)) : theta0_hat_;
  const VectorXd alpha = eta.segment(a, m_);
  const VectorXd beta = eta.segment(b, m_);
  const double tau = eta[p - 1];
  const double tau_eq = tau - theta0.dot(alpha - beta);

  const Eigen::Index n1 = trial_features_.rows();
  MatrixXd g = MatrixXd::Zero(static_cast<Eigen::Index>(units()), p);
  for (Eigen::Index i = 0; i < n1; ++i) {
    const auto c = trial_features_.row(i);
    if (z_[i] == 1.0) {
      g.row(i).segment(a, m_) = c * (y_[i] - c.dot(alpha));
    } else {
      g.row(i).segment(b, m_) = c * (y_[i] - c.dot(beta));
    }
    g(i, p - 1) = tau_eq;
  }
  for (Eigen::Index k = 0; k < target_features_.rows(); ++k) {
    g.row(n1 + k).head(m_) =
        (q_[k] * (target_features_.row(k).transpose() - theta0)).transpose();
    g(n1 + k, p - 1) = tau_eq;
  }
  return g;
}

MatrixXd OmEquations::jacobian_sum(const VectorXd& eta) const {
  if (eta.size() != dimension()) {
    throw Error(ErrorKind::Dimension, "OM estimating equations: parameter size mismatch");
  }
  const bool pate = estimand_ == Estimand::PATE;
  const Eigen::Index a = pate ? m_ : 0;
  const Eigen::Index b = a + m_;
  const Eigen::Index p = dimension();
  const Eigen::Index t = p - 1;
  const VectorXd theta0 = pate ? VectorXd(eta.head(m_)) : theta0_hat_;
  const VectorXd alpha = eta.segment(a, m_);
  const VectorXd beta = eta.segment(b, m_);
  const double n = static_cast<double>(units());

  const VectorXd control = (1.0 - z_.array()).matrix();
  MatrixXd jac = MatrixXd::Zero(p, p);
  jac.block(a, a, m_, m_) = -(trial_features_.transpose() * z_.asDiagonal() * trial_features_);
  jac.block(b, b, m_, m_) =
      -(trial_features_.transpose() * control.asDiagonal() * trial_features_);
  jac.block(t, a, 1, m_) = -n * theta0.transpose();
  jac.block(t, b, 1, m_) = n * theta0.transpose();
  jac(t, t) = n;
  if (pate) {
    jac.block(0, 0, m_, m_) = -q_.sum() * MatrixXd::Identity(m_, m_);
    jac.block(t, 0, 1, m_) = -n * (alpha - beta).transpose();
  }
  return jac;
}

// ---------------------------------------------------------------------------

InfluenceStack eb_stack(const TrialSample& trial, const TargetInfo& target,
                        const BalanceSpec& spec, const EbFit& fit, double tau_hat,
                        Estimand estimand) {
  if (!fit.control.converged || !fit.treated.converged) {
    throw Error(ErrorKind::Infeasible, "EB stack requires a converged dual solution");
  }
  const EbEquations eq(trial, target, spec, estimand);
  const VectorXd eta = eq.pack(fit.control.lambda, fit.treated.lambda, tau_hat);
  const TargetMode mode = estimand == Estimand::PATE ? TargetMode::IndividualLevel
                                                     : mode_of(target);
  return InfluenceStack::assemble(eq.values(eta), eq.jacobian_sum(eta), eta, estimand, mode);
}

InfluenceStack om_stack(const TrialSample& trial, const TargetInfo& target,
                        const BalanceSpec& spec, const OutcomeFits& fits,
                        double tau_hat, Estimand estimand) {
  const OmEquations eq(trial, target, spec, estimand);
  const VectorXd eta = eq.pack(fits.treated.coef, fits.control.coef, tau_hat);
  const TargetMode mode = estimand == Estimand::PATE ? TargetMode::IndividualLevel
                                                     : mode_of(target);
  return InfluenceStack::assemble(eq.values(eta), eq.jacobian_sum(eta), eta, estimand, mode);
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::Config, "confidence level must lie in (0, 1)");
  }
  const boost::math::normal_distribution<double> std_normal;
  return boost::math::quantile(std_normal, 0.5 + level / 2.0);
}

MatrixXd sandwich_covariance(const InfluenceStack& stack) {
  Eigen::FullPivLU<MatrixXd> lu(stack.bread);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw Error(ErrorKind::Rank, "sandwich: bread matrix is singular");
  }
  const MatrixXd a_inv = lu.inverse();
  return a_inv * stack.meat * a_inv.transpose() / static_cast<double>(stack.n);
}

IntervalResult sandwich(const InfluenceStack& stack, double level) {
  const MatrixXd cov = sandwich_covariance(stack);
  const Eigen::Index t = stack.dimension() - 1;
  IntervalResult r;
  r.tau_hat = stack.estimate[t];
  r.std_err = std::sqrt(std::max(cov(t, t), 0.0));
  const double half = normal_critical_value(level) * r.std_err;
  r.ci_lower = r.tau_hat - half;
  r.ci_upper = r.tau_hat + half;
  r.level = level;
  r.estimand = stack.estimand;
  r.mode = stack.mode;
  return r;
}

IntervalResult eb_interval(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec, Estimand estimand,
                           const SolverOptions& opts, double level) {
  const VectorXd theta0 = resolve_target_moments(target, spec);
  // Fail on an unavailable estimand before paying for the solve.
  if (estimand == Estimand::PATE && mode_of(target) == TargetMode::MomentsOnly) {
    target_units(target, spec, estimand);
  }
  const EbFit fit = eb_weights(trial, spec, theta0, opts);
  const double tau = horvitz_thompson_contrast(fit.weights.gamma, trial.z, trial.y);
  return sandwich(eb_stack(trial, target, spec, fit, tau, estimand), level);
}

IntervalResult om_interval(const TrialSample& trial, const TargetInfo& target,
                           const BalanceSpec& spec, Estimand estimand, double level) {
  if (estimand == Estimand::PATE && mode_of(target) == TargetMode::MomentsOnly) {
    target_units(target, spec, estimand);
  }
  const EstimateResult om = estimate_om(trial, target, spec);
  return sandwich(om_stack(trial, target, spec, *om.outcome, om.tau_hat, estimand), level);
}

BootstrapInterval bootstrap_interval(
    const std::function<double(const TrialSample&)>& estimator,
    const TrialSample& trial, int resamples, std::uint64_t seed, double level) {
  if (resamples < 2) {
    throw Error(ErrorKind::Config, "bootstrap needs at least 2 resamples");
  }
  BootstrapInterval out;
  out.level = level;
  out.tau_hat = estimator(trial);

  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(trial.size());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(resamples));
  TrialSample boot{MatrixXd(n, trial.x.cols()), VectorXd(n), VectorXd(n)};
  for (int r = 0; r < resamples; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = pick(rng);
      boot.x.row(i) = trial.x.row(k);
      boot.z[i] = trial.z[k];
      boot.y[i] = trial.y[k];
    }
    try {
      draws.push_back(estimator(boot));
    } catch (const Error&) {
      ++out.failures;
    }
  }
  out.resamples = static_cast<int>(draws.size());
  if (draws.size() < 2) {
    throw Error(ErrorKind::Degenerate, "bootstrap: fewer than 2 successful resamples");
  }
  const double mean =
      std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
  double ss = 0.0;
  for (double d : draws) ss += (d - mean) * (d - mean);
  out.std_err = std::sqrt(ss / static_cast<double>(draws.size() - 1));

  std::sort(draws.begin(), draws.end());
  const auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(draws.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, draws.size() - 1);
    return draws[lo] + (pos - static_cast<double>(lo)) * (draws[hi] - draws[lo]);
  };
  out.ci_lower = quantile((1.0 - level) / 2.0);
  out.ci_upper = quantile(1.0 - (1.0 - level) / 2.0);
  return out;
}

}  // namespace transport
