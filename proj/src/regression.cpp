#include "transport/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace transport {

namespace {

constexpr double kPivotThreshold = 1e-10;

void check_rank(const Eigen::ColPivHouseholderQR<MatrixXd>& qr, const char* what) {
  if (qr.rank() < qr.cols()) {
    const auto col = qr.colsPermutation().indices()[qr.rank()];
    throw Error(ErrorKind::Rank, std::string(what) + ": design is rank deficient (column " +
                                     std::to_string(col + 1) + " is linearly dependent)");
  }
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

}  // namespace

LinearFit ols_fit(const MatrixXd& features, const VectorXd& y, std::optional<Arm> arm) {
  if (features.rows() != y.size()) {
    throw Error(ErrorKind::Dimension, "ols: features and outcome differ in length");
  }
  if (features.rows() < features.cols()) {
    throw Error(ErrorKind::Rank, "ols: fewer rows (" + std::to_string(features.rows()) +
                                     ") than coefficients (" +
                                     std::to_string(features.cols()) + ")");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(features);
  qr.setThreshold(kPivotThreshold);
  check_rank(qr, "ols");

  LinearFit fit;
  fit.coef = qr.solve(y);
  fit.arm = arm;
  fit.rss = (y - features * fit.coef).squaredNorm();
  return fit;
}

VectorXd inverse_logit(const VectorXd& eta) {
  VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    if (e >= 0.0) {
      p[i] = 1.0 / (1.0 + std::exp(-e));
    } else {
      const double ex = std::exp(e);
      p[i] = ex / (1.0 + ex);
    }
  }
  return p;
}

double logistic_loglik(const MatrixXd& features, const VectorXd& s,
                       const VectorXd& coef) {
  const VectorXd eta = features * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += s[i] * eta[i] - softplus(eta[i]);
  return ll;
}

LogisticFit logistic_fit(const MatrixXd& features, const VectorXd& s,
                         const LogisticOptions& opts) {
  if (features.rows() != s.size()) {
    throw Error(ErrorKind::Dimension, "logistic: features and labels differ in length");
  }
  const auto ones = (s.array() == 1.0).count();
  const auto zeros = (s.array() == 0.0).count();
  if (ones + zeros != s.size()) {
    throw Error(ErrorKind::Degenerate, "logistic: labels must be 0/1");
  }
  if (ones == 0 || zeros == 0) {
    throw Error(ErrorKind::Degenerate, "logistic: both classes must be present");
  }
  {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(features);
    qr.setThreshold(kPivotThreshold);
    check_rank(qr, "logistic");
  }

  const auto n = static_cast<double>(features.rows());
  LogisticFit fit;
  fit.coef = VectorXd::Zero(features.cols());
  double ll = logistic_loglik(features, s, fit.coef);
  fit.loglik_trace.push_back(ll);

  for (fit.iterations = 0;; ++fit.iterations) {
    const VectorXd p = inverse_logit(features * fit.coef);
    const VectorXd score = features.transpose() * (s - p);
    fit.score_norm = score.lpNorm<Eigen::Infinity>() / n;

    if ((s - p).cwiseAbs().maxCoeff() < 1e-8) {
      throw Error(ErrorKind::Separation,
                  "logistic: fitted probabilities reproduce the labels exactly "
                  "(complete separation)");
    }
    if (fit.score_norm <= opts.tol) {
      fit.converged = true;
      return fit;
    }
    if (fit.iterations >= opts.max_iter) {
      throw Error(ErrorKind::NotConverged,
                  "logistic: IRLS did not converge in " +
                      std::to_string(opts.max_iter) + " iterations");
    }

    const VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    const MatrixXd info = features.transpose() * w.asDiagonal() * features;
    Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      throw Error(ErrorKind::Separation, "logistic: information matrix is singular");
    }
    const VectorXd step = ldlt.solve(score);

    // Changes below round-off in the log-likelihood count as no decrease.
    const double slack = 64 * std::numeric_limits<double>::epsilon() * (std::abs(ll) + 1.0);
    double t = 1.0;
    VectorXd next = fit.coef + step;
    double ll_next = logistic_loglik(features, s, next);
    for (int halving = 0; halving < 40 && !(ll_next >= ll - slack); ++halving) {
      t *= 0.5;
      next = fit.coef + t * step;
      ll_next = logistic_loglik(features, s, next);
    }
    if (!(ll_next >= ll - slack)) {
      throw Error(ErrorKind::NotConverged, "logistic: step halving failed to improve");
    }
    fit.coef = std::move(next);
    ll = ll_next;
    fit.loglik_trace.push_back(ll);

    if (fit.coef.lpNorm<Eigen::Infinity>() > opts.separation_norm) {
      throw Error(ErrorKind::Separation,
                  "logistic: coefficients diverge (quasi-complete separation)");
    }
  }
}

VectorXd predict_mu(const LinearFit& fit, const MatrixXd& features) {
  if (features.cols() != fit.coef.size()) {
    throw Error(ErrorKind::Dimension, "predict_mu: feature dimension mismatch");
  }
  return features * fit.coef;
}

VectorXd predict_rho(const LogisticFit& fit, const MatrixXd& features) {
  if (features.cols() != fit.coef.size()) {
    throw Error(ErrorKind::Dimension, "predict_rho: feature dimension mismatch");
  }
  VectorXd p = inverse_logit(features * fit.coef);
  // Keep strictly inside (0, 1) even when exp underflows.
  constexpr double lo = std::numeric_limits<double>::min();
  for (auto& v : p) v = std::clamp(v, lo, 1.0 - std::numeric_limits<double>::epsilon() / 2);
  return p;
}

}  // namespace transport
