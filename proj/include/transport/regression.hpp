#pragma once

#include <optional>
#include <vector>

#include "transport/data_model.hpp"

namespace transport {

struct LinearFit {
  VectorXd coef;
  std::optional<Arm> arm;
  double rss = 0.0;
};

struct LogisticFit {
  VectorXd coef;
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;  // ||X'(s - p)||_inf / n at the returned coef
  std::vector<double> loglik_trace;  // log-likelihood after each iterate, from the start
};

struct LogisticOptions {
  double tol = 1e-10;
  int max_iter = 100;
  double separation_norm = 1e3;
};

/// Least squares via column-pivoted QR. A pivot below 1e-10 of the largest
/// one is treated as rank deficiency and reported with its column.
LinearFit ols_fit(const MatrixXd& features, const VectorXd& y,
                  std::optional<Arm> arm = std::nullopt);

/// Bernoulli-logit MLE by IRLS with step halving on the log-likelihood.
LogisticFit logistic_fit(const MatrixXd& features, const VectorXd& s,
                         const LogisticOptions& opts = {});

/// Bernoulli log-likelihood at `coef`.
double logistic_loglik(const MatrixXd& features, const VectorXd& s,
                       const VectorXd& coef);

VectorXd predict_mu(const LinearFit& fit, const MatrixXd& features);
VectorXd predict_rho(const LogisticFit& fit, const MatrixXd& features);

/// Numerically stable inverse logit, elementwise.
VectorXd inverse_logit(const VectorXd& eta);

}  // namespace transport
