#include "transport/calibration.hpp"

#include <cmath>
#include <limits>

namespace transport {

std::string_view to_string(DualStatus status) {
  switch (status) {
    case DualStatus::Converged: return "converged";
    case DualStatus::IterationCap: return "iteration cap reached";
    case DualStatus::LineSearchStall: return "line search stalled";
  }
  return "unknown";
}

std::string_view to_string(WeightMethod method) {
  switch (method) {
    case WeightMethod::EB: return "EB";
    case WeightMethod::MOM: return "MOM";
    case WeightMethod::IOSW: return "IOSW";
  }
  return "unknown";
}

namespace {

constexpr double kRankThreshold = 1e-10;

void check_full_rank(const MatrixXd& features) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(features);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < features.cols()) {
    const auto col = qr.colsPermutation().indices()[qr.rank()];
    throw Error(ErrorKind::Rank,
                "balance features are collinear (feature column " +
                    std::to_string(col + 1) + " is linearly dependent)");
  }
}

// One extra full Newton step past the tolerance, kept only if it shrinks the
// residual; pushes the balance error down to rounding level.
void polish(const MatrixXd& features, const VectorXd& theta0, double n1,
            DualSolution& sol, VectorXd& w, VectorXd& grad) {
  const MatrixXd hessian = features.transpose() * w.asDiagonal() * features;
  Eigen::LLT<MatrixXd> llt(hessian);
  if (llt.info() != Eigen::Success) return;
  const VectorXd trial = sol.lambda - llt.solve(grad);
  VectorXd w_new = (-(features * trial)).array().exp();
  VectorXd grad_new = n1 * theta0 - features.transpose() * w_new;
  const double norm = grad_new.lpNorm<Eigen::Infinity>() / n1;
  if (!std::isfinite(norm) || norm >= sol.grad_norm) return;
  sol.lambda = trial;
  sol.grad_norm = norm;
  w = std::move(w_new);
  grad = std::move(grad_new);
}

}  // namespace

double tilting_objective(const MatrixXd& features, const VectorXd& theta0,
                         double n1, const VectorXd& lambda) {
  return (-(features * lambda)).array().exp().sum() + n1 * theta0.dot(lambda);
}

DualSolution try_solve_arm_dual(const MatrixXd& features, const VectorXd& theta0,
                                double n1, const SolverOptions& opts) {
  if (features.rows() == 0) {
    throw Error(ErrorKind::Degenerate, "tilting dual: no units in this arm");
  }
  if (features.cols() != theta0.size()) {
    throw Error(ErrorKind::Dimension,
                "tilting dual: feature columns do not match target moments");
  }
  if (n1 < static_cast<double>(features.rows())) {
    throw Error(ErrorKind::Config, "tilting dual: n1 smaller than the arm size");
  }
  check_full_rank(features);

  const auto m = features.cols();
  DualSolution sol;
  sol.lambda = VectorXd::Zero(m);

  VectorXd w = (-(features * sol.lambda)).array().exp();
  VectorXd grad = n1 * theta0 - features.transpose() * w;
  double f = w.sum() + n1 * theta0.dot(sol.lambda);

  for (sol.iterations = 0;; ++sol.iterations) {
    sol.grad_norm = grad.lpNorm<Eigen::Infinity>() / n1;
    if (sol.grad_norm <= opts.tol) {
      polish(features, theta0, n1, sol, w, grad);
      sol.converged = true;
      sol.status = DualStatus::Converged;
      return sol;
    }
    if (sol.iterations >= opts.max_iter) {
      sol.status = DualStatus::IterationCap;
      return sol;
    }

    MatrixXd hessian = features.transpose() * w.asDiagonal() * features;
    Eigen::LLT<MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) {
      hessian.diagonal().array() += 1e-10 * hessian.trace() / static_cast<double>(m);
      llt.compute(hessian);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::Rank, "tilting dual: Hessian is not positive definite");
      }
    }
    const VectorXd step = -llt.solve(grad);
    const double slope = grad.dot(step);

    // Backtracking on f. Near the optimum the decrease drops below the
    // rounding level of f, so a step that keeps f within rounding and
    // shrinks the residual is accepted as well.
    double t = 1.0;
    bool accepted = false;
    while (t >= opts.min_step) {
      const VectorXd trial = sol.lambda + t * step;
      VectorXd w_new = (-(features * trial)).array().exp();
      const double f_new = w_new.sum() + n1 * theta0.dot(trial);
      if (std::isfinite(f_new)) {
        const double rounding = 64.0 * std::numeric_limits<double>::epsilon() *
                                (std::abs(f) + w_new.sum());
        VectorXd grad_new = n1 * theta0 - features.transpose() * w_new;
        const bool armijo = f_new <= f + 1e-4 * t * slope;
        const bool flat = f_new <= f + rounding &&
                          grad_new.lpNorm<Eigen::Infinity>() <
                              grad.lpNorm<Eigen::Infinity>();
        if (armijo || flat) {
          sol.lambda = trial;
          w = std::move(w_new);
          grad = std::move(grad_new);
          f = f_new;
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      sol.status = DualStatus::LineSearchStall;
      return sol;
    }
  }
}

DualSolution solve_arm_dual(const MatrixXd& features, const VectorXd& theta0,
                            double n1, const SolverOptions& opts) {
  DualSolution sol = try_solve_arm_dual(features, theta0, n1, opts);
  if (!sol.converged) {
    throw Error(ErrorKind::Infeasible,
                "balance constraints not attained (" +
                    std::string(to_string(sol.status)) + " after " +
                    std::to_string(sol.iterations) +
                    " iterations, residual " + std::to_string(sol.grad_norm) +
                    "); target moments are likely outside the covariate hull");
  }
  return sol;
}

namespace {

MatrixXd select_rows(const MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
  }
  return out;
}

}  // namespace

EbFit eb_weights(const TrialSample& trial, const BalanceSpec& spec,
                 const VectorXd& theta0, const SolverOptions& opts) {
  trial.validate();
  const MatrixXd features = apply_balance_spec(spec, trial.x);
  if (features.cols() != theta0.size()) {
    throw Error(ErrorKind::Dimension,
                "entropy balancing: target moments do not match the balance spec");
  }
  const auto n1 = static_cast<double>(trial.size());

  EbFit fit;
  fit.weights.method = WeightMethod::EB;
  fit.weights.gamma.resize(features.rows());
  for (const Arm arm : {Arm::Control, Arm::Treated}) {
    const auto rows = trial.arm_rows(arm);
    const MatrixXd arm_features = select_rows(features, rows);
    DualSolution sol;
    try {
      sol = solve_arm_dual(arm_features, theta0, n1, opts);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(to_string(arm)) + " arm: " + e.what());
    }
    const VectorXd gamma = (-(arm_features * sol.lambda)).array().exp();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      fit.weights.gamma[rows[k]] = gamma[static_cast<Eigen::Index>(k)];
    }
    (arm == Arm::Treated ? fit.treated : fit.control) = std::move(sol);
  }
  return fit;
}

MomFit mom_weights(const TrialSample& trial, const BalanceSpec& spec,
                   const VectorXd& theta0, const SolverOptions& opts) {
  trial.validate();
  const MatrixXd features = apply_balance_spec(spec, trial.x);
  if (features.cols() != theta0.size()) {
    throw Error(ErrorKind::Dimension,
                "method of moments: target moments do not match the balance spec");
  }
  MatrixXd augmented(features.rows(), features.cols() + 1);
  augmented.col(0) = 2.0 * trial.z.array() - 1.0;
  augmented.rightCols(features.cols()) = features;
  VectorXd target(theta0.size() + 1);
  target[0] = 0.0;
  target.tail(theta0.size()) = theta0;

  MomFit fit;
  fit.dual = solve_arm_dual(augmented, target, static_cast<double>(trial.size()), opts);
  fit.weights.method = WeightMethod::MOM;
  fit.weights.gamma = (-(augmented * fit.dual.lambda)).array().exp();
  return fit;
}

}  // namespace transport
