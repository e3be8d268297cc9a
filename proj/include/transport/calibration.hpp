#pragma once

#include <cstddef>

#include "transport/data_model.hpp"

namespace transport {

/// Newton solver settings for the exponential-tilting duals.
struct SolverOptions {
  double tol = 1e-9;          // sup-norm of the balance residual, per trial unit
  int max_iter = 200;
  double min_step = 1e-14;    // line-search stall threshold
};

enum class DualStatus { Converged, IterationCap, LineSearchStall };

std::string_view to_string(DualStatus status);

/// Minimizer of f(lambda) = sum_i exp(-c_i' lambda) + n1 theta' lambda.
struct DualSolution {
  VectorXd lambda;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;  // ||sum_i c_i exp(-c_i' lambda) - n1 theta||_inf / n1
  DualStatus status = DualStatus::IterationCap;
};

enum class WeightMethod { EB, MOM, IOSW };

std::string_view to_string(WeightMethod method);

struct WeightSet {
  VectorXd gamma;  // one entry per trial unit, in trial order
  WeightMethod method = WeightMethod::EB;
};

/// Raw Newton run; never throws for non-convergence, only for rank and
/// shape problems. `converged` reports whether the tolerance was met.
DualSolution try_solve_arm_dual(const MatrixXd& features, const VectorXd& theta0,
                                double n1, const SolverOptions& opts = {});

/// As try_solve_arm_dual, but an unmet tolerance raises ErrorKind::Infeasible:
/// theta0 is (numerically) outside the convex hull of the rows of `features`.
DualSolution solve_arm_dual(const MatrixXd& features, const VectorXd& theta0,
                            double n1, const SolverOptions& opts = {});

/// Value of the dual objective; used by diagnostics and tests.
double tilting_objective(const MatrixXd& features, const VectorXd& theta0,
                         double n1, const VectorXd& lambda);

struct EbFit {
  WeightSet weights;
  DualSolution control;
  DualSolution treated;
};

/// Entropy-balancing weights: one dual per arm, each arm reweighted to
/// sum to n1 with feature mean theta0.
EbFit eb_weights(const TrialSample& trial, const BalanceSpec& spec,
                 const VectorXd& theta0, const SolverOptions& opts = {});

struct MomFit {
  WeightSet weights;
  DualSolution dual;  // over (2z - 1, c(x))
};

/// Method-of-moments weights from a single dual over the pooled trial.
MomFit mom_weights(const TrialSample& trial, const BalanceSpec& spec,
                   const VectorXd& theta0, const SolverOptions& opts = {});

}  // namespace transport
