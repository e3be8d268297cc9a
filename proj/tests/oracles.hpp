// Independent reference computations used by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// f(lambda) = sum exp(-c_i' lambda) + n1 theta0' lambda
inline double tilt(const MatrixXd& c, const VectorXd& theta0, double n1, const VectorXd& lambda) {
  return (-(c * lambda)).array().exp().sum() + n1 * theta0.dot(lambda);
}

inline double tilt_partial(const MatrixXd& c, const VectorXd& theta0, double n1,
                           const VectorXd& lambda, Eigen::Index j) {
  const VectorXd w = (-(c * lambda)).array().exp();
  return -c.col(j).dot(w) + n1 * theta0[j];
}

/// Grid search over a box followed by cyclic coordinate polishing, where each
/// coordinate step bisects the (monotone) partial derivative.
inline VectorXd minimize_tilt(const MatrixXd& c, const VectorXd& theta0, double n1,
                              double box = 4.0, int grid = 21) {
  const Eigen::Index m = c.cols();
  VectorXd best = VectorXd::Zero(m);
  double best_f = tilt(c, theta0, n1, best);
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  const double step = 2 * box / (grid - 1);
  for (;;) {
    VectorXd l(m);
    for (Eigen::Index j = 0; j < m; ++j) l[j] = -box + step * idx[static_cast<std::size_t>(j)];
    const double f = tilt(c, theta0, n1, l);
    if (f < best_f) {
      best_f = f;
      best = l;
    }
    Eigen::Index k = 0;
    while (k < m && ++idx[static_cast<std::size_t>(k)] == grid) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == m) break;
  }

  VectorXd l = best;
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double moved = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      double lo = l[j] - 1.0;
      double hi = l[j] + 1.0;
      auto d = [&](double v) {
        VectorXd t = l;
        t[j] = v;
        return tilt_partial(c, theta0, n1, t, j);
      };
      while (d(lo) > 0) lo -= 2 * (hi - lo);
      while (d(hi) < 0) hi += 2 * (hi - lo);
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (d(mid) > 0 ? hi : lo) = mid;
      }
      const double next = 0.5 * (lo + hi);
      moved = std::max(moved, std::abs(next - l[j]));
      l[j] = next;
    }
    if (moved < 1e-14) break;
  }
  return l;
}

/// (X'X)^-1 X'y through the normal equations.
inline VectorXd ols_normal_equations(const MatrixXd& x, const VectorXd& y) {
  const MatrixXd xtx = x.transpose() * x;
  return xtx.llt().solve(x.transpose() * y);
}

/// Augmented estimator: weighted residual corrections per arm plus theta0'(alpha - beta).
inline double tau_dr(const VectorXd& gamma, const VectorXd& z, const VectorXd& y,
                     const MatrixXd& c, const VectorXd& theta0, const VectorXd& alpha,
                     const VectorXd& beta) {
  double num1 = 0, den1 = 0, num0 = 0, den0 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (z[i] == 1.0) {
      num1 += gamma[i] * (y[i] - c.row(i).dot(alpha));
      den1 += gamma[i];
    } else {
      num0 += gamma[i] * (y[i] - c.row(i).dot(beta));
      den0 += gamma[i];
    }
  }
  return num1 / den1 - num0 / den0 + theta0.dot(alpha - beta);
}

/// Sum over units of the central-difference Jacobian of the per-unit equations.
inline MatrixXd fd_jacobian_sum(const std::function<MatrixXd(const VectorXd&)>& values,
                                const VectorXd& eta, double rel_step = 1e-5) {
  const Eigen::Index p = eta.size();
  MatrixXd jac(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double h = rel_step * std::max(1.0, std::abs(eta[k]));
    VectorXd up = eta, dn = eta;
    up[k] += h;
    dn[k] -= h;
    jac.col(k) = (values(up).colwise().sum() - values(dn).colwise().sum()).transpose() / (2 * h);
  }
  return jac;
}

/// Random point strictly inside the convex hull of the rows of c.
inline VectorXd interior_point(const MatrixXd& c, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(2.0, 1.0);
  VectorXd w(c.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = g(rng);
  w /= w.sum();
  return c.transpose() * w;
}

}  // namespace oracle
