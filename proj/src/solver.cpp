#include "lift3d/solver.hpp"

#include <cmath>
#include <limits>

namespace lift3d {

namespace {

Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Gradient components pointing out of the feasible box at an active bound are
// zeroed; convergence is declared on the remainder.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (int i = 0; i < g.size(); ++i) {
    if (x[i] <= lo[i] && g[i] > 0.0) pg[i] = 0.0;
    if (x[i] >= hi[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace

LmResult minimize_bounded(const ResidualFn& residuals, const JacobianFn& jacobian,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                          const Eigen::VectorXd& upper, const LmOptions& options) {
  LmResult result;
  result.x = clamp_to_box(x0, lower, upper);

  Eigen::VectorXd r;
  if (!residuals(result.x, r)) {
    result.feasible_start = false;
    result.objective = std::numeric_limits<double>::infinity();
    return result;
  }
  double f = r.squaredNorm();

  const int n = static_cast<int>(x0.size());
  Eigen::MatrixXd J(r.size(), n);
  double damping = options.initial_damping;

  for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
    jacobian(result.x, J);
    const Eigen::VectorXd jtr = J.transpose() * r;
    const Eigen::VectorXd grad = 2.0 * jtr;
    if (projected_gradient(grad, result.x, lower, upper).lpNorm<Eigen::Infinity>() <=
        options.gradient_tol) {
      result.converged = true;
      break;
    }

    const Eigen::MatrixXd jtj = J.transpose() * J;
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd aug = jtj;
      aug.diagonal() += damping * diag;
      const Eigen::VectorXd delta = aug.ldlt().solve(-jtr);
      const Eigen::VectorXd x_new = clamp_to_box(result.x + delta, lower, upper);
      const Eigen::VectorXd step = x_new - result.x;

      if (step.norm() <= options.step_tol * (result.x.norm() + options.step_tol)) {
        result.converged = true;
        break;
      }

      Eigen::VectorXd r_new;
      if (residuals(x_new, r_new)) {
        const double f_new = r_new.squaredNorm();
        if (f_new < f) {
          result.x = x_new;
          r = std::move(r_new);
          f = f_new;
          damping = std::max(damping * 0.25, 1e-14);
          accepted = true;
        }
      }
      if (!accepted) {
        damping *= 8.0;
        if (damping > 1e16) break;  // stalled: no acceptable step at any damping
      }
    }
    if (!accepted) break;
  }

  result.objective = f;
  return result;
}

}  // namespace lift3d
