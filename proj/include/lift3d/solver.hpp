#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace lift3d {

// Fills r with the residual vector at x; returns false when x is infeasible
// for the model (e.g. geometry behind the camera), in which case the trial
// point is rejected.
using ResidualFn = std::function<bool(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;
// Fills J (residual_count x param_count); only called at feasible points.
using JacobianFn = std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& J)>;

struct LmOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-8;  // inf-norm of the projected gradient of sum r_i^2
  double step_tol = 1e-10;
  double initial_damping = 1e-3;
};

struct LmResult {
  Eigen::VectorXd x;
  double objective = 0.0;  // sum of squared residuals at x
  bool converged = false;
  bool feasible_start = true;
  int iterations = 0;
};

// Levenberg-Marquardt with box constraints enforced by projecting each trial
// step onto [lower, upper]. Accepted steps strictly decrease the objective, so
// the final objective never exceeds the starting one. Componentwise +-inf
// bounds mean "free".
LmResult minimize_bounded(const ResidualFn& residuals, const JacobianFn& jacobian,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                          const Eigen::VectorXd& upper, const LmOptions& options = {});

}  // namespace lift3d
