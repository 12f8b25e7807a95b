#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace readmit::optimizer {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct OptimizerConfig {
  int max_iterations = 500;
  // Convergence when max_j |g_j| <= gradient_tolerance * max(1, |f|).
  double gradient_tolerance = 1e-8;
  double sufficient_decrease = 1e-4;  // Wolfe c1
  double curvature_constant = 0.9;    // Wolfe c2
  int max_line_search_steps = 40;
  // Initial Hessian approximation = scale * identity; 0 picks ||g(theta0)||.
  double initial_hessian_scale = 0.0;
  // A line-search failure along steepest descent ends the run as converged
  // when max|g| <= noise_floor_factor * gradient_tolerance * max(1, |f|):
  // finite-difference gradients cannot resolve below their evaluation noise,
  // which sits near the plain tolerance for large |f|.
  double noise_floor_factor = 10.0;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  Eigen::VectorXd theta;
  double f = 0.0;
  double max_abs_gradient = 0.0;
  double step_length = 0.0;
  double direction_norm = 0.0;
};

struct OptimizerTrace {
  std::vector<IterationRecord> iterations;
  std::string termination;  // "converged", "max-iterations", ...
};

struct MinimizeResult {
  Eigen::VectorXd theta;
  double f = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian_approx;  // BFGS approximation, positive definite
  bool converged = false;
  int iterations = 0;
  OptimizerTrace trace;
};

/// BFGS minimization with a strong-Wolfe line search. The inverse-Hessian
/// approximation starts at I/||g0|| and is updated only when the curvature
/// condition holds; a non-finite objective value rejects the trial step. On
/// line-search failure the direction is reset to steepest descent once.
MinimizeResult minimize(const Objective& f, const Gradient& g, const Eigen::VectorXd& theta0,
                        const OptimizerConfig& config = {});

/// Inverse of a symmetric positive-definite Hessian. Throws when the matrix
/// is not PD or its condition number exceeds 1e12, naming the offending
/// eigendirection.
Eigen::MatrixXd wald_covariance(const Eigen::MatrixXd& hessian);

/// Dense Hessian of f at theta by central second differences,
/// step eps^(1/4) * max(1, |theta_j|); exactly symmetric by construction.
Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& theta);

}  // namespace readmit::optimizer
