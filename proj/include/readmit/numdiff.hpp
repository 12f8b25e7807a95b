#pragma once

#include <Eigen/Dense>
#include <functional>

namespace readmit::numdiff {

using ScalarField = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient, step cbrt(eps) * max(1, |x_j|).
Eigen::VectorXd fd_gradient(const ScalarField& f, const Eigen::VectorXd& x);

/// Central second-difference Hessian, step eps^(1/4) * max(1, |x_j|);
/// symmetric by construction.
Eigen::MatrixXd fd_hessian(const ScalarField& f, const Eigen::VectorXd& x);

}  // namespace readmit::numdiff
