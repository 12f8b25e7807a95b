#pragma once

#include <Eigen/Dense>

namespace readmit::quadrature {

/// Gauss-Hermite rule for the weight function exp(-x^2): integrates
/// polynomials of degree <= 2*order - 1 exactly. Nodes are symmetric about 0
/// and an odd order places one node exactly at 0, which the adaptive
/// recentering maps onto the posterior mode.
struct GaussHermiteRule {
  int order = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::VectorXd log_weights;
  bool adaptive = true;
};

/// Builds the rule by the Golub-Welsch eigendecomposition of the Jacobi
/// matrix; nodes are symmetrized exactly in mirrored pairs.
GaussHermiteRule gauss_hermite(int order);

}  // namespace readmit::quadrature
