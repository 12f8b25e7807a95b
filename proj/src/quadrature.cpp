#include "readmit/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace readmit::quadrature {

GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");

  GaussHermiteRule rule;
  rule.order = order;
  const double sqrt_pi = std::sqrt(std::numbers::pi);

  if (order == 1) {
    rule.nodes = Eigen::VectorXd::Zero(1);
    rule.weights = Eigen::VectorXd::Constant(1, sqrt_pi);
    rule.log_weights = Eigen::VectorXd::Constant(1, 0.5 * std::log(std::numbers::pi));
    return rule;
  }

  // Jacobi matrix for Hermite polynomials: zero diagonal, off-diagonal sqrt(k/2).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(0.5 * k);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("gauss_hermite: eigendecomposition failed");

  std::vector<int> idx(static_cast<std::size_t>(order));
  for (int i = 0; i < order; ++i) idx[static_cast<std::size_t>(i)] = i;
  const Eigen::VectorXd raw_nodes = solver.eigenvalues();
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return raw_nodes(a) < raw_nodes(b); });

  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    rule.nodes(i) = raw_nodes(idx[static_cast<std::size_t>(i)]);
    const double v0 = solver.eigenvectors()(0, idx[static_cast<std::size_t>(i)]);
    rule.weights(i) = sqrt_pi * v0 * v0;
  }

  // Enforce exact symmetry: average mirrored pairs, pin the middle node at 0.
  for (int i = 0, j = order - 1; i < j; ++i, --j) {
    const double node = 0.5 * (rule.nodes(j) - rule.nodes(i));
    rule.nodes(i) = -node;
    rule.nodes(j) = node;
    const double weight = 0.5 * (rule.weights(i) + rule.weights(j));
    rule.weights(i) = weight;
    rule.weights(j) = weight;
  }
  if (order % 2 == 1) rule.nodes(order / 2) = 0.0;

  rule.log_weights.resize(order);
  for (int i = 0; i < order; ++i) {
    if (!(rule.weights(i) > 0.0))
      throw std::runtime_error("gauss_hermite: nonpositive weight computed");
    rule.log_weights(i) = std::log(rule.weights(i));
  }
  return rule;
}

}  // namespace readmit::quadrature
