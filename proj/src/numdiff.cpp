#include "readmit/numdiff.hpp"

#include <cmath>
#include <limits>

namespace readmit::numdiff {

Eigen::VectorXd fd_gradient(const ScalarField& f, const Eigen::VectorXd& x) {
  const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::VectorXd gradient(x.size());
  Eigen::VectorXd point = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = cbrt_eps * std::max(1.0, std::fabs(x(j)));
    point(j) = x(j) + h;
    const double up = f(point);
    point(j) = x(j) - h;
    const double down = f(point);
    point(j) = x(j);
    gradient(j) = (up - down) / (2.0 * h);
  }
  return gradient;
}

Eigen::MatrixXd fd_hessian(const ScalarField& f, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  const double root4_eps = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  Eigen::VectorXd h(n);
  for (int j = 0; j < n; ++j) h(j) = root4_eps * std::max(1.0, std::fabs(x(j)));

  const double f0 = f(x);
  Eigen::MatrixXd hessian(n, n);
  Eigen::VectorXd point = x;

  for (int j = 0; j < n; ++j) {
    point(j) = x(j) + h(j);
    const double up = f(point);
    point(j) = x(j) - h(j);
    const double down = f(point);
    point(j) = x(j);
    hessian(j, j) = (up - 2.0 * f0 + down) / (h(j) * h(j));
  }
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      point(j) = x(j) + h(j);
      point(k) = x(k) + h(k);
      const double pp = f(point);
      point(k) = x(k) - h(k);
      const double pm = f(point);
      point(j) = x(j) - h(j);
      const double mm = f(point);
      point(k) = x(k) + h(k);
      const double mp = f(point);
      point(j) = x(j);
      point(k) = x(k);
      hessian(j, k) = hessian(k, j) = (pp - pm - mp + mm) / (4.0 * h(j) * h(k));
    }
  }
  return hessian;
}

}  // namespace readmit::numdiff
