#include "readmit/optimizer.hpp"

#include "readmit/numdiff.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace readmit::optimizer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinePoint {
  double alpha = 0.0;
  double f = kInf;
  double slope = 0.0;  // directional derivative g(theta + alpha l)' l
  bool have_slope = false;
};

struct LineSearchResult {
  double alpha = 0.0;
  double f = kInf;
  Eigen::VectorXd gradient;
  bool ok = false;
  int evals = 0;
};

// Minimizer of the quadratic through (a.alpha, a.f) with slope a.slope and
// (b.alpha, b.f); exact for quadratic objectives.
double quadratic_step(const LinePoint& a, const LinePoint& b) {
  const double da = b.alpha - a.alpha;
  const double c = (b.f - a.f - a.slope * da) / (da * da);
  if (!(std::isfinite(c)) || c <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return a.alpha - a.slope / (2.0 * c);
}

class LineSearch {
 public:
  LineSearch(const Objective& f, const Gradient& g, const Eigen::VectorXd& theta,
             const Eigen::VectorXd& direction, double f0, double slope0,
             const OptimizerConfig& config)
      : f_(f), g_(g), theta_(theta), direction_(direction), f0_(f0), slope0_(slope0),
        config_(config) {}

  // Strong Wolfe search (bracket + zoom), then one secant refinement of the
  // step using the two most recent slopes; the refinement is kept only when
  // it also satisfies the Wolfe conditions and lowers f. On a quadratic the
  // secant step is the exact line minimizer.
  LineSearchResult run() {
    LinePoint zero{0.0, f0_, slope0_, true};
    LinePoint prev = zero;
    double alpha = 1.0;

    LineSearchResult best;
    for (int i = 0; i < config_.max_line_search_steps; ++i) {
      LinePoint cur = evaluate(alpha, /*need_slope=*/false);
      if (!std::isfinite(cur.f) || cur.f > f0_ + config_.sufficient_decrease * alpha * slope0_ ||
          (i > 0 && cur.f >= prev.f)) {
        best = zoom(prev, cur);
        break;
      }
      fill_slope(cur);
      if (std::fabs(cur.slope) <= -config_.curvature_constant * slope0_) {
        best = to_result(cur);
        break;
      }
      if (cur.slope >= 0.0) {
        best = zoom(cur, prev);
        break;
      }
      prev = cur;
      alpha = std::min(2.0 * alpha, 1e10);
    }
    if (!best.ok) return best;

    best = polish(zero, best);
    return best;
  }

  int evals() const { return evals_; }

 private:
  LinePoint evaluate(double alpha, bool need_slope) {
    LinePoint p;
    p.alpha = alpha;
    p.f = f_(theta_ + alpha * direction_);
    ++evals_;
    if (need_slope && std::isfinite(p.f)) fill_slope(p);
    return p;
  }

  void fill_slope(LinePoint& p) {
    if (p.have_slope) return;
    gradient_at_ = g_(theta_ + p.alpha * direction_);
    gradient_alpha_ = p.alpha;
    p.slope = gradient_at_.dot(direction_);
    p.have_slope = true;
  }

  LineSearchResult to_result(const LinePoint& p) {
    LineSearchResult r;
    r.alpha = p.alpha;
    r.f = p.f;
    if (gradient_alpha_ != p.alpha) {
      gradient_at_ = g_(theta_ + p.alpha * direction_);
      gradient_alpha_ = p.alpha;
    }
    r.gradient = gradient_at_;
    r.ok = true;
    r.evals = evals_;
    return r;
  }

  bool wolfe_ok(const LinePoint& p) const {
    return std::isfinite(p.f) &&
           p.f <= f0_ + config_.sufficient_decrease * p.alpha * slope0_ &&
           p.have_slope && std::fabs(p.slope) <= -config_.curvature_constant * slope0_;
  }

  LineSearchResult zoom(LinePoint lo, LinePoint hi) {
    fill_slope(lo);
    for (int i = 0; i < config_.max_line_search_steps; ++i) {
      double alpha = quadratic_step(lo, hi);
      const double a = std::min(lo.alpha, hi.alpha);
      const double b = std::max(lo.alpha, hi.alpha);
      const double span = b - a;
      if (!std::isfinite(alpha) || alpha <= a + 0.01 * span || alpha >= b - 0.01 * span)
        alpha = 0.5 * (a + b);
      LinePoint cur = evaluate(alpha, false);
      if (!std::isfinite(cur.f) || cur.f > f0_ + config_.sufficient_decrease * alpha * slope0_ ||
          cur.f >= lo.f) {
        hi = cur;
      } else {
        fill_slope(cur);
        if (std::fabs(cur.slope) <= -config_.curvature_constant * slope0_) return to_result(cur);
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = cur;
      }
      if (span <= 1e-14 * std::max(1.0, std::fabs(lo.alpha))) break;
    }
    // Fall back to the best sufficient-decrease point found.
    if (std::isfinite(lo.f) && lo.alpha > 0.0 &&
        lo.f <= f0_ + config_.sufficient_decrease * lo.alpha * slope0_) {
      fill_slope(lo);
      return to_result(lo);
    }
    return {};
  }

  // Secant iteration on the directional derivative; for quadratic objectives
  // the first refinement lands on the exact line minimizer.
  LineSearchResult polish(const LinePoint& zero, const LineSearchResult& accepted) {
    LineSearchResult best = accepted;
    LinePoint prev = zero;
    LinePoint at{accepted.alpha, accepted.f, accepted.gradient.dot(direction_), true};
    for (int refine = 0; refine < 3; ++refine) {
      const double denom = at.slope - prev.slope;
      if (denom == 0.0) break;
      const double alpha = at.alpha - at.slope * (at.alpha - prev.alpha) / denom;
      if (!std::isfinite(alpha) || alpha <= 0.0 || alpha > 10.0 * best.alpha ||
          std::fabs(alpha - at.alpha) <= 1e-13 * at.alpha)
        break;
      LinePoint cur = evaluate(alpha, true);
      if (!(wolfe_ok(cur) && cur.f <= best.f)) break;
      best = to_result(cur);
      prev = at;
      at = cur;
      if (std::fabs(cur.slope) <= 1e-12 * std::fabs(slope0_)) break;
    }
    return best;
  }

  const Objective& f_;
  const Gradient& g_;
  const Eigen::VectorXd& theta_;
  const Eigen::VectorXd& direction_;
  double f0_;
  double slope0_;
  const OptimizerConfig& config_;
  int evals_ = 0;
  Eigen::VectorXd gradient_at_;
  double gradient_alpha_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

void OptimizerConfig::validate() const {
  if (!(gradient_tolerance > 0.0)) throw std::invalid_argument("gradient_tolerance must be > 0");
  if (!(max_iterations > 0)) throw std::invalid_argument("max_iterations must be > 0");
  if (!(sufficient_decrease > 0.0 && sufficient_decrease < curvature_constant &&
        curvature_constant < 1.0))
    throw std::invalid_argument("line search constants must satisfy 0 < c1 < c2 < 1");
  if (!(max_line_search_steps > 0)) throw std::invalid_argument("max_line_search_steps must be > 0");
  if (!(initial_hessian_scale >= 0.0))
    throw std::invalid_argument("initial_hessian_scale must be >= 0");
  if (!(noise_floor_factor >= 1.0))
    throw std::invalid_argument("noise_floor_factor must be >= 1");
}

MinimizeResult minimize(const Objective& f, const Gradient& g, const Eigen::VectorXd& theta0,
                        const OptimizerConfig& config) {
  config.validate();
  const int n = static_cast<int>(theta0.size());
  if (n == 0) throw std::invalid_argument("minimize: empty starting point");
  if (!theta0.allFinite()) throw std::invalid_argument("minimize: non-finite starting point");

  MinimizeResult result;
  result.theta = theta0;
  result.f = f(theta0);
  if (!std::isfinite(result.f))
    throw std::invalid_argument("minimize: objective is not finite at the starting point");
  result.gradient = g(theta0);

  const double g0_norm = result.gradient.norm();
  const double hessian_scale =
      config.initial_hessian_scale > 0.0 ? config.initial_hessian_scale
                                         : (g0_norm > 0.0 ? g0_norm : 1.0);
  const double init_scale = 1.0 / hessian_scale;
  Eigen::MatrixXd inv_hessian = init_scale * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  bool used_reset = false;

  const auto converged_at = [&](double f_value, const Eigen::VectorXd& grad) {
    return grad.cwiseAbs().maxCoeff() <=
           config.gradient_tolerance * std::max(1.0, std::fabs(f_value));
  };

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    if (converged_at(result.f, result.gradient)) {
      result.converged = true;
      result.trace.termination = "converged";
      break;
    }

    Eigen::VectorXd direction = -(inv_hessian * result.gradient);
    double slope = direction.dot(result.gradient);
    if (!(slope < 0.0)) {
      // Curvature information went stale; restart from scaled steepest descent.
      inv_hessian = init_scale * identity;
      direction = -init_scale * result.gradient;
      slope = direction.dot(result.gradient);
    }

    LineSearch search(f, g, result.theta, direction, result.f, slope, config);
    LineSearchResult step = search.run();
    if (!step.ok) {
      if (!used_reset) {
        used_reset = true;
        inv_hessian = init_scale * identity;
        direction = -init_scale * result.gradient;
        slope = direction.dot(result.gradient);
        LineSearch retry(f, g, result.theta, direction, result.f, slope, config);
        step = retry.run();
      }
      if (!step.ok) {
        if (result.gradient.cwiseAbs().maxCoeff() <=
            config.noise_floor_factor * config.gradient_tolerance *
                std::max(1.0, std::fabs(result.f))) {
          result.converged = true;
          result.trace.termination = "converged-noise-floor";
          break;
        }
        result.trace.termination = "line-search-failure";
        throw std::runtime_error(
            "minimize: line search failed along the steepest-descent direction");
      }
    }

    const Eigen::VectorXd delta_theta = step.alpha * direction;
    const Eigen::VectorXd delta_grad = step.gradient - result.gradient;

    result.theta += delta_theta;
    result.f = step.f;
    result.gradient = step.gradient;
    result.iterations = iter + 1;

    IterationRecord record;
    record.iteration = iter + 1;
    record.theta = result.theta;
    record.f = result.f;
    record.max_abs_gradient = result.gradient.cwiseAbs().maxCoeff();
    record.step_length = step.alpha;
    record.direction_norm = direction.norm();
    result.trace.iterations.push_back(record);

    // BFGS inverse update, skipped when the curvature condition fails.
    const double sy = delta_theta.dot(delta_grad);
    if (sy > 1e-12 * delta_theta.norm() * delta_grad.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = identity - rho * delta_theta * delta_grad.transpose();
      inv_hessian = left * inv_hessian * left.transpose() +
                    rho * delta_theta * delta_theta.transpose();
      inv_hessian = 0.5 * (inv_hessian + inv_hessian.transpose()).eval();
    }
  }

  if (!result.converged) {
    if (converged_at(result.f, result.gradient)) {
      result.converged = true;
      result.trace.termination = "converged";
    } else if (result.trace.termination.empty()) {
      result.trace.termination = "max-iterations";
    }
  }

  // Report the Hessian approximation (inverse of the maintained inverse).
  Eigen::LLT<Eigen::MatrixXd> llt(inv_hessian);
  if (llt.info() == Eigen::Success) {
    result.hessian_approx = llt.solve(identity);
    result.hessian_approx = 0.5 * (result.hessian_approx + result.hessian_approx.transpose()).eval();
  } else {
    result.hessian_approx = identity / init_scale;
  }
  return result;
}

Eigen::MatrixXd wald_covariance(const Eigen::MatrixXd& hessian) {
  if (hessian.rows() != hessian.cols()) throw std::invalid_argument("wald_covariance: not square");
  const double asym = (hessian - hessian.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * std::max(1.0, hessian.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("wald_covariance: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (hessian + hessian.transpose()));
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("wald_covariance: eigendecomposition failed");
  const Eigen::VectorXd values = solver.eigenvalues();
  const double max_eigen = values.maxCoeff();

  int worst = 0;
  values.minCoeff(&worst);
  const double min_eigen = values(worst);
  if (!(min_eigen > 0.0) || max_eigen / min_eigen > 1e12) {
    std::ostringstream message;
    message << "wald_covariance: Hessian is not positive definite or is ill-conditioned "
            << "(eigenvalue " << min_eigen << " along direction [";
    const Eigen::VectorXd dir = solver.eigenvectors().col(worst);
    for (int i = 0; i < dir.size(); ++i) message << (i > 0 ? ", " : "") << dir(i);
    message << "])";
    throw std::runtime_error(message.str());
  }

  Eigen::MatrixXd cov = solver.eigenvectors() * values.cwiseInverse().asDiagonal() *
                        solver.eigenvectors().transpose();
  return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& theta) {
  return numdiff::fd_hessian(f, theta);
}

}  // namespace readmit::optimizer
