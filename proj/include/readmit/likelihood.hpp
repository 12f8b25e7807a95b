#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "readmit/model.hpp"
#include "readmit/quadrature.hpp"
#include "readmit/types.hpp"

namespace readmit::likelihood {

/// Reporting-scale parameters of the Weibull-Gaussian frailty model.
/// Baseline hazard (omega + 1) * t^omega, so omega = 0 is the exponential
/// baseline; the overall scale is absorbed into the intercept coefficient.
struct ParameterVector {
  Eigen::VectorXd beta;  // per design column, intercept first
  double omega = 0.0;    // shape offset, > -1
  double sigma_u = 1.0;  // frailty standard deviation, > 0

  void validate() const;
};

/// Maps the reporting scale onto the unconstrained optimization scale
/// [beta..., log(omega+1) when free, log(sigma_u)]. omega is pinned at 0 for
/// the exponential family.
struct ParameterLayout {
  int n_beta = 0;
  bool omega_free = true;

  int dim() const { return n_beta + (omega_free ? 1 : 0) + 1; }
  std::vector<std::string> names(const std::vector<std::string>& beta_names) const;
};

Eigen::VectorXd pack_parameters(const ParameterVector& theta, const ParameterLayout& layout);
ParameterVector unpack_parameters(const Eigen::VectorXd& internal, const ParameterLayout& layout);

/// Evaluation failure inside a likelihood computation; carries the subject.
struct EvalError : std::runtime_error {
  EvalError(const std::string& subject, const std::string& message);
  std::string subject_id;
};

/// Spell-level data arranged for likelihood evaluation: design rows aligned
/// with times/events, plus per-subject row ranges. Subjects keep the cohort's
/// canonical (id-sorted) order, which fixes all summation orders.
struct ModelData {
  Eigen::MatrixXd X;
  Eigen::VectorXd time;
  Eigen::VectorXd log_time;
  Eigen::VectorXi event;
  std::vector<std::pair<int, int>> subject_rows;  // (first row, count)
  std::vector<std::string> subject_ids;

  int n_spells() const { return static_cast<int>(X.rows()); }
  int n_subjects() const { return static_cast<int>(subject_rows.size()); }
};

ModelData make_model_data(const Cohort& cohort, const DesignMatrix& design);

/// Per-subject sufficient statistics of the conditional log-likelihood:
/// l_i(gamma) = c + d * gamma - exp(gamma + log_a).
struct SubjectStats {
  double d = 0.0;      // number of observed events
  double log_a = 0.0;  // log sum_j t_j^(omega+1) exp(eta_j)
  double c = 0.0;      // sum over events of log lambda at gamma = 0
};

SubjectStats subject_stats(const ModelData& data, int subject, const ParameterVector& theta,
                           const Eigen::VectorXd& eta);

/// Weibull hazard (omega+1) t^omega exp(lin) at linear predictor lin = eta + gamma.
double hazard(double t, double omega, double lin);

/// Cumulative hazard t^(omega+1) exp(lin); d/dt equals hazard.
double cum_hazard(double t, double omega, double lin);

/// Conditional log-likelihood of one subject's spells at frailty value gamma.
double conditional_loglik(const ModelData& data, int subject, const ParameterVector& theta,
                          double gamma);

/// Empirical-Bayes frailty mode and curvature for given sufficient
/// statistics: solves d - exp(gamma + log_a) - gamma / sigma_u_sq = 0 by
/// safeguarded Newton iteration (the negative log joint is strictly convex).
struct FrailtyMode {
  double u_hat = 0.0;
  double curvature = 0.0;  // exp(u_hat + log_a) + 1 / sigma_u_sq
};

FrailtyMode frailty_mode(double d, double log_a, double sigma_u_sq);

/// Frailty posterior summary for one subject: mode, curvature, and the
/// sensitivity of the mode to the model parameters (internal scale), from
/// implicit differentiation of the mode equation.
struct SubjectPosterior {
  std::string subject_id;
  double u_hat = 0.0;
  double gamma_curv = 0.0;
  Eigen::VectorXd du_dtheta;
};

SubjectPosterior eb_mode(const ModelData& data, int subject, const ParameterVector& theta,
                         const ParameterLayout& layout);

/// Adaptive Gauss-Hermite log-integral of exp(log_integrand) recentered at
/// `center` and rescaled by `curvature`: nodes gamma_k = center +
/// sqrt(2/curvature) x_k, value log(sqrt(2/curvature) sum_k w_k exp(x_k^2)
/// exp(log_integrand(gamma_k))). Exposed so alternative integrands (e.g.
/// Gaussian products with closed forms) can exercise the quadrature path.
double adaptive_gh_log_integral(const quadrature::GaussHermiteRule& rule, double center,
                                double curvature,
                                const std::function<double(double)>& log_integrand);

/// Marginal log-likelihood: per-subject frailty integrals on the adaptively
/// recentered rule, combined by a fixed-order compensated sum. Subjects may
/// be evaluated concurrently (READMIT_THREADS); results are bit-identical
/// regardless of thread count.
double marginal_loglik(const ModelData& data, const ParameterVector& theta,
                       const quadrature::GaussHermiteRule& rule);

/// Smallest odd order Q whose log-likelihood at theta0 differs from the
/// previous order by relative magnitude < 1e-4; capped at 51.
quadrature::GaussHermiteRule select_quadrature_order(const ModelData& data,
                                                     const ParameterVector& theta0);

/// Central finite-difference gradient of the marginal log-likelihood on the
/// internal unconstrained scale, step cbrt(eps) * max(1, |theta_j|).
Eigen::VectorXd loglik_gradient(const ModelData& data, const Eigen::VectorXd& theta_internal,
                                const ParameterLayout& layout,
                                const quadrature::GaussHermiteRule& rule);

}  // namespace readmit::likelihood
