#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "readmit/likelihood.hpp"
#include "readmit/model.hpp"
#include "readmit/optimizer.hpp"
#include "readmit/types.hpp"

namespace readmit::inference {

struct FitOptions {
  int quadrature_order = 0;  // 0 = adaptive order selection at theta0
  bool fit_null = true;      // also fit the intercept-only model (for R^2)
  optimizer::OptimizerConfig optimizer_config;
  std::optional<likelihood::ParameterVector> start;  // default: zeros, intercept 1, omega 0, sigma 1
};

/// Converged fit of one model specification on one cohort.
struct FitResult {
  ModelSpec model;
  CovariateSchema schema;
  bool censor_at_30 = false;

  std::vector<std::string> columns;         // design columns, intercept first
  std::vector<std::string> internal_names;  // optimization-scale parameter names
  likelihood::ParameterLayout layout;
  likelihood::ParameterVector estimate;     // reporting scale
  Eigen::VectorXd theta_internal;

  double loglik = 0.0;
  double null_loglik = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd hessian_internal;       // central-difference Hessian of -loglik at theta_hat
  Eigen::MatrixXd covariance_internal;    // its inverse
  Eigen::MatrixXd covariance_reporting;   // delta-method transform of the above
  bool covariance_ok = false;
  std::string covariance_message;

  int n_spells = 0;
  int n_subjects = 0;
  int quadrature_order = 0;
  bool converged = false;
  int iterations = 0;
  double max_abs_gradient = 0.0;
  optimizer::OptimizerTrace trace;

  int n_params() const { return layout.dim(); }
  bool has_null() const { return !std::isnan(null_loglik); }
};

/// Fits the frailty model by exact marginal maximum likelihood: adaptive
/// Gauss-Hermite quadrature inside, quasi-Newton outside. The default start
/// sets coefficients to zero with intercept 1, omega 0, and sigma_u 1.
FitResult fit_model(const Cohort& cohort, const ModelSpec& spec, const FitOptions& options = {});

struct CoefficientRow {
  std::string parameter;
  double estimate = 0.0;
  double std_error = 0.0;
  double p_value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

struct CoefficientReport {
  std::vector<CoefficientRow> rows;  // beta columns, then sd, then omega
};

/// Wald z statistics with two-sided normal p-values; omega and sigma_u are
/// back-transformed with delta-method standard errors. 95% CI is estimate
/// +/- 1.96 * SE on the reporting scale.
CoefficientReport coefficient_report(const FitResult& fit);

/// Fixed-width text table of the report (Parameter / Estimate / St. Error /
/// P-Value / 95% Confidence Interval).
std::string format_coefficient_table(const CoefficientReport& report);

struct HazardRatio {
  double ratio = 1.0;
  double std_error = std::numeric_limits<double>::quiet_NaN();  // delta method, when SE given
};

HazardRatio hazard_ratio(double coef);
HazardRatio hazard_ratio(double coef, double std_error);

/// Generalized R^2 = 1 - (L(0)/L(theta_hat))^(2/n), computed in log space.
/// n counts spells by default, subjects when use_subjects is set.
double generalized_r2(const FitResult& fit, bool use_subjects = false);

struct JointTest {
  double f_stat = 0.0;
  double p_value = 1.0;
  int q = 0;
  double df2 = 0.0;
};

/// Approximate F test of C theta = 0 by the delta method. C columns follow
/// the internal parameter order (beta columns, then omega when free, then
/// sigma_u) with theta and covariance on the reporting scale; the reference
/// distribution is F(q, n_spells - n_params).
JointTest wald_joint_test(const FitResult& fit, const Eigen::MatrixXd& constraints);

/// Schwarz criterion -2 loglik + p log(n_spells).
double bic(const FitResult& fit);

struct StepCandidate {
  std::string term;
  double p_value = 1.0;
  bool converged = false;
};

struct StepRecord {
  int step = 0;
  std::string phase;  // "forward" or "backward"
  std::vector<StepCandidate> evaluated;
  std::string action;  // "enter", "remove", "none"
  std::string term;
};

struct StepwiseOptions {
  double enter = 0.10;
  double remove = 0.15;
  // Wald p-values drive entry/removal by default; this switches to
  // likelihood-ratio tests (2 * loglik difference against chi-square).
  bool use_likelihood_ratio = false;
  FitOptions fit;
};

struct SelectionResult {
  ModelSpec final_model;
  FitResult final_fit;
  std::vector<StepRecord> steps;
};

/// Classic stepwise loop over candidate terms: forward-add the smallest-p
/// term when p <= enter, then backward-drop the largest-p included term when
/// p >= remove; ties break lexicographically and revisited states stop the
/// loop. Candidate fits that fail to converge are skipped and logged.
SelectionResult stepwise_select(const Cohort& cohort, const std::vector<Term>& candidates,
                                BaselineFamily family, const StepwiseOptions& options = {});

}  // namespace readmit::inference
