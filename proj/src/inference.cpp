#include "readmit/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "readmit/stats.hpp"

namespace readmit::inference {

namespace {

likelihood::ParameterVector default_start(int n_beta) {
  likelihood::ParameterVector theta;
  theta.beta = Eigen::VectorXd::Zero(n_beta);
  theta.beta(0) = 1.0;  // intercept
  theta.omega = 0.0;
  theta.sigma_u = 1.0;
  return theta;
}

// Diagonal Jacobian of the reporting scale w.r.t. the internal scale.
Eigen::VectorXd reporting_jacobian(const likelihood::ParameterVector& theta,
                                   const likelihood::ParameterLayout& layout) {
  Eigen::VectorXd jac = Eigen::VectorXd::Ones(layout.dim());
  int k = layout.n_beta;
  if (layout.omega_free) jac(k++) = theta.omega + 1.0;
  jac(k) = theta.sigma_u;
  return jac;
}

}  // namespace

FitResult fit_model(const Cohort& cohort, const ModelSpec& spec, const FitOptions& options) {
  const DesignMatrix design = build_design(cohort, spec);
  const likelihood::ModelData data = likelihood::make_model_data(cohort, design);

  likelihood::ParameterLayout layout;
  layout.n_beta = static_cast<int>(design.X.cols());
  layout.omega_free = spec.family == BaselineFamily::Weibull;

  likelihood::ParameterVector theta0 =
      options.start ? *options.start : default_start(layout.n_beta);
  if (theta0.beta.size() != layout.n_beta)
    throw std::invalid_argument("fit_model: starting beta does not match the design");
  if (!layout.omega_free && theta0.omega != 0.0)
    throw std::invalid_argument("fit_model: exponential baseline requires omega = 0");

  quadrature::GaussHermiteRule rule;
  if (options.quadrature_order == 0) {
    rule = likelihood::select_quadrature_order(data, theta0);
  } else {
    if (options.quadrature_order % 2 == 0)
      throw std::invalid_argument("fit_model: quadrature order must be odd");
    rule = quadrature::gauss_hermite(options.quadrature_order);
  }

  const auto objective = [&](const Eigen::VectorXd& v) -> double {
    try {
      return -likelihood::marginal_loglik(data, likelihood::unpack_parameters(v, layout), rule);
    } catch (const likelihood::EvalError&) {
      return std::numeric_limits<double>::infinity();  // line search rejects the step
    }
  };
  const auto gradient = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return -likelihood::loglik_gradient(data, v, layout, rule);
  };

  const Eigen::VectorXd start_internal = likelihood::pack_parameters(theta0, layout);
  optimizer::MinimizeResult opt =
      optimizer::minimize(objective, gradient, start_internal, options.optimizer_config);

  FitResult fit;
  fit.model = spec;
  fit.schema = cohort.schema;
  fit.censor_at_30 = cohort.censor_times_rewritten;
  fit.columns = design.columns;
  fit.internal_names = layout.names(design.columns);
  fit.layout = layout;
  fit.theta_internal = opt.theta;
  fit.estimate = likelihood::unpack_parameters(opt.theta, layout);
  fit.loglik = -opt.f;
  fit.n_spells = data.n_spells();
  fit.n_subjects = data.n_subjects();
  fit.quadrature_order = rule.order;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.max_abs_gradient = opt.gradient.cwiseAbs().maxCoeff();
  fit.trace = std::move(opt.trace);

  // Covariance from a fresh central-difference Hessian at the optimum; the
  // quasi-Newton approximation is kept only for the optimizer trace.
  try {
    fit.hessian_internal = optimizer::fd_hessian(objective, opt.theta);
    fit.covariance_internal = optimizer::wald_covariance(fit.hessian_internal);
    const Eigen::VectorXd jac = reporting_jacobian(fit.estimate, layout);
    fit.covariance_reporting =
        jac.asDiagonal() * fit.covariance_internal * jac.asDiagonal();
    fit.covariance_ok = true;
  } catch (const std::exception& error) {
    fit.covariance_ok = false;
    fit.covariance_message = error.what();
    if (fit.estimate.sigma_u < 1e-3)
      fit.covariance_message =
          "frailty standard deviation estimated at the boundary (sigma_u ~ 0); "
          "the observed information is singular there: " +
          fit.covariance_message;
  }

  if (options.fit_null) {
    if (spec.terms.empty()) {
      fit.null_loglik = fit.loglik;
    } else {
      ModelSpec null_spec;
      null_spec.family = spec.family;
      FitOptions null_options;
      null_options.quadrature_order = rule.order;  // same rule for a comparable ratio
      null_options.fit_null = false;
      null_options.optimizer_config = options.optimizer_config;
      const FitResult null_fit = fit_model(cohort, null_spec, null_options);
      if (null_fit.converged) fit.null_loglik = null_fit.loglik;
    }
  }
  return fit;
}

CoefficientReport coefficient_report(const FitResult& fit) {
  if (!fit.converged)
    throw std::runtime_error("coefficient_report: fit did not converge (max |g| = " +
                             std::to_string(fit.max_abs_gradient) + ")");
  if (!fit.covariance_ok)
    throw std::runtime_error("coefficient_report: covariance unavailable: " +
                             fit.covariance_message);

  const auto row_for = [](std::string name, double estimate, double se) {
    CoefficientRow row;
    row.parameter = std::move(name);
    row.estimate = estimate;
    row.std_error = se;
    row.p_value = se > 0.0 ? stats::two_sided_p(estimate / se) : 0.0;
    row.ci_lower = estimate - 1.96 * se;
    row.ci_upper = estimate + 1.96 * se;
    return row;
  };

  CoefficientReport report;
  const Eigen::VectorXd se = fit.covariance_reporting.diagonal().cwiseSqrt();
  for (int j = 0; j < fit.layout.n_beta; ++j)
    report.rows.push_back(row_for(fit.columns[static_cast<std::size_t>(j)], fit.estimate.beta(j), se(j)));
  report.rows.push_back(row_for("sd", fit.estimate.sigma_u, se(fit.layout.dim() - 1)));
  if (fit.layout.omega_free)
    report.rows.push_back(row_for("omega", fit.estimate.omega, se(fit.layout.n_beta)));
  return report;
}

namespace {

std::string format_p(double p) {
  char buf[32];
  if (p < 1e-4) return "<.0001";
  std::snprintf(buf, sizeof(buf), "%.4f", p);
  return buf;
}

std::string format_g(double v, int precision = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string format_coefficient_table(const CoefficientReport& report) {
  std::size_t name_width = std::string("Parameter").size();
  for (const auto& row : report.rows) name_width = std::max(name_width, row.parameter.size());

  std::ostringstream out;
  out << "Parameter";
  out << std::string(name_width - 9, ' ');
  out << "  Estimate    St. Error   P-Value   95% Confidence Interval\n";
  for (const auto& row : report.rows) {
    std::ostringstream line;
    line << row.parameter << std::string(name_width - row.parameter.size(), ' ');
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  %10s  %10s  %8s   (%s, %s)",
                  format_g(row.estimate).c_str(), format_g(row.std_error).c_str(),
                  format_p(row.p_value).c_str(), format_g(row.ci_lower).c_str(),
                  format_g(row.ci_upper).c_str());
    line << buf;
    out << line.str() << '\n';
  }
  return out.str();
}

HazardRatio hazard_ratio(double coef) {
  if (!std::isfinite(coef)) throw std::invalid_argument("hazard_ratio: coefficient must be finite");
  HazardRatio hr;
  hr.ratio = std::exp(coef);
  return hr;
}

HazardRatio hazard_ratio(double coef, double std_error) {
  HazardRatio hr = hazard_ratio(coef);
  hr.std_error = hr.ratio * std_error;
  return hr;
}

double generalized_r2(const FitResult& fit, bool use_subjects) {
  if (!fit.has_null())
    throw std::runtime_error(
        "generalized_r2: null log-likelihood unavailable; fit the intercept-only model first");
  const double n = static_cast<double>(use_subjects ? fit.n_subjects : fit.n_spells);
  if (!(n > 0)) throw std::runtime_error("generalized_r2: sample size must be positive");
  const double r2 = 1.0 - std::exp(2.0 * (fit.null_loglik - fit.loglik) / n);
  return std::max(0.0, r2);
}

JointTest wald_joint_test(const FitResult& fit, const Eigen::MatrixXd& constraints) {
  if (!fit.covariance_ok) throw std::runtime_error("wald_joint_test: covariance unavailable");
  const int p = fit.layout.dim();
  if (constraints.cols() != p)
    throw std::invalid_argument("wald_joint_test: constraint columns must match parameter count");
  const int q = static_cast<int>(constraints.rows());
  if (q < 1) throw std::invalid_argument("wald_joint_test: empty constraint matrix");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(constraints.transpose());
  if (qr.rank() < q) throw std::invalid_argument("wald_joint_test: constraint matrix is rank deficient");

  // Reporting-scale parameter vector in internal order.
  Eigen::VectorXd theta(p);
  theta.head(fit.layout.n_beta) = fit.estimate.beta;
  int k = fit.layout.n_beta;
  if (fit.layout.omega_free) theta(k++) = fit.estimate.omega;
  theta(k) = fit.estimate.sigma_u;

  const Eigen::VectorXd c_theta = constraints * theta;
  const Eigen::MatrixXd cvc = constraints * fit.covariance_reporting * constraints.transpose();
  const Eigen::VectorXd solved = cvc.ldlt().solve(c_theta);

  JointTest test;
  test.q = q;
  test.df2 = static_cast<double>(fit.n_spells - fit.n_params());
  if (!(test.df2 > 0)) throw std::runtime_error("wald_joint_test: nonpositive denominator df");
  test.f_stat = c_theta.dot(solved) / static_cast<double>(q);
  test.p_value = 1.0 - stats::f_cdf(test.f_stat, static_cast<double>(q), test.df2);
  return test;
}

double bic(const FitResult& fit) {
  return -2.0 * fit.loglik + static_cast<double>(fit.n_params()) *
                                 std::log(static_cast<double>(fit.n_spells));
}

namespace {

// p-value of one term inside a fitted model: Wald z for single columns, a
// joint F test across the term's column span otherwise.
double term_p_value(const FitResult& fit, const std::string& term_name) {
  int start = -1, width = 0;
  {
    int col = 1;  // after intercept
    for (const auto& term : fit.model.terms) {
      const int w = term_width(term, fit.schema);
      if (term.name == term_name) {
        start = col;
        width = w;
        break;
      }
      col += w;
    }
  }
  if (start < 0) throw std::logic_error("term_p_value: term not in model");
  if (width == 1) {
    const double est = fit.estimate.beta(start);
    const double se = std::sqrt(fit.covariance_reporting(start, start));
    return se > 0.0 ? stats::two_sided_p(est / se) : 0.0;
  }
  Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(width, fit.layout.dim());
  for (int r = 0; r < width; ++r) constraints(r, start + r) = 1.0;
  return wald_joint_test(fit, constraints).p_value;
}

ModelSpec spec_with_terms(const std::vector<Term>& terms, BaselineFamily family) {
  ModelSpec spec;
  spec.terms = terms;
  spec.family = family;
  return spec;
}

std::string state_key(const std::vector<Term>& terms) {
  std::vector<std::string> names;
  for (const auto& term : terms) names.push_back(term.name);
  std::sort(names.begin(), names.end());
  std::string key;
  for (const auto& name : names) key += name + "\x1f";
  return key;
}

}  // namespace

SelectionResult stepwise_select(const Cohort& cohort, const std::vector<Term>& candidates,
                                BaselineFamily family, const StepwiseOptions& options) {
  if (!(options.enter < options.remove))
    throw std::invalid_argument("stepwise_select: enter threshold must be below remove threshold");
  {
    ModelSpec all = spec_with_terms(candidates, family);
    all.validate(cohort.schema);  // rejects duplicates and unknown covariates up front
  }

  FitOptions candidate_options = options.fit;
  candidate_options.fit_null = false;

  SelectionResult result;
  std::vector<Term> current;
  std::set<std::string> visited;
  visited.insert(state_key(current));

  const auto fit_terms = [&](const std::vector<Term>& terms) {
    return fit_model(cohort, spec_with_terms(terms, family), candidate_options);
  };
  // A candidate p-value is usable when the fit converged; Wald additionally
  // needs the covariance.
  const auto usable = [&](const FitResult& fit) {
    return fit.converged && (options.use_likelihood_ratio || fit.covariance_ok);
  };
  const auto lr_p = [&](double loglik_full, double loglik_reduced, int df) {
    const double statistic = std::max(0.0, 2.0 * (loglik_full - loglik_reduced));
    return 1.0 - stats::chi2_cdf(statistic, static_cast<double>(df));
  };

  FitResult current_fit = fit_terms(current);

  int step = 0;
  while (true) {
    ++step;
    bool changed = false;
    std::string entered_this_step;

    // Forward: try each excluded candidate, admit the smallest p <= enter.
    StepRecord forward;
    forward.step = step;
    forward.phase = "forward";
    std::string best_term;
    double best_p = std::numeric_limits<double>::infinity();
    std::optional<FitResult> best_fit;
    for (const auto& candidate : candidates) {
      const bool included = std::any_of(current.begin(), current.end(), [&](const Term& t) {
        return t.name == candidate.name;
      });
      if (included) continue;
      std::vector<Term> trial = current;
      trial.push_back(candidate);
      StepCandidate eval;
      eval.term = candidate.name;
      try {
        FitResult fit = fit_terms(trial);
        if (usable(fit)) {
          eval.converged = true;
          eval.p_value = options.use_likelihood_ratio
                             ? lr_p(fit.loglik, current_fit.loglik,
                                    term_width(candidate, cohort.schema))
                             : term_p_value(fit, candidate.name);
          if (eval.p_value < best_p ||
              (eval.p_value == best_p && candidate.name < best_term)) {
            best_p = eval.p_value;
            best_term = candidate.name;
            best_fit = std::move(fit);
          }
        }
      } catch (const std::exception&) {
        eval.converged = false;  // skipped, recorded in the trace
      }
      forward.evaluated.push_back(eval);
    }
    if (!forward.evaluated.empty()) {
      if (best_p <= options.enter) {
        for (const auto& candidate : candidates) {
          if (candidate.name == best_term) {
            current.push_back(candidate);
            break;
          }
        }
        current_fit = std::move(*best_fit);
        forward.action = "enter";
        forward.term = best_term;
        entered_this_step = best_term;
        changed = true;
      } else {
        forward.action = "none";
      }
      result.steps.push_back(forward);
    }

    // Backward: drop the largest-p included term when p >= remove. The term
    // entered this step is exempt, so a term is never entered and removed in
    // the same iteration.
    if (!current.empty()) {
      StepRecord backward;
      backward.step = step;
      backward.phase = "backward";
      std::string worst_term;
      double worst_p = -1.0;
      if (usable(current_fit)) {
        for (const auto& term : current) {
          StepCandidate eval;
          eval.term = term.name;
          try {
            if (options.use_likelihood_ratio) {
              std::vector<Term> without = current;
              without.erase(std::remove_if(without.begin(), without.end(),
                                           [&](const Term& t) { return t.name == term.name; }),
                            without.end());
              const FitResult reduced = fit_terms(without);
              if (!reduced.converged) continue;
              eval.converged = true;
              eval.p_value =
                  lr_p(current_fit.loglik, reduced.loglik, term_width(term, cohort.schema));
            } else {
              eval.converged = true;
              eval.p_value = term_p_value(current_fit, term.name);
            }
          } catch (const std::exception&) {
            continue;
          }
          backward.evaluated.push_back(eval);
          if (term.name == entered_this_step) continue;
          if (eval.p_value > worst_p || (eval.p_value == worst_p && term.name < worst_term)) {
            worst_p = eval.p_value;
            worst_term = term.name;
          }
        }
      }
      if (worst_p >= options.remove) {
        current.erase(std::remove_if(current.begin(), current.end(),
                                     [&](const Term& t) { return t.name == worst_term; }),
                      current.end());
        try {
          current_fit = fit_terms(current);
        } catch (const std::exception&) {
          // keep going; the final refit below reports the real state
        }
        backward.action = "remove";
        backward.term = worst_term;
        changed = true;
      } else {
        backward.action = "none";
      }
      result.steps.push_back(backward);
    }

    if (!changed) break;
    const std::string key = state_key(current);
    if (!visited.insert(key).second) break;  // cycle detected
  }

  FitOptions final_options = options.fit;
  final_options.fit_null = true;
  result.final_model = spec_with_terms(current, family);
  result.final_fit = fit_model(cohort, result.final_model, final_options);
  return result;
}

}  // namespace readmit::inference
