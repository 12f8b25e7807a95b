#include "readmit/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "readmit/numdiff.hpp"
#include "readmit/stats.hpp"

namespace readmit::likelihood {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void ParameterVector::validate() const {
  if (!(omega > -1.0)) throw std::invalid_argument("omega must be > -1");
  if (!(sigma_u > 0.0)) throw std::invalid_argument("sigma_u must be > 0");
  if (beta.size() == 0) throw std::invalid_argument("beta must be nonempty");
  if (!beta.allFinite() || !std::isfinite(omega) || !std::isfinite(sigma_u))
    throw std::invalid_argument("parameters must be finite");
}

std::vector<std::string> ParameterLayout::names(const std::vector<std::string>& beta_names) const {
  std::vector<std::string> out(beta_names.begin(), beta_names.end());
  if (omega_free) out.push_back("log(omega+1)");
  out.push_back("log(sigma_u)");
  return out;
}

Eigen::VectorXd pack_parameters(const ParameterVector& theta, const ParameterLayout& layout) {
  theta.validate();
  if (theta.beta.size() != layout.n_beta)
    throw std::invalid_argument("pack_parameters: beta size mismatch");
  Eigen::VectorXd out(layout.dim());
  out.head(layout.n_beta) = theta.beta;
  int k = layout.n_beta;
  if (layout.omega_free) out(k++) = std::log1p(theta.omega);
  out(k) = std::log(theta.sigma_u);
  return out;
}

ParameterVector unpack_parameters(const Eigen::VectorXd& internal, const ParameterLayout& layout) {
  if (internal.size() != layout.dim())
    throw std::invalid_argument("unpack_parameters: dimension mismatch");
  ParameterVector theta;
  theta.beta = internal.head(layout.n_beta);
  int k = layout.n_beta;
  theta.omega = layout.omega_free ? std::expm1(internal(k++)) : 0.0;
  theta.sigma_u = std::exp(internal(k));
  return theta;
}

EvalError::EvalError(const std::string& subject, const std::string& message)
    : std::runtime_error("subject '" + subject + "': " + message), subject_id(subject) {}

ModelData make_model_data(const Cohort& cohort, const DesignMatrix& design) {
  ModelData data;
  data.X = design.X;
  const int n = data.n_spells();
  data.time.resize(n);
  data.log_time.resize(n);
  data.event.resize(n);

  int row = 0;
  for (const auto& subject : cohort.subjects) {
    data.subject_rows.emplace_back(row, static_cast<int>(subject.spells.size()));
    data.subject_ids.push_back(subject.id);
    for (const auto& spell : subject.spells) {
      data.time(row) = spell.time;
      data.log_time(row) = std::log(spell.time);
      data.event(row) = spell.event;
      ++row;
    }
  }
  if (row != n) throw std::invalid_argument("make_model_data: design/cohort row count mismatch");
  return data;
}

double hazard(double t, double omega, double lin) {
  if (!(t > 0.0)) throw std::domain_error("hazard: t must be positive");
  if (!(omega > -1.0)) throw std::domain_error("hazard: omega must be > -1");
  return std::exp(std::log1p(omega) + omega * std::log(t) + lin);
}

double cum_hazard(double t, double omega, double lin) {
  if (!(t > 0.0)) throw std::domain_error("cum_hazard: t must be positive");
  if (!(omega > -1.0)) throw std::domain_error("cum_hazard: omega must be > -1");
  return std::exp((omega + 1.0) * std::log(t) + lin);
}

SubjectStats subject_stats(const ModelData& data, int subject, const ParameterVector& theta,
                           const Eigen::VectorXd& eta) {
  const auto [first, count] = data.subject_rows[static_cast<std::size_t>(subject)];
  const double log_shape = std::log1p(theta.omega);

  SubjectStats stats;
  // log_a by log-sum-exp over spells; keeps extreme linear predictors finite.
  double m = -kInf;
  for (int j = first; j < first + count; ++j) {
    if (!std::isfinite(eta(j)))
      throw EvalError(data.subject_ids[static_cast<std::size_t>(subject)],
                      "non-finite linear predictor");
    m = std::max(m, (theta.omega + 1.0) * data.log_time(j) + eta(j));
  }
  double sum = 0.0;
  for (int j = first; j < first + count; ++j) {
    const double term = (theta.omega + 1.0) * data.log_time(j) + eta(j);
    sum += std::exp(term - m);
    if (data.event(j) == 1) {
      stats.d += 1.0;
      stats.c += log_shape + theta.omega * data.log_time(j) + eta(j);
    }
  }
  stats.log_a = m + std::log(sum);
  return stats;
}

double conditional_loglik(const ModelData& data, int subject, const ParameterVector& theta,
                          double gamma) {
  theta.validate();
  const Eigen::VectorXd eta = data.X * theta.beta;
  const SubjectStats stats = subject_stats(data, subject, theta, eta);
  return stats.c + stats.d * gamma - std::exp(gamma + stats.log_a);
}

FrailtyMode frailty_mode(double d, double log_a, double sigma_u_sq) {
  if (!(sigma_u_sq > 0.0)) throw std::invalid_argument("frailty_mode: sigma_u_sq must be > 0");
  if (!(d >= 0.0)) throw std::invalid_argument("frailty_mode: d must be >= 0");

  FrailtyMode mode;
  if (log_a == -kInf) {  // no cumulative-hazard mass: score is d - gamma/sigma^2
    mode.u_hat = d * sigma_u_sq;
    mode.curvature = 1.0 / sigma_u_sq;
    return mode;
  }

  const auto score = [&](double g) { return d - std::exp(g + log_a) - g / sigma_u_sq; };

  // The score is strictly decreasing; bracket the root, then Newton with
  // bisection safeguarding.
  double lo, hi;
  const double s0 = score(0.0);
  if (s0 == 0.0) {
    mode.u_hat = 0.0;
    mode.curvature = std::exp(log_a) + 1.0 / sigma_u_sq;
    return mode;
  }
  if (s0 > 0.0) {
    lo = 0.0;
    hi = 1.0;
    int guard = 0;
    while (score(hi) > 0.0) {
      lo = hi;
      hi *= 2.0;
      if (++guard > 200) throw std::runtime_error("frailty_mode: failed to bracket the mode");
    }
  } else {
    hi = 0.0;
    lo = -1.0;
    int guard = 0;
    while (score(lo) < 0.0) {
      hi = lo;
      lo *= 2.0;
      if (++guard > 200) throw std::runtime_error("frailty_mode: failed to bracket the mode");
    }
  }

  double g = 0.5 * (lo + hi);
  if (lo <= 0.0 && 0.0 <= hi) g = 0.0;
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    const double s = score(g);
    if (s == 0.0) {  // g is the root exactly
      converged = true;
      break;
    }
    if (s > 0.0) lo = g;
    else hi = g;
    const double curvature = std::exp(g + log_a) + 1.0 / sigma_u_sq;
    double g_next = std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(curvature) && curvature > 0.0) g_next = g + s / curvature;
    if (!std::isfinite(g_next) || g_next < lo || g_next > hi) g_next = 0.5 * (lo + hi);
    const bool small_step = std::fabs(g_next - g) <= 1e-15 * std::max(1.0, std::fabs(g));
    g = g_next;
    if (small_step) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw std::runtime_error("frailty_mode: Newton iteration did not converge after 100 steps");
  mode.u_hat = g;
  mode.curvature = std::exp(g + log_a) + 1.0 / sigma_u_sq;
  return mode;
}

SubjectPosterior eb_mode(const ModelData& data, int subject, const ParameterVector& theta,
                         const ParameterLayout& layout) {
  theta.validate();
  if (theta.beta.size() != layout.n_beta || layout.n_beta != data.X.cols())
    throw std::invalid_argument("eb_mode: layout/design mismatch");

  const Eigen::VectorXd eta = data.X * theta.beta;
  const SubjectStats stats = subject_stats(data, subject, theta, eta);
  const double sigma_sq = theta.sigma_u * theta.sigma_u;
  const FrailtyMode mode = frailty_mode(stats.d, stats.log_a, sigma_sq);

  SubjectPosterior posterior;
  posterior.subject_id = data.subject_ids[static_cast<std::size_t>(subject)];
  posterior.u_hat = mode.u_hat;
  posterior.gamma_curv = mode.curvature;

  // Implicit differentiation of the mode equation g(gamma, theta) = 0 with
  // g = d - exp(gamma + log_a) - gamma/sigma^2: du/dtheta = (dg/dtheta) / curvature.
  const auto [first, count] = data.subject_rows[static_cast<std::size_t>(subject)];
  Eigen::VectorXd dg(layout.dim());
  dg.setZero();
  for (int j = first; j < first + count; ++j) {
    const double w = std::exp(mode.u_hat + (theta.omega + 1.0) * data.log_time(j) + eta(j));
    dg.head(layout.n_beta) -= w * data.X.row(j).transpose();
    if (layout.omega_free) dg(layout.n_beta) -= w * data.log_time(j) * (theta.omega + 1.0);
  }
  dg(layout.dim() - 1) = 2.0 * mode.u_hat / sigma_sq;
  posterior.du_dtheta = dg / mode.curvature;
  return posterior;
}

double adaptive_gh_log_integral(const quadrature::GaussHermiteRule& rule, double center,
                                double curvature,
                                const std::function<double(double)>& log_integrand) {
  if (!(curvature > 0.0))
    throw std::invalid_argument("adaptive_gh_log_integral: curvature must be > 0");
  const double scale = std::sqrt(2.0 / curvature);
  std::vector<double> terms(static_cast<std::size_t>(rule.order));
  for (int k = 0; k < rule.order; ++k) {
    const double x = rule.nodes(k);
    terms[static_cast<std::size_t>(k)] =
        rule.log_weights(k) + x * x + log_integrand(center + scale * x);
  }
  return std::log(scale) + stats::log_sum_exp(terms);
}

namespace {

double subject_log_marginal(const SubjectStats& stats, double sigma_u,
                            const quadrature::GaussHermiteRule& rule) {
  const double sigma_sq = sigma_u * sigma_u;
  const FrailtyMode mode = frailty_mode(stats.d, stats.log_a, sigma_sq);
  const double scale = std::sqrt(2.0 / mode.curvature);
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma_u);

  double terms[64];
  for (int k = 0; k < rule.order; ++k) {
    const double gamma = mode.u_hat + scale * rule.nodes(k);
    const double loglik = stats.c + stats.d * gamma - std::exp(gamma + stats.log_a);
    const double log_prior = log_norm - 0.5 * gamma * gamma / sigma_sq;
    terms[k] = rule.log_weights(k) + rule.nodes(k) * rule.nodes(k) + loglik + log_prior;
  }
  return std::log(scale) +
         stats::log_sum_exp(std::span<const double>(terms, static_cast<std::size_t>(rule.order)));
}

}  // namespace

double marginal_loglik(const ModelData& data, const ParameterVector& theta,
                       const quadrature::GaussHermiteRule& rule) {
  theta.validate();
  if (rule.order < 1 || rule.order > 64)
    throw std::invalid_argument("marginal_loglik: unsupported quadrature order");
  if (theta.beta.size() != data.X.cols())
    throw std::invalid_argument("marginal_loglik: beta size does not match design");

  const Eigen::VectorXd eta = data.X * theta.beta;
  const std::size_t n = static_cast<std::size_t>(data.n_subjects());
  std::vector<double> per_subject(n);

  stats::parallel_for(n, stats::env_thread_count(), [&](std::size_t i) {
    const SubjectStats s = subject_stats(data, static_cast<int>(i), theta, eta);
    per_subject[i] = subject_log_marginal(s, theta.sigma_u, rule);
  });

  for (std::size_t i = 0; i < n; ++i) {
    if (per_subject[i] == -kInf)
      throw EvalError(data.subject_ids[i], "marginal likelihood underflowed to zero");
    if (std::isnan(per_subject[i]))
      throw EvalError(data.subject_ids[i], "marginal likelihood is NaN");
  }
  return stats::compensated_sum(per_subject);
}

quadrature::GaussHermiteRule select_quadrature_order(const ModelData& data,
                                                     const ParameterVector& theta0) {
  constexpr int kMaxOrder = 51;
  double previous = marginal_loglik(data, theta0, quadrature::gauss_hermite(1));
  for (int order = 3; order <= kMaxOrder; order += 2) {
    auto rule = quadrature::gauss_hermite(order);
    const double current = marginal_loglik(data, theta0, rule);
    const double rel = std::fabs(current - previous) / std::max(1e-12, std::fabs(previous));
    if (rel < 1e-4) return rule;
    previous = current;
  }
  throw std::runtime_error(
      "select_quadrature_order: log-likelihood did not stabilize by order 51; "
      "consider rescaling covariates or reconsidering starting values");
}

Eigen::VectorXd loglik_gradient(const ModelData& data, const Eigen::VectorXd& theta_internal,
                                const ParameterLayout& layout,
                                const quadrature::GaussHermiteRule& rule) {
  return numdiff::fd_gradient(
      [&](const Eigen::VectorXd& v) {
        return marginal_loglik(data, unpack_parameters(v, layout), rule);
      },
      theta_internal);
}

}  // namespace readmit::likelihood
