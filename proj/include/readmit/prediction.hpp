#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "readmit/inference.hpp"
#include "readmit/likelihood.hpp"

namespace readmit::prediction {

/// Empirical-Bayes risk curves for one subject at the fitted parameters. The
/// covariate profile is the subject's most recent spell; for subjects with no
/// usable history the frailty sits at the prior mean 0 and new_subject is set.
struct RiskPrediction {
  std::string subject_id;
  double u_hat = 0.0;
  double eta = 0.0;            // linear predictor of the profile row
  double relative_risk = 1.0;  // exp(eta + u_hat)
  // Frailty prediction variance: the bottom-right entry of the block
  // prediction-variance matrix when the fit covariance is available (prior
  // variance for history-free subjects); NaN otherwise.
  double u_variance = std::numeric_limits<double>::quiet_NaN();
  bool new_subject = false;
  std::vector<double> times;
  std::vector<double> hazard;
  std::vector<double> pdf;
  std::vector<double> survivor;
};

struct PredictOptions {
  // Ignore the subject's history when estimating the frailty (u_hat = 0).
  bool ignore_history = false;
};

RiskPrediction predict_subject(const inference::FitResult& fit,
                               const likelihood::ModelData& data, int subject,
                               const std::vector<double>& times,
                               const PredictOptions& options = {});

/// Evaluates all subjects of a cohort against the fit's own schema and terms.
std::vector<RiskPrediction> predict_cohort(const inference::FitResult& fit, const Cohort& cohort,
                                           const std::vector<double>& times,
                                           const PredictOptions& options = {});

/// Block prediction variance of (theta_hat, gamma_hat_i): top-left the fit
/// covariance H^-1, off-diagonals H^-1 (du/dtheta)', bottom-right
/// Gamma^-1 + (du/dtheta) H^-1 (du/dtheta)'. All blocks on the internal scale.
struct PredictionVariance {
  Eigen::MatrixXd matrix;  // (p+1) x (p+1)
  int p = 0;               // parameter block size

  double frailty_variance() const { return matrix(p, p); }
};

PredictionVariance prediction_variance(const inference::FitResult& fit,
                                       const likelihood::SubjectPosterior& posterior);

/// Table of summary statistics of the predicted hazard at one time.
struct RiskSummary {
  double eval_time = 0.0;
  double min = 0.0, max = 0.0, median = 0.0, mean = 0.0, std_dev = 0.0;
  double pctl_1 = 0.0, pctl_5 = 0.0, pctl_90 = 0.0, pctl_95 = 0.0, pctl_99 = 0.0;
  std::size_t n = 0;
};

RiskSummary cohort_risk_summary(const std::vector<RiskPrediction>& predictions, double eval_time);

std::string format_risk_summary_table(const RiskSummary& summary);

struct RiskCutoff {
  bool is_quantile = false;
  double value = 0.0;  // absolute hazard threshold, or quantile in (0,1)
};

struct RiskLabel {
  std::string subject_id;
  double hazard = 0.0;
  bool high = false;
};

/// Labels subjects high/low by comparing the hazard at eval_time against the
/// cutoff; quantile cutoffs are computed from the prediction set itself.
std::vector<RiskLabel> classify_risk(const std::vector<RiskPrediction>& predictions,
                                     double eval_time, const RiskCutoff& cutoff);

}  // namespace readmit::prediction
