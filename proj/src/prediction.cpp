#include "readmit/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "readmit/stats.hpp"

namespace readmit::prediction {

namespace {

std::vector<double> hazards_at(const std::vector<RiskPrediction>& predictions, double eval_time) {
  std::vector<double> out;
  out.reserve(predictions.size());
  for (const auto& prediction : predictions) {
    bool found = false;
    for (std::size_t k = 0; k < prediction.times.size(); ++k) {
      if (prediction.times[k] == eval_time) {
        out.push_back(prediction.hazard[k]);
        found = true;
        break;
      }
    }
    if (!found) {  // evaluate on demand; the relative risk is time-free
      throw std::invalid_argument("eval_time " + std::to_string(eval_time) +
                                  " not among prediction times for subject '" +
                                  prediction.subject_id + "'");
    }
  }
  return out;
}

}  // namespace

RiskPrediction predict_subject(const inference::FitResult& fit,
                               const likelihood::ModelData& data, int subject,
                               const std::vector<double>& times, const PredictOptions& options) {
  if (subject < 0 || subject >= data.n_subjects())
    throw std::invalid_argument("predict_subject: subject index out of range");
  for (double t : times)
    if (!(t > 0.0 && t <= 31.0))
      throw std::invalid_argument("predict_subject: evaluation times must lie in (0, 31]");

  RiskPrediction prediction;
  prediction.subject_id = data.subject_ids[static_cast<std::size_t>(subject)];

  if (options.ignore_history) {
    prediction.u_hat = 0.0;
    prediction.new_subject = true;
    prediction.u_variance = fit.estimate.sigma_u * fit.estimate.sigma_u;  // prior variance
  } else {
    const likelihood::SubjectPosterior posterior =
        likelihood::eb_mode(data, subject, fit.estimate, fit.layout);
    prediction.u_hat = posterior.u_hat;
    if (fit.covariance_ok)
      prediction.u_variance = prediction_variance(fit, posterior).frailty_variance();
  }

  // Profile row: the subject's most recent spell.
  const auto [first, count] = data.subject_rows[static_cast<std::size_t>(subject)];
  const Eigen::VectorXd profile = data.X.row(first + count - 1);
  prediction.eta = profile.dot(fit.estimate.beta);
  const double lin = prediction.eta + prediction.u_hat;
  prediction.relative_risk = std::exp(lin);

  prediction.times = times;
  prediction.hazard.reserve(times.size());
  prediction.pdf.reserve(times.size());
  prediction.survivor.reserve(times.size());
  for (double t : times) {
    const double hazard = likelihood::hazard(t, fit.estimate.omega, lin);
    const double survivor = std::exp(-likelihood::cum_hazard(t, fit.estimate.omega, lin));
    prediction.hazard.push_back(hazard);
    prediction.survivor.push_back(survivor);
    prediction.pdf.push_back(hazard * survivor);
  }
  return prediction;
}

std::vector<RiskPrediction> predict_cohort(const inference::FitResult& fit, const Cohort& cohort,
                                           const std::vector<double>& times,
                                           const PredictOptions& options) {
  const DesignMatrix design = build_design(cohort, fit.model);
  if (design.columns != fit.columns)
    throw std::invalid_argument(
        "predict_cohort: cohort design does not match the fitted model's columns");
  const likelihood::ModelData data = likelihood::make_model_data(cohort, design);

  std::vector<RiskPrediction> predictions(static_cast<std::size_t>(data.n_subjects()));
  stats::parallel_for(predictions.size(), stats::env_thread_count(), [&](std::size_t i) {
    predictions[i] = predict_subject(fit, data, static_cast<int>(i), times, options);
  });
  return predictions;
}

PredictionVariance prediction_variance(const inference::FitResult& fit,
                                       const likelihood::SubjectPosterior& posterior) {
  if (!fit.covariance_ok)
    throw std::runtime_error("prediction_variance: fit covariance unavailable");
  if (!(posterior.gamma_curv > 0.0))
    throw std::invalid_argument("prediction_variance: posterior curvature must be positive");
  const int p = fit.layout.dim();
  if (posterior.du_dtheta.size() != p)
    throw std::invalid_argument("prediction_variance: du/dtheta dimension mismatch");

  const Eigen::MatrixXd& cov = fit.covariance_internal;
  const Eigen::VectorXd cross = cov * posterior.du_dtheta;

  PredictionVariance variance;
  variance.p = p;
  variance.matrix.resize(p + 1, p + 1);
  variance.matrix.topLeftCorner(p, p) = cov;
  variance.matrix.topRightCorner(p, 1) = cross;
  variance.matrix.bottomLeftCorner(1, p) = cross.transpose();
  variance.matrix(p, p) = 1.0 / posterior.gamma_curv + posterior.du_dtheta.dot(cross);

  const double asym =
      (variance.matrix - variance.matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, variance.matrix.cwiseAbs().maxCoeff()))
    throw std::runtime_error("prediction_variance: assembled matrix is not symmetric");
  return variance;
}

RiskSummary cohort_risk_summary(const std::vector<RiskPrediction>& predictions, double eval_time) {
  if (predictions.empty()) throw std::invalid_argument("cohort_risk_summary: empty prediction list");

  std::vector<double> hazards = hazards_at(predictions, eval_time);
  std::sort(hazards.begin(), hazards.end());

  RiskSummary summary;
  summary.eval_time = eval_time;
  summary.n = hazards.size();
  summary.min = hazards.front();
  summary.max = hazards.back();
  summary.median = stats::quantile_interpolated(hazards, 0.5);
  summary.mean = stats::compensated_sum(hazards) / static_cast<double>(hazards.size());
  double ss = 0.0;
  for (double h : hazards) ss += (h - summary.mean) * (h - summary.mean);
  summary.std_dev = hazards.size() > 1 ? std::sqrt(ss / static_cast<double>(hazards.size() - 1)) : 0.0;
  summary.pctl_1 = stats::quantile_interpolated(hazards, 0.01);
  summary.pctl_5 = stats::quantile_interpolated(hazards, 0.05);
  summary.pctl_90 = stats::quantile_interpolated(hazards, 0.90);
  summary.pctl_95 = stats::quantile_interpolated(hazards, 0.95);
  summary.pctl_99 = stats::quantile_interpolated(hazards, 0.99);
  return summary;
}

std::string format_risk_summary_table(const RiskSummary& summary) {
  const char* headers[] = {"Min",      "Max",      "Med",       "Mean",      "Std Dev",
                           "1st Pctl", "5th Pctl", "90th Pctl", "95th Pctl", "99th Pctl"};
  const double values[] = {summary.min,    summary.max,     summary.median,  summary.mean,
                           summary.std_dev, summary.pctl_1, summary.pctl_5,  summary.pctl_90,
                           summary.pctl_95, summary.pctl_99};
  std::ostringstream head, row;
  for (int i = 0; i < 10; ++i) {
    char cell[32];
    std::snprintf(cell, sizeof(cell), "%12s", headers[i]);
    head << cell;
    std::snprintf(cell, sizeof(cell), "%12.4g", values[i]);
    row << cell;
  }
  return head.str() + "\n" + row.str() + "\n";
}

std::vector<RiskLabel> classify_risk(const std::vector<RiskPrediction>& predictions,
                                     double eval_time, const RiskCutoff& cutoff) {
  if (predictions.empty()) throw std::invalid_argument("classify_risk: empty prediction list");
  const std::vector<double> hazards = hazards_at(predictions, eval_time);

  double threshold;
  if (cutoff.is_quantile) {
    if (!(cutoff.value > 0.0 && cutoff.value < 1.0))
      throw std::invalid_argument("classify_risk: quantile must lie in (0, 1)");
    std::vector<double> sorted = hazards;
    std::sort(sorted.begin(), sorted.end());
    threshold = stats::quantile_interpolated(sorted, cutoff.value);
  } else {
    if (!(cutoff.value >= 0.0)) throw std::invalid_argument("classify_risk: threshold must be >= 0");
    threshold = cutoff.value;
  }

  std::vector<RiskLabel> labels;
  labels.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    RiskLabel label;
    label.subject_id = predictions[i].subject_id;
    label.hazard = hazards[i];
    label.high = hazards[i] > threshold;
    labels.push_back(label);
  }
  return labels;
}

}  // namespace readmit::prediction
