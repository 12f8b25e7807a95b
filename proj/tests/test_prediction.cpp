#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "readmit/prediction.hpp"
#include "readmit/stats.hpp"
#include "testutil.hpp"

using namespace readmit;
using namespace readmit::prediction;

namespace {

// A FitResult stub good enough for the prediction layer: estimates plus an
// identity internal covariance.
inference::FitResult stub_fit(double omega, double sigma_u) {
  inference::FitResult fit;
  fit.layout.n_beta = 1;
  fit.layout.omega_free = true;
  fit.estimate.beta = Eigen::VectorXd::Ones(1);
  fit.estimate.omega = omega;
  fit.estimate.sigma_u = sigma_u;
  fit.covariance_internal = Eigen::MatrixXd::Identity(3, 3);
  fit.covariance_reporting = Eigen::MatrixXd::Identity(3, 3);
  fit.covariance_ok = true;
  fit.converged = true;
  return fit;
}

}  // namespace

TEST_CASE("exponential closed forms at t = 1") {
  // omega=0, eta+u=0: lambda = 1, S = exp(-1), f = lambda * S
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{1.0, 1, 0.0}});
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.0, 1e-6);  // frailty pinned near 0

  const RiskPrediction prediction = predict_subject(fit, data, 0, {1.0});
  CHECK(std::fabs(prediction.u_hat) < 1e-6);
  CHECK(prediction.hazard[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(prediction.survivor[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-5));
  CHECK(prediction.pdf[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-5));
}

TEST_CASE("survivor approaches 1 as t -> 0+") {
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{5.0, 1, -0.3}});
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.4, 0.8);
  const RiskPrediction prediction = predict_subject(fit, data, 0, {1e-9});
  CHECK(prediction.survivor[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("all-censored history pulls the frailty below the prior mean") {
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{31.0, 0, 0.0}});
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.0, 1.0);
  const RiskPrediction prediction = predict_subject(fit, data, 0, {30.0});
  CHECK(prediction.u_hat < 0.0);
  CHECK_FALSE(prediction.new_subject);
  // frailty prediction variance dominates the curvature inverse
  const likelihood::SubjectPosterior posterior =
      likelihood::eb_mode(data, 0, fit.estimate, fit.layout);
  CHECK(prediction.u_variance >= 1.0 / posterior.gamma_curv);
}

TEST_CASE("ignore-history mode pins the frailty at the prior mean and flags it") {
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{31.0, 0, 0.0}});
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.0, 1.0);
  PredictOptions options;
  options.ignore_history = true;
  const RiskPrediction prediction = predict_subject(fit, data, 0, {30.0}, options);
  CHECK(prediction.u_hat == 0.0);
  CHECK(prediction.new_subject);
}

TEST_CASE("hazard stays nonnegative and may exceed 1") {
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{0.5, 1, 2.0}});
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.5, 0.5);
  const RiskPrediction prediction = predict_subject(fit, data, 0, {1.0, 10.0, 30.0});
  for (double h : prediction.hazard) CHECK(h >= 0.0);
  CHECK(*std::max_element(prediction.hazard.begin(), prediction.hazard.end()) > 1.0);
}

TEST_CASE("pdf integrates to 1 and S = exp(-Lambda) on random parameters") {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double omega = -0.7 + 2.0 * u01(rng);
    const double lin = -3.0 + 4.0 * u01(rng);
    // T* with Lambda(T*) = 40 truncates the tail at exp(-40); substitute
    // t = u^m to tame the pdf's t^omega singularity when omega < 0
    const double t_star = std::exp((std::log(40.0) - lin) / (omega + 1.0));
    const int m = std::max(1, static_cast<int>(std::ceil(4.0 / (omega + 1.0))));
    const double mass = oracles::simpson(
        [&](double u) {
          if (u <= 0.0) return 0.0;
          const double t = std::pow(u, m);
          const double hazard = likelihood::hazard(t, omega, lin);
          const double survivor = std::exp(-likelihood::cum_hazard(t, omega, lin));
          return hazard * survivor * m * std::pow(u, m - 1);
        },
        0.0, std::pow(t_star, 1.0 / m), 400000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));

    const double t = 0.3 + 25.0 * u01(rng);
    const double survivor = std::exp(-likelihood::cum_hazard(t, omega, lin));
    // -d log S / dt equals the hazard
    const double h = 1e-6 * t;
    const double dlogS = (std::log(std::exp(-likelihood::cum_hazard(t + h, omega, lin))) -
                          std::log(std::exp(-likelihood::cum_hazard(t - h, omega, lin)))) /
                         (2.0 * h);
    CHECK(-dlogS == doctest::Approx(likelihood::hazard(t, omega, lin)).epsilon(1e-6));
    CHECK(survivor <= 1.0);
  }
}

TEST_CASE("prediction is invariant to the order of a subject's spells") {
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{2.0, 1, -0.5}, {3.0, 1, -0.5}, {31.0, 0, -0.5}});
  tiny.subjects.push_back({{31.0, 0, -0.5}, {3.0, 1, -0.5}, {2.0, 1, -0.5}});
  // same profile row (eta equal across spells), same multiset of spells
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.2, 1.0);
  const RiskPrediction a = predict_subject(fit, data, 0, {15.0});
  const RiskPrediction b = predict_subject(fit, data, 1, {15.0});
  CHECK(a.u_hat == doctest::Approx(b.u_hat).epsilon(1e-12));
  CHECK(a.hazard[0] == doctest::Approx(b.hazard[0]).epsilon(1e-12));
}

TEST_CASE("prediction variance blocks: decoupled case") {
  inference::FitResult fit = stub_fit(0.0, 1.0);
  likelihood::SubjectPosterior posterior;
  posterior.u_hat = 0.1;
  posterior.gamma_curv = 4.0;
  posterior.du_dtheta = Eigen::VectorXd::Zero(3);
  const PredictionVariance variance = prediction_variance(fit, posterior);
  CHECK(variance.matrix(3, 3) == doctest::Approx(0.25));
  for (int j = 0; j < 3; ++j) {
    CHECK(variance.matrix(j, 3) == 0.0);
    CHECK(variance.matrix(3, j) == 0.0);
  }
  CHECK(variance.matrix.topLeftCorner(3, 3) == fit.covariance_internal);
}

TEST_CASE("prediction variance blocks: worked case") {
  // H = I, Gamma = 4, du/dtheta = (1, 0, 0): bottom-right = 1/4 + 1 = 1.25
  inference::FitResult fit = stub_fit(0.0, 1.0);
  likelihood::SubjectPosterior posterior;
  posterior.gamma_curv = 4.0;
  posterior.du_dtheta = Eigen::VectorXd::Zero(3);
  posterior.du_dtheta(0) = 1.0;
  const PredictionVariance variance = prediction_variance(fit, posterior);
  CHECK(variance.frailty_variance() == doctest::Approx(1.25));
  CHECK(variance.matrix(0, 3) == doctest::Approx(1.0));
  const double asym = (variance.matrix - variance.matrix.transpose()).cwiseAbs().maxCoeff();
  CHECK(asym <= 1e-10);
  // bottom-right dominates Gamma^-1 (the added quadratic form is PSD)
  CHECK(variance.frailty_variance() >= 1.0 / posterior.gamma_curv);
}

TEST_CASE("prediction variance validates inputs") {
  inference::FitResult fit = stub_fit(0.0, 1.0);
  likelihood::SubjectPosterior posterior;
  posterior.gamma_curv = -1.0;
  posterior.du_dtheta = Eigen::VectorXd::Zero(3);
  CHECK_THROWS(prediction_variance(fit, posterior));
  posterior.gamma_curv = 1.0;
  posterior.du_dtheta = Eigen::VectorXd::Zero(2);  // dimension mismatch
  CHECK_THROWS(prediction_variance(fit, posterior));
}

TEST_CASE("risk summary statistics") {
  std::vector<RiskPrediction> predictions;
  for (double h : {1.0, 2.0, 3.0, 4.0, 5.0}) {
    RiskPrediction p;
    p.subject_id = "S" + std::to_string(static_cast<int>(h));
    p.times = {30.0};
    p.hazard = {h};
    p.pdf = {0.0};
    p.survivor = {1.0};
    predictions.push_back(p);
  }
  const RiskSummary summary = cohort_risk_summary(predictions, 30.0);
  CHECK(summary.min == 1.0);
  CHECK(summary.max == 5.0);
  CHECK(summary.median == doctest::Approx(3.0));
  CHECK(summary.mean == doctest::Approx(3.0));
  CHECK(summary.std_dev == doctest::Approx(std::sqrt(2.5)));

  // all equal: every statistic collapses, std dev 0
  for (auto& p : predictions) p.hazard = {2.5};
  const RiskSummary flat = cohort_risk_summary(predictions, 30.0);
  CHECK(flat.min == 2.5);
  CHECK(flat.max == 2.5);
  CHECK(flat.median == 2.5);
  CHECK(flat.mean == doctest::Approx(2.5));
  CHECK(flat.std_dev == 0.0);
  CHECK(flat.pctl_99 == 2.5);

  const std::string table = format_risk_summary_table(flat);
  CHECK(table.find("Std Dev") != std::string::npos);
  CHECK(table.find("99th Pctl") != std::string::npos);

  CHECK_THROWS(cohort_risk_summary({}, 30.0));
}

TEST_CASE("skewed cohort: mean exceeds median") {
  std::mt19937_64 rng(321);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<RiskPrediction> predictions;
  for (int i = 0; i < 500; ++i) {
    RiskPrediction p;
    p.subject_id = "S" + std::to_string(i);
    p.times = {30.0};
    // lognormal-style right skew
    p.hazard = {std::exp(-2.0 + 1.5 * stats::norm_quantile(u01(rng)))};
    p.pdf = {0.0};
    p.survivor = {1.0};
    predictions.push_back(p);
  }
  const RiskSummary summary = cohort_risk_summary(predictions, 30.0);
  CHECK(summary.mean > summary.median);
}

TEST_CASE("classification by quantile and absolute threshold") {
  std::vector<RiskPrediction> predictions;
  for (double h : {1.0, 2.0, 3.0, 4.0}) {
    RiskPrediction p;
    p.subject_id = "S" + std::to_string(static_cast<int>(h));
    p.times = {30.0};
    p.hazard = {h};
    p.pdf = {0.0};
    p.survivor = {1.0};
    predictions.push_back(p);
  }
  RiskCutoff median_cut;
  median_cut.is_quantile = true;
  median_cut.value = 0.5;
  const auto labels = classify_risk(predictions, 30.0, median_cut);
  REQUIRE(labels.size() == 4);
  CHECK_FALSE(labels[0].high);
  CHECK_FALSE(labels[1].high);
  CHECK(labels[2].high);
  CHECK(labels[3].high);

  RiskCutoff zero;
  zero.value = 0.0;
  for (const auto& label : classify_risk(predictions, 30.0, zero)) CHECK(label.high);

  RiskCutoff bad;
  bad.is_quantile = true;
  bad.value = 1.5;
  CHECK_THROWS(classify_risk(predictions, 30.0, bad));
}

TEST_CASE("quantile 0.95 on 1000 subjects labels 50 high (within 1)") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<RiskPrediction> predictions;
  for (int i = 0; i < 1000; ++i) {
    RiskPrediction p;
    p.subject_id = "S" + std::to_string(i);
    p.times = {30.0};
    p.hazard = {0.01 + u01(rng)};
    p.pdf = {0.0};
    p.survivor = {1.0};
    predictions.push_back(p);
  }
  RiskCutoff cutoff;
  cutoff.is_quantile = true;
  cutoff.value = 0.95;
  int high = 0;
  for (const auto& label : classify_risk(predictions, 30.0, cutoff)) high += label.high;
  CHECK(std::abs(high - 50) <= 1);
}

TEST_CASE("evaluation times must lie in (0, 31]") {
  oracles::TinyCohort tiny;
  tiny.subjects.push_back({{1.0, 1, 0.0}});
  likelihood::ModelData data = testutil::from_oracle(tiny);
  inference::FitResult fit = stub_fit(0.0, 1.0);
  CHECK_THROWS(predict_subject(fit, data, 0, {0.0}));
  CHECK_THROWS(predict_subject(fit, data, 0, {32.0}));
  CHECK_THROWS(predict_subject(fit, data, 5, {30.0}));
}
