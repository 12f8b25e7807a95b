#include "readmit/io_json.hpp"

#include <cmath>
#include <fstream>

namespace readmit::io {

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& doc) {
  const auto rows = static_cast<Eigen::Index>(doc.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(doc.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = doc.at(i).at(j).get<double>();
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& doc) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(doc.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = doc.at(i).get<double>();
  return v;
}

Covariate covariate_from_json(const json& doc) {
  Covariate cov;
  cov.name = doc.at("name").get<std::string>();
  const std::string kind = doc.value("kind", "numeric");
  if (kind == "numeric") {
    cov.kind = CovariateKind::Numeric;
  } else if (kind == "categorical") {
    cov.kind = CovariateKind::Categorical;
    cov.levels = doc.at("levels").get<std::vector<std::string>>();
    cov.reference = doc.at("reference").get<std::string>();
  } else {
    throw std::invalid_argument("covariate '" + cov.name + "': unknown kind '" + kind + "'");
  }
  return cov;
}

json covariate_to_json(const Covariate& cov) {
  json doc;
  doc["name"] = cov.name;
  doc["kind"] = cov.kind == CovariateKind::Numeric ? "numeric" : "categorical";
  if (cov.kind == CovariateKind::Categorical) {
    doc["levels"] = cov.levels;
    doc["reference"] = cov.reference;
  }
  return doc;
}

Transform transform_from_string(const std::string& s) {
  if (s == "identity") return Transform::Identity;
  if (s == "log") return Transform::Log;
  throw std::invalid_argument("unknown transform '" + s + "'");
}

TermFactor factor_from_json(const json& doc) {
  TermFactor f;
  f.covariate = doc.at("covariate").get<std::string>();
  f.transform = transform_from_string(doc.value("transform", "identity"));
  return f;
}

// Accepted term forms: {name, covariate, transform?}, {name, interaction: [f, f]},
// and the canonical {name, factors: [...]}.
Term term_from_json(const json& doc) {
  Term term;
  term.name = doc.at("name").get<std::string>();
  if (doc.contains("factors")) {
    for (const auto& f : doc.at("factors")) term.factors.push_back(factor_from_json(f));
  } else if (doc.contains("interaction")) {
    for (const auto& f : doc.at("interaction")) term.factors.push_back(factor_from_json(f));
  } else if (doc.contains("covariate")) {
    term.factors.push_back(factor_from_json(doc));
  } else {
    throw std::invalid_argument("term '" + term.name + "': no covariate/interaction/factors");
  }
  return term;
}

json term_to_json(const Term& term) {
  json doc;
  doc["name"] = term.name;
  json factors = json::array();
  for (const auto& f : term.factors) {
    json fd;
    fd["covariate"] = f.covariate;
    if (f.transform == Transform::Log) fd["transform"] = "log";
    factors.push_back(std::move(fd));
  }
  doc["factors"] = std::move(factors);
  return doc;
}

BaselineFamily family_from_json(const json& doc) {
  const std::string family = doc.value("baseline", json::object()).value("family", "weibull");
  if (family == "weibull") return BaselineFamily::Weibull;
  if (family == "exponential") return BaselineFamily::Exponential;
  throw std::invalid_argument("unknown baseline family '" + family + "'");
}

void check_frailty(const json& doc) {
  const std::string dist = doc.value("frailty", json::object()).value("distribution", "normal");
  if (dist != "normal")
    throw std::invalid_argument("unsupported frailty distribution '" + dist + "'");
}

CovariateSchema schema_from_json(const json& doc) {
  CovariateSchema schema;
  for (const auto& c : doc.value("covariates", json::array()))
    schema.covariates.push_back(covariate_from_json(c));
  schema.validate();
  return schema;
}

}  // namespace

ModelDocument parse_model(const json& doc) {
  ModelDocument model;
  model.schema = schema_from_json(doc);
  for (const auto& t : doc.value("terms", json::array()))
    model.spec.terms.push_back(term_from_json(t));
  model.spec.family = family_from_json(doc);
  check_frailty(doc);
  model.spec.validate(model.schema);
  return model;
}

json model_to_json(const CovariateSchema& schema, const ModelSpec& spec) {
  json doc;
  json covs = json::array();
  for (const auto& c : schema.covariates) covs.push_back(covariate_to_json(c));
  doc["covariates"] = std::move(covs);
  json terms = json::array();
  for (const auto& t : spec.terms) terms.push_back(term_to_json(t));
  doc["terms"] = std::move(terms);
  doc["baseline"] = {{"family", spec.family == BaselineFamily::Weibull ? "weibull" : "exponential"}};
  doc["frailty"] = {{"distribution", "normal"}};
  return doc;
}

CandidateDocument parse_candidates(const json& doc) {
  CandidateDocument out;
  out.schema = schema_from_json(doc);
  for (const auto& t : doc.value("candidates", json::array()))
    out.candidates.push_back(term_from_json(t));
  out.family = family_from_json(doc);
  check_frailty(doc);
  return out;
}

simulate::SimScenario parse_scenario(const json& doc) {
  simulate::SimScenario scenario;
  scenario.n_subjects = doc.at("subjects").get<int>();
  scenario.max_spells = doc.value("max_spells", 1);
  scenario.window = doc.value("window", 30.0);
  scenario.seed = doc.value("seed", 0ULL);
  for (const auto& c : doc.value("covariates", json::array())) {
    simulate::CovariateGenerator gen;
    gen.covariate = covariate_from_json(c);
    gen.per_subject = c.value("per_subject", false);
    if (gen.covariate.kind == CovariateKind::Numeric) {
      const std::string dist = c.value("dist", "uniform");
      if (dist == "uniform") {
        gen.dist = simulate::CovariateGenerator::Dist::Uniform;
        gen.uniform_min = c.value("min", 0.0);
        gen.uniform_max = c.value("max", 1.0);
      } else if (dist == "normal") {
        gen.dist = simulate::CovariateGenerator::Dist::Normal;
        gen.normal_mean = c.value("mean", 0.0);
        gen.normal_sd = c.value("sd", 1.0);
      } else {
        throw std::invalid_argument("scenario: unknown numeric dist '" + dist + "'");
      }
    } else {
      gen.level_probs = c.at("probs").get<std::vector<double>>();
    }
    scenario.covariates.push_back(std::move(gen));
  }
  for (const auto& t : doc.value("terms", json::array()))
    scenario.terms.push_back(term_from_json(t));
  for (const auto& [name, value] : doc.at("beta").items())
    scenario.beta[name] = value.get<double>();
  scenario.omega = doc.value("omega", 0.0);
  scenario.sigma_u = doc.value("sigma_u", 1.0);
  scenario.validate();
  return scenario;
}

json scenario_to_json(const simulate::SimScenario& scenario) {
  json doc;
  doc["subjects"] = scenario.n_subjects;
  doc["max_spells"] = scenario.max_spells;
  doc["window"] = scenario.window;
  doc["seed"] = scenario.seed;
  json covs = json::array();
  for (const auto& gen : scenario.covariates) {
    json c = covariate_to_json(gen.covariate);
    c["per_subject"] = gen.per_subject;
    if (gen.covariate.kind == CovariateKind::Numeric) {
      if (gen.dist == simulate::CovariateGenerator::Dist::Uniform) {
        c["dist"] = "uniform";
        c["min"] = gen.uniform_min;
        c["max"] = gen.uniform_max;
      } else {
        c["dist"] = "normal";
        c["mean"] = gen.normal_mean;
        c["sd"] = gen.normal_sd;
      }
    } else {
      c["probs"] = gen.level_probs;
    }
    covs.push_back(std::move(c));
  }
  doc["covariates"] = std::move(covs);
  json terms = json::array();
  for (const auto& t : scenario.terms) terms.push_back(term_to_json(t));
  doc["terms"] = std::move(terms);
  doc["beta"] = scenario.beta;
  doc["omega"] = scenario.omega;
  doc["sigma_u"] = scenario.sigma_u;
  return doc;
}

json truth_to_json(const simulate::GroundTruth& truth) {
  json doc;
  doc["columns"] = truth.columns;
  doc["beta"] = vector_to_json(truth.beta);
  doc["omega"] = truth.omega;
  doc["sigma_u"] = truth.sigma_u;
  doc["seed"] = truth.seed;
  doc["rng"] = "mt19937_64 per subject, seed splitmix64(splitmix64(seed) + index); "
               "uniform = (bits >> 11 + 0.5) * 2^-53; normal by AS 241 inverse CDF";
  json gamma = json::object();
  for (const auto& [id, value] : truth.gamma) gamma[id] = value;
  doc["gamma"] = std::move(gamma);
  return doc;
}

json fit_to_json(const inference::FitResult& fit) {
  json doc;
  doc["model"] = model_to_json(fit.schema, fit.model);
  doc["censor_at_30"] = fit.censor_at_30;
  doc["columns"] = fit.columns;
  doc["internal_names"] = fit.internal_names;
  doc["estimate"] = {{"beta", vector_to_json(fit.estimate.beta)},
                     {"omega", fit.estimate.omega},
                     {"sigma_u", fit.estimate.sigma_u}};
  doc["theta_internal"] = vector_to_json(fit.theta_internal);
  doc["loglik"] = fit.loglik;
  if (fit.has_null()) doc["null_loglik"] = fit.null_loglik;
  doc["n_spells"] = fit.n_spells;
  doc["n_subjects"] = fit.n_subjects;
  doc["quadrature_order"] = fit.quadrature_order;
  doc["converged"] = fit.converged;
  doc["iterations"] = fit.iterations;
  doc["max_abs_gradient"] = fit.max_abs_gradient;
  doc["covariance_ok"] = fit.covariance_ok;
  if (fit.covariance_ok) {
    doc["hessian_internal"] = matrix_to_json(fit.hessian_internal);
    doc["covariance_internal"] = matrix_to_json(fit.covariance_internal);
    doc["covariance_reporting"] = matrix_to_json(fit.covariance_reporting);
  } else {
    doc["covariance_message"] = fit.covariance_message;
  }
  return doc;
}

inference::FitResult parse_fit(const json& doc) {
  inference::FitResult fit;
  const ModelDocument model = parse_model(doc.at("model"));
  fit.model = model.spec;
  fit.schema = model.schema;
  fit.censor_at_30 = doc.value("censor_at_30", false);
  fit.columns = doc.at("columns").get<std::vector<std::string>>();
  fit.internal_names = doc.at("internal_names").get<std::vector<std::string>>();
  fit.layout.n_beta = static_cast<int>(fit.columns.size());
  fit.layout.omega_free = fit.model.family == BaselineFamily::Weibull;
  fit.estimate.beta = vector_from_json(doc.at("estimate").at("beta"));
  fit.estimate.omega = doc.at("estimate").at("omega").get<double>();
  fit.estimate.sigma_u = doc.at("estimate").at("sigma_u").get<double>();
  fit.theta_internal = vector_from_json(doc.at("theta_internal"));
  fit.loglik = doc.at("loglik").get<double>();
  if (doc.contains("null_loglik")) fit.null_loglik = doc.at("null_loglik").get<double>();
  fit.n_spells = doc.at("n_spells").get<int>();
  fit.n_subjects = doc.at("n_subjects").get<int>();
  fit.quadrature_order = doc.at("quadrature_order").get<int>();
  fit.converged = doc.at("converged").get<bool>();
  fit.iterations = doc.at("iterations").get<int>();
  fit.max_abs_gradient = doc.at("max_abs_gradient").get<double>();
  fit.covariance_ok = doc.value("covariance_ok", false);
  if (fit.covariance_ok) {
    fit.hessian_internal = matrix_from_json(doc.at("hessian_internal"));
    fit.covariance_internal = matrix_from_json(doc.at("covariance_internal"));
    fit.covariance_reporting = matrix_from_json(doc.at("covariance_reporting"));
  }
  return fit;
}

json report_to_json(const inference::CoefficientReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"parameter", row.parameter},
                    {"estimate", row.estimate},
                    {"std_error", row.std_error},
                    {"p_value", row.p_value},
                    {"ci_lower", row.ci_lower},
                    {"ci_upper", row.ci_upper}});
  }
  return rows;
}

json selection_to_json(const inference::SelectionResult& selection) {
  json steps = json::array();
  for (const auto& step : selection.steps) {
    json evaluated = json::array();
    for (const auto& candidate : step.evaluated) {
      evaluated.push_back({{"term", candidate.term},
                           {"p_value", candidate.p_value},
                           {"converged", candidate.converged}});
    }
    steps.push_back({{"step", step.step},
                     {"phase", step.phase},
                     {"evaluated", std::move(evaluated)},
                     {"action", step.action},
                     {"term", step.term}});
  }
  json doc;
  doc["steps"] = std::move(steps);
  json terms = json::array();
  for (const auto& t : selection.final_model.terms) terms.push_back(term_to_json(t));
  doc["final_terms"] = std::move(terms);
  return doc;
}

json summary_to_json(const prediction::RiskSummary& summary) {
  return json{{"eval_time", summary.eval_time},
              {"n", summary.n},
              {"min", summary.min},
              {"max", summary.max},
              {"median", summary.median},
              {"mean", summary.mean},
              {"std_dev", summary.std_dev},
              {"pctl_1", summary.pctl_1},
              {"pctl_5", summary.pctl_5},
              {"pctl_90", summary.pctl_90},
              {"pctl_95", summary.pctl_95},
              {"pctl_99", summary.pctl_99}};
}

json predictions_to_json(const std::vector<prediction::RiskPrediction>& predictions) {
  json out = json::array();
  for (const auto& p : predictions) {
    json times = json::array();
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      times.push_back({{"time", p.times[k]},
                       {"hazard", p.hazard[k]},
                       {"pdf", p.pdf[k]},
                       {"survivor", p.survivor[k]}});
    }
    json row = {{"subject_id", p.subject_id},
                {"u_hat", p.u_hat},
                {"eta", p.eta},
                {"relative_risk", p.relative_risk},
                {"new_subject", p.new_subject},
                {"curves", std::move(times)}};
    if (!std::isnan(p.u_variance)) row["u_variance"] = p.u_variance;
    out.push_back(std::move(row));
  }
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  json doc;
  in >> doc;
  return doc;
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
}

void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace readmit::io
