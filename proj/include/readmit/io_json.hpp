#pragma once

#include <json.hpp>
#include <string>

#include "readmit/inference.hpp"
#include "readmit/prediction.hpp"
#include "readmit/simulate.hpp"

namespace readmit::io {

using json = nlohmann::json;

/// Model document: covariates[] (the schema), terms[], baseline{family},
/// frailty{distribution}. The only supported frailty distribution is normal.
struct ModelDocument {
  CovariateSchema schema;
  ModelSpec spec;
};

ModelDocument parse_model(const json& doc);
json model_to_json(const CovariateSchema& schema, const ModelSpec& spec);

/// Candidate document for stepwise selection: covariates[] plus candidates[].
struct CandidateDocument {
  CovariateSchema schema;
  std::vector<Term> candidates;
  BaselineFamily family = BaselineFamily::Weibull;
};

CandidateDocument parse_candidates(const json& doc);

simulate::SimScenario parse_scenario(const json& doc);
json scenario_to_json(const simulate::SimScenario& scenario);

json truth_to_json(const simulate::GroundTruth& truth);

json fit_to_json(const inference::FitResult& fit);
inference::FitResult parse_fit(const json& doc);

json report_to_json(const inference::CoefficientReport& report);
json selection_to_json(const inference::SelectionResult& selection);
json summary_to_json(const prediction::RiskSummary& summary);
json predictions_to_json(const std::vector<prediction::RiskPrediction>& predictions);

json load_json_file(const std::string& path);
void write_json_file(const json& doc, const std::string& path);
void write_text_file(const std::string& text, const std::string& path);

}  // namespace readmit::io
