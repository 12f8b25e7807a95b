#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "readmit/cohort.hpp"
#include "readmit/inference.hpp"
#include "readmit/io_json.hpp"
#include "readmit/prediction.hpp"
#include "readmit/simulate.hpp"
#include "readmit/stats.hpp"
#include "readmit/version.hpp"

namespace {

namespace fs = std::filesystem;
using readmit::io::json;

class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) : command_(std::move(command)) {
    for (int i = 0; i < argc; ++i) arguments_.push_back(argv[i]);
    start_ = std::chrono::steady_clock::now();
  }

  void input(const std::string& role, const std::string& path) { inputs_[role] = path; }
  void output(const std::string& path) { outputs_.push_back(path); }
  void config_digest(const std::string& digest) { digest_ = digest; }
  void seed(std::uint64_t value) { seed_ = value; has_seed_ = true; }

  void write(const std::string& path) {
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
    json doc;
    doc["command"] = command_;
    doc["arguments"] = arguments_;
    doc["inputs"] = inputs_;
    outputs_.push_back(path);
    doc["outputs"] = outputs_;
    doc["config_digest"] = digest_;
    if (has_seed_) doc["seed"] = seed_;
    doc["version"] = readmit::kVersion;
    doc["threads"] = readmit::stats::env_thread_count();
    doc["elapsed_seconds"] = elapsed.count();
    readmit::io::write_json_file(doc, path);
  }

 private:
  std::string command_;
  std::vector<std::string> arguments_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
  std::string digest_;
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::chrono::steady_clock::time_point start_;
};

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

int parse_quadrature(const std::string& value) {
  if (value == "auto") return 0;
  const int q = std::stoi(value);
  if (q < 1 || q % 2 == 0)
    throw CLI::ValidationError("--quadrature", "order must be odd (or 'auto')");
  return q;
}

std::vector<double> parse_times(const std::string& value) {
  std::vector<double> times;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    times.push_back(std::stod(item));
  }
  if (times.empty()) throw CLI::ValidationError("--times", "no evaluation times given");
  return times;
}

std::string format_csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_fit_outputs(const readmit::inference::FitResult& fit, const std::string& dir,
                       bool with_trace, Manifest& manifest, bool r2_subjects = false) {
  json fit_doc = readmit::io::fit_to_json(fit);
  if (fit.converged && fit.covariance_ok) {
    const auto report = readmit::inference::coefficient_report(fit);
    fit_doc["report"] = readmit::io::report_to_json(report);
    fit_doc["bic"] = readmit::inference::bic(fit);
    if (fit.has_null())
      fit_doc["generalized_r2"] = readmit::inference::generalized_r2(fit, r2_subjects);
    const std::string table = readmit::inference::format_coefficient_table(report);
    const std::string report_path = out_path(dir, "report.txt");
    readmit::io::write_text_file(table, report_path);
    manifest.output(report_path);
  }
  const std::string fit_path = out_path(dir, "fit.json");
  readmit::io::write_json_file(fit_doc, fit_path);
  manifest.output(fit_path);

  if (with_trace || !fit.converged) {
    json trace = json::array();
    for (const auto& it : fit.trace.iterations) {
      json theta = json::array();
      for (Eigen::Index j = 0; j < it.theta.size(); ++j) theta.push_back(it.theta(j));
      trace.push_back({{"iteration", it.iteration},
                       {"theta", std::move(theta)},
                       {"f", it.f},
                       {"max_abs_gradient", it.max_abs_gradient},
                       {"step_length", it.step_length},
                       {"direction_norm", it.direction_norm}});
    }
    json doc;
    doc["termination"] = fit.trace.termination;
    doc["iterations"] = std::move(trace);
    const std::string trace_path = out_path(dir, "trace.json");
    readmit::io::write_json_file(doc, trace_path);
    manifest.output(trace_path);
  }
}

int cmd_fit(const std::string& data_path, const std::string& spec_path, const std::string& out_dir,
            const std::string& quadrature, bool trace, bool censor_at_30, const std::string& r2_n,
            int argc, char** argv) {
  Manifest manifest("fit", argc, argv);
  manifest.input("data", data_path);
  manifest.input("spec", spec_path);

  const json spec_doc = readmit::io::load_json_file(spec_path);
  manifest.config_digest(readmit::stats::fnv1a_hex(spec_doc.dump()));
  const auto model = readmit::io::parse_model(spec_doc);

  readmit::cohort::IngestOptions ingest;
  ingest.censor_at_30 = censor_at_30;
  const readmit::Cohort cohort = readmit::cohort::ingest_csv(data_path, model.schema, ingest);

  readmit::inference::FitOptions options;
  options.quadrature_order = parse_quadrature(quadrature);
  auto fit = readmit::inference::fit_model(cohort, model.spec, options);

  write_fit_outputs(fit, out_dir, trace, manifest, r2_n == "subjects");
  manifest.write(out_path(out_dir, "manifest.json"));

  if (!fit.converged) {
    std::cerr << "fit did not converge (max |g| = " << fit.max_abs_gradient
              << "); trace retained in " << out_dir << "\n";
    return 2;
  }
  std::cout << "loglik " << fit.loglik << ", quadrature order " << fit.quadrature_order << ", "
            << fit.iterations << " iterations\n";
  return 0;
}

int cmd_simulate(const std::string& scenario_path, std::int64_t seed_override,
                 const std::string& out_dir, int argc, char** argv) {
  Manifest manifest("simulate", argc, argv);
  manifest.input("scenario", scenario_path);

  const json scenario_doc = readmit::io::load_json_file(scenario_path);
  auto scenario = readmit::io::parse_scenario(scenario_doc);
  if (seed_override >= 0) scenario.seed = static_cast<std::uint64_t>(seed_override);
  manifest.config_digest(readmit::stats::fnv1a_hex(readmit::io::scenario_to_json(scenario).dump()));
  manifest.seed(scenario.seed);

  const auto [cohort, truth] = readmit::simulate::generate_cohort(scenario);

  const std::string cohort_path = out_path(out_dir, "cohort.csv");
  readmit::cohort::write_csv_file(cohort, cohort_path);
  manifest.output(cohort_path);

  json truth_doc = readmit::io::truth_to_json(truth);
  truth_doc["scenario"] = readmit::io::scenario_to_json(scenario);
  const std::string truth_path = out_path(out_dir, "truth.json");
  readmit::io::write_json_file(truth_doc, truth_path);
  manifest.output(truth_path);

  manifest.write(out_path(out_dir, "manifest.json"));
  std::cout << cohort.subjects.size() << " subjects, " << cohort.n_spells() << " spells\n";
  return 0;
}

int cmd_select(const std::string& data_path, const std::string& candidates_path,
               const std::string& out_dir, double enter, double remove,
               const std::string& quadrature, bool censor_at_30, bool likelihood_ratio,
               int argc, char** argv) {
  if (!(enter < remove))
    throw CLI::ValidationError("--enter/--remove", "enter threshold must be below remove threshold");

  Manifest manifest("select", argc, argv);
  manifest.input("data", data_path);
  manifest.input("candidates", candidates_path);

  const json candidates_doc = readmit::io::load_json_file(candidates_path);
  manifest.config_digest(readmit::stats::fnv1a_hex(candidates_doc.dump()));
  const auto candidates = readmit::io::parse_candidates(candidates_doc);

  readmit::cohort::IngestOptions ingest;
  ingest.censor_at_30 = censor_at_30;
  const readmit::Cohort cohort = readmit::cohort::ingest_csv(data_path, candidates.schema, ingest);

  readmit::inference::StepwiseOptions options;
  options.enter = enter;
  options.remove = remove;
  options.use_likelihood_ratio = likelihood_ratio;
  options.fit.quadrature_order = parse_quadrature(quadrature);
  const auto selection =
      readmit::inference::stepwise_select(cohort, candidates.candidates, candidates.family, options);

  const std::string selection_path = out_path(out_dir, "selection.json");
  readmit::io::write_json_file(readmit::io::selection_to_json(selection), selection_path);
  manifest.output(selection_path);
  write_fit_outputs(selection.final_fit, out_dir, false, manifest);
  manifest.write(out_path(out_dir, "manifest.json"));

  std::cout << "selected " << selection.final_model.terms.size() << " terms\n";
  return selection.final_fit.converged ? 0 : 2;
}

int cmd_predict(const std::string& data_path, const std::string& fit_path,
                const std::string& times_arg, const std::string& out_dir, double eval_time,
                const std::string& classify, bool no_history, int argc, char** argv) {
  Manifest manifest("predict", argc, argv);
  manifest.input("data", data_path);
  manifest.input("fit", fit_path);

  const json fit_doc = readmit::io::load_json_file(fit_path);
  manifest.config_digest(readmit::stats::fnv1a_hex(fit_doc.dump()));
  const auto fit = readmit::io::parse_fit(fit_doc);
  if (!fit.converged) throw std::runtime_error("predict: the supplied fit did not converge");

  readmit::cohort::IngestOptions ingest;
  ingest.censor_at_30 = fit.censor_at_30;
  const readmit::Cohort cohort = readmit::cohort::ingest_csv(data_path, fit.schema, ingest);

  std::vector<double> times = parse_times(times_arg);
  if (std::find(times.begin(), times.end(), eval_time) == times.end()) times.push_back(eval_time);

  readmit::prediction::PredictOptions predict_options;
  predict_options.ignore_history = no_history;
  const auto predictions =
      readmit::prediction::predict_cohort(fit, cohort, times, predict_options);
  const auto summary = readmit::prediction::cohort_risk_summary(predictions, eval_time);

  std::vector<readmit::prediction::RiskLabel> labels;
  if (!classify.empty()) {
    readmit::prediction::RiskCutoff cutoff;
    if (classify.front() == 'q') {
      cutoff.is_quantile = true;
      cutoff.value = std::stod(classify.substr(1));
    } else {
      cutoff.value = std::stod(classify);
    }
    labels = readmit::prediction::classify_risk(predictions, eval_time, cutoff);
  }

  // One CSV row per subject x time.
  std::ostringstream csv;
  csv << "subject_id,time,u_hat,u_variance,eta,relative_risk,hazard,pdf,survivor,new_subject";
  if (!labels.empty()) csv << ",risk_group";
  csv << '\n';
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      csv << p.subject_id << ',' << format_csv_double(p.times[k]) << ','
          << format_csv_double(p.u_hat) << ',' << format_csv_double(p.u_variance) << ','
          << format_csv_double(p.eta) << ',' << format_csv_double(p.relative_risk) << ','
          << format_csv_double(p.hazard[k]) << ',' << format_csv_double(p.pdf[k]) << ','
          << format_csv_double(p.survivor[k]) << ',' << p.new_subject;
      if (!labels.empty()) csv << ',' << (labels[i].high ? "high" : "low");
      csv << '\n';
    }
  }
  const std::string csv_path = out_path(out_dir, "predictions.csv");
  readmit::io::write_text_file(csv.str(), csv_path);
  manifest.output(csv_path);

  json predictions_doc;
  predictions_doc["predictions"] = readmit::io::predictions_to_json(predictions);
  predictions_doc["summary"] = readmit::io::summary_to_json(summary);
  if (!labels.empty()) {
    json label_doc = json::array();
    for (const auto& label : labels)
      label_doc.push_back({{"subject_id", label.subject_id},
                           {"hazard", label.hazard},
                           {"risk_group", label.high ? "high" : "low"}});
    predictions_doc["labels"] = std::move(label_doc);
  }
  const std::string json_path = out_path(out_dir, "predictions.json");
  readmit::io::write_json_file(predictions_doc, json_path);
  manifest.output(json_path);

  const std::string summary_path = out_path(out_dir, "summary.txt");
  readmit::io::write_text_file(readmit::prediction::format_risk_summary_table(summary),
                               summary_path);
  manifest.output(summary_path);
  const std::string summary_json_path = out_path(out_dir, "summary.json");
  readmit::io::write_json_file(readmit::io::summary_to_json(summary), summary_json_path);
  manifest.output(summary_json_path);

  manifest.write(out_path(out_dir, "manifest.json"));
  std::cout << predictions.size() << " subjects predicted at " << times.size() << " times\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent-event readmission risk modeling (Weibull hazard, Gaussian frailty)"};
  app.set_version_flag("--version", readmit::kVersion);
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the frailty model by marginal maximum likelihood");
  std::string fit_data, fit_spec, fit_out, fit_quadrature = "auto", fit_r2n = "spells";
  bool fit_trace = false, fit_censor30 = false;
  fit->add_option("--data", fit_data, "Cohort CSV")->required();
  fit->add_option("--spec", fit_spec, "Model JSON (covariates, terms, baseline, frailty)")->required();
  fit->add_option("--out", fit_out, "Output directory")->required();
  fit->add_option("--quadrature", fit_quadrature, "Odd quadrature order, or 'auto'");
  fit->add_flag("--trace", fit_trace, "Write the optimizer trace");
  fit->add_flag("--censor-at-30", fit_censor30, "Rewrite censored times from 31 to 30 at ingestion");
  fit->add_option("--r2-n", fit_r2n, "Sample size used by the generalized R^2: spells|subjects")
      ->check(CLI::IsMember({"spells", "subjects"}));

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort from known parameters");
  std::string sim_scenario, sim_out;
  std::int64_t sim_seed = -1;
  simulate->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
  simulate->add_option("--seed", sim_seed, "Override the scenario seed");
  simulate->add_option("--out", sim_out, "Output directory")->required();

  // select
  auto* select = app.add_subcommand("select", "Stepwise term selection");
  std::string sel_data, sel_candidates, sel_out, sel_quadrature = "auto";
  double sel_enter = 0.10, sel_remove = 0.15;
  bool sel_censor30 = false, sel_lr = false;
  select->add_option("--data", sel_data, "Cohort CSV")->required();
  select->add_option("--candidates", sel_candidates, "Candidate terms JSON")->required();
  select->add_option("--out", sel_out, "Output directory")->required();
  select->add_option("--enter", sel_enter, "P-value to enter (default 0.10)");
  select->add_option("--remove", sel_remove, "P-value to remove (default 0.15)");
  select->add_option("--quadrature", sel_quadrature, "Odd quadrature order, or 'auto'");
  select->add_flag("--censor-at-30", sel_censor30, "Rewrite censored times from 31 to 30 at ingestion");
  select->add_flag("--lr", sel_lr, "Use likelihood-ratio tests for entry/removal instead of Wald");

  // predict
  auto* predict = app.add_subcommand("predict", "Empirical-Bayes risk prediction");
  std::string pred_data, pred_fit, pred_times = "30", pred_out, pred_classify;
  double pred_eval_time = 30.0;
  bool pred_no_history = false;
  predict->add_option("--data", pred_data, "Cohort CSV")->required();
  predict->add_option("--fit", pred_fit, "fit.json from a previous fit")->required();
  predict->add_option("--times", pred_times, "Comma-separated evaluation times (days)");
  predict->add_option("--out", pred_out, "Output directory")->required();
  predict->add_option("--eval-time", pred_eval_time, "Time the summary/classification uses (default 30)");
  predict->add_option("--classify", pred_classify, "Risk cutoff: qX for a quantile, or an absolute hazard");
  predict->add_flag("--no-history", pred_no_history, "Ignore admission history (frailty at prior mean)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed())
      return cmd_fit(fit_data, fit_spec, fit_out, fit_quadrature, fit_trace, fit_censor30,
                     fit_r2n, argc, argv);
    if (simulate->parsed()) return cmd_simulate(sim_scenario, sim_seed, sim_out, argc, argv);
    if (select->parsed())
      return cmd_select(sel_data, sel_candidates, sel_out, sel_enter, sel_remove, sel_quadrature,
                        sel_censor30, sel_lr, argc, argv);
    if (predict->parsed())
      return cmd_predict(pred_data, pred_fit, pred_times, pred_out, pred_eval_time, pred_classify,
                         pred_no_history, argc, argv);
  } catch (const CLI::ValidationError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 1;
}
