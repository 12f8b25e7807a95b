#include "readmit/simulate.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "readmit/stats.hpp"

namespace readmit::simulate {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// One deterministic stream per subject.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() {  // strictly inside (0, 1)
    const std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double normal(double mean, double sd) { return mean + sd * stats::norm_quantile(uniform()); }

 private:
  std::mt19937_64 engine_;
};

std::string subject_label(int index, int total) {
  int width = 1;
  for (int v = total; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(index + 1);
  return "S" + std::string(static_cast<std::size_t>(width) - std::min(digits.size(), static_cast<std::size_t>(width)), '0') + digits;
}

}  // namespace

CovariateSchema SimScenario::schema() const {
  CovariateSchema s;
  for (const auto& gen : covariates) s.covariates.push_back(gen.covariate);
  return s;
}

ModelSpec SimScenario::model_spec() const {
  ModelSpec spec;
  spec.terms = terms;
  spec.family = BaselineFamily::Weibull;
  return spec;
}

std::pair<std::vector<std::string>, Eigen::VectorXd> SimScenario::true_beta() const {
  const CovariateSchema s = schema();
  std::vector<std::string> columns{"(intercept)"};
  for (const auto& term : terms)
    for (const auto& name : term_column_names(term, s)) columns.push_back(name);

  Eigen::VectorXd values(static_cast<Eigen::Index>(columns.size()));
  std::set<std::string> used;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto it = beta.find(columns[i]);
    if (it == beta.end())
      throw std::invalid_argument("scenario: no true coefficient for design column '" +
                                  columns[i] + "'");
    values(static_cast<Eigen::Index>(i)) = it->second;
    used.insert(columns[i]);
  }
  for (const auto& [name, _] : beta) {
    if (used.find(name) == used.end())
      throw std::invalid_argument("scenario: coefficient '" + name +
                                  "' does not match any design column");
  }
  return {columns, values};
}

void SimScenario::validate() const {
  if (n_subjects < 1) throw std::invalid_argument("scenario: subjects must be >= 1");
  if (max_spells < 1) throw std::invalid_argument("scenario: max_spells must be >= 1");
  if (!(window > 0.0)) throw std::invalid_argument("scenario: window must be positive");
  if (!(omega > -1.0)) throw std::invalid_argument("scenario: omega must be > -1");
  if (!(sigma_u >= 0.0)) throw std::invalid_argument("scenario: sigma_u must be >= 0");

  const CovariateSchema s = schema();
  model_spec().validate(s);
  for (const auto& gen : covariates) {
    if (gen.covariate.kind == CovariateKind::Categorical) {
      if (gen.level_probs.size() != gen.covariate.levels.size())
        throw std::invalid_argument("scenario: probs must align with levels for '" +
                                    gen.covariate.name + "'");
      double total = 0.0;
      for (double p : gen.level_probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("scenario: negative level probability");
        total += p;
      }
      if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("scenario: level probabilities must sum to 1 for '" +
                                    gen.covariate.name + "'");
    } else if (gen.dist == CovariateGenerator::Dist::Uniform) {
      if (!(gen.uniform_min < gen.uniform_max))
        throw std::invalid_argument("scenario: uniform bounds must satisfy min < max for '" +
                                    gen.covariate.name + "'");
    } else {
      if (!(gen.normal_sd >= 0.0))
        throw std::invalid_argument("scenario: normal sd must be >= 0 for '" +
                                    gen.covariate.name + "'");
    }
  }
  true_beta();  // verifies the coefficient map covers the design exactly
}

double sample_event_time(double omega, double lin, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("sample_event_time: u must be in (0, 1)");
  if (!(omega > -1.0)) throw std::invalid_argument("sample_event_time: omega must be > -1");
  // S(T) = u  =>  T = (-log u * exp(-lin))^(1/(omega+1))
  return std::exp((std::log(-std::log(u)) - lin) / (omega + 1.0));
}

std::pair<Cohort, GroundTruth> generate_cohort(const SimScenario& scenario) {
  scenario.validate();
  const CovariateSchema schema = scenario.schema();
  const auto [columns, beta] = scenario.true_beta();

  GroundTruth truth;
  truth.columns = columns;
  truth.beta = beta;
  truth.omega = scenario.omega;
  truth.sigma_u = scenario.sigma_u;
  truth.seed = scenario.seed;

  Cohort cohort;
  cohort.schema = schema;
  cohort.subjects.resize(static_cast<std::size_t>(scenario.n_subjects));
  truth.gamma.resize(static_cast<std::size_t>(scenario.n_subjects));

  // Scrambling the seed before the subject offset keeps streams disjoint
  // across nearby seeds (seed s, subject i+1 must not equal seed s+1, subject i).
  const std::uint64_t stream_base = splitmix64(scenario.seed);
  stats::parallel_for(
      static_cast<std::size_t>(scenario.n_subjects), stats::env_thread_count(),
      [&](std::size_t i) {
        Stream stream(stream_base + static_cast<std::uint64_t>(i));
        Subject subject;
        subject.id = subject_label(static_cast<int>(i), scenario.n_subjects);

        // Fixed draw order: per-subject covariates, frailty, then per spell.
        std::map<std::string, double> fixed_numeric;
        std::map<std::string, std::string> fixed_level;
        for (const auto& gen : scenario.covariates) {
          if (!gen.per_subject) continue;
          if (gen.covariate.kind == CovariateKind::Numeric) {
            fixed_numeric[gen.covariate.name] =
                gen.dist == CovariateGenerator::Dist::Uniform
                    ? gen.uniform_min + (gen.uniform_max - gen.uniform_min) * stream.uniform()
                    : stream.normal(gen.normal_mean, gen.normal_sd);
          } else {
            const double u = stream.uniform();
            double cumulative = 0.0;
            std::string chosen = gen.covariate.levels.back();
            for (std::size_t k = 0; k < gen.covariate.levels.size(); ++k) {
              cumulative += gen.level_probs[k];
              if (u <= cumulative) {
                chosen = gen.covariate.levels[k];
                break;
              }
            }
            fixed_level[gen.covariate.name] = chosen;
          }
        }

        const double gamma = scenario.sigma_u > 0.0 ? stream.normal(0.0, scenario.sigma_u) : 0.0;
        truth.gamma[i] = {subject.id, gamma};

        for (int j = 1; j <= scenario.max_spells; ++j) {
          Spell spell;
          spell.seq = j;
          spell.numeric_values = fixed_numeric;
          spell.categorical_values = fixed_level;
          for (const auto& gen : scenario.covariates) {
            if (gen.per_subject) continue;
            if (gen.covariate.kind == CovariateKind::Numeric) {
              spell.numeric_values[gen.covariate.name] =
                  gen.dist == CovariateGenerator::Dist::Uniform
                      ? gen.uniform_min + (gen.uniform_max - gen.uniform_min) * stream.uniform()
                      : stream.normal(gen.normal_mean, gen.normal_sd);
            } else {
              const double u = stream.uniform();
              double cumulative = 0.0;
              std::string chosen = gen.covariate.levels.back();
              for (std::size_t k = 0; k < gen.covariate.levels.size(); ++k) {
                cumulative += gen.level_probs[k];
                if (u <= cumulative) {
                  chosen = gen.covariate.levels[k];
                  break;
                }
              }
              spell.categorical_values[gen.covariate.name] = chosen;
            }
          }

          double eta = 0.0;
          {
            int col = 0;
            eta += beta(col++);  // intercept
            for (const auto& term : scenario.terms) {
              const int width = term_width(term, schema);
              std::vector<double> values(static_cast<std::size_t>(width));
              eval_term(term, schema, spell, values.data());
              for (int k = 0; k < width; ++k) eta += beta(col++) * values[static_cast<std::size_t>(k)];
            }
          }

          const double t = sample_event_time(scenario.omega, eta + gamma, stream.uniform());
          if (t <= scenario.window) {
            spell.time = t;
            spell.event = 1;
            subject.spells.push_back(std::move(spell));
          } else {
            spell.time = 31.0;
            spell.event = 0;
            subject.spells.push_back(std::move(spell));
            break;
          }
        }
        cohort.subjects[i] = std::move(subject);
      });

  // Subject labels are generated in id order already (zero-padded indices).
  return {std::move(cohort), std::move(truth)};
}

RecoveryReport recovery_report(const SimScenario& scenario, const inference::FitResult& fit) {
  const auto [columns, beta] = scenario.true_beta();
  if (columns != fit.columns)
    throw std::invalid_argument("recovery_report: fit columns do not match the scenario design");
  if (!fit.covariance_ok) throw std::runtime_error("recovery_report: fit covariance unavailable");

  const Eigen::VectorXd se = fit.covariance_reporting.diagonal().cwiseSqrt();
  const bool near_boundary = scenario.sigma_u < 0.1;

  RecoveryReport report;
  const auto add = [&](const std::string& name, double truth, double estimate, double std_error,
                       bool boundary) {
    RecoveryRow row;
    row.parameter = name;
    row.truth = truth;
    row.estimate = estimate;
    row.std_error = std_error;
    row.z = std_error > 0.0 ? (estimate - truth) / std_error : 0.0;
    row.in_ci = std::fabs(estimate - truth) <= 1.96 * std_error;
    row.boundary = boundary;
    report.rows.push_back(row);
  };

  for (int j = 0; j < fit.layout.n_beta; ++j)
    add(fit.columns[static_cast<std::size_t>(j)], beta(j), fit.estimate.beta(j), se(j), false);
  if (fit.layout.omega_free)
    add("omega", scenario.omega, fit.estimate.omega, se(fit.layout.n_beta), false);
  add("sd", scenario.sigma_u, fit.estimate.sigma_u, se(fit.layout.dim() - 1), near_boundary);
  return report;
}

}  // namespace readmit::simulate
