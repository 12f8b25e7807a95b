#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace readmit {

enum class CovariateKind { Numeric, Categorical };

/// Declared covariate: numeric, or categorical with an ordered level list and
/// a designated reference level (omitted under reference-cell coding).
struct Covariate {
  std::string name;
  CovariateKind kind = CovariateKind::Numeric;
  std::vector<std::string> levels;  // categorical only
  std::string reference;            // categorical only; must be a member of levels

  bool has_level(const std::string& level) const;
};

struct CovariateSchema {
  std::vector<Covariate> covariates;

  const Covariate* find(const std::string& name) const;
  void validate() const;  // unique names, reference in levels, >= 2 levels
};

/// One admission/discharge episode. Covariate values are split by kind and
/// keyed by covariate name; both maps together hold the raw record.
struct Spell {
  int seq = 0;        // order of readmission within the subject, 1-based
  double time = 0.0;  // days; event spells in (0, 30], censored spells record 31
  int event = 0;      // 1 = readmitted within the window, 0 = right-censored
  std::map<std::string, double> numeric_values;
  std::map<std::string, std::string> categorical_values;
};

struct Subject {
  std::string id;
  std::vector<Spell> spells;  // sorted by seq, consecutive from 1
};

/// Validated recurrent-event data: subjects sorted by id, spells by seq.
/// Immutable by convention after construction; safe to share across readers.
struct Cohort {
  std::vector<Subject> subjects;
  CovariateSchema schema;
  bool censor_times_rewritten = false;  // true when censored times were set to 30 at ingestion

  std::size_t n_spells() const;
};

}  // namespace readmit
