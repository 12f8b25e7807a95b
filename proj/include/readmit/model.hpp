#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "readmit/types.hpp"

namespace readmit {

enum class Transform { Identity, Log };
enum class BaselineFamily { Weibull, Exponential };

/// One factor of a term: a covariate reference plus an optional transform
/// (numeric covariates only). "seq" is always available as a numeric factor.
struct TermFactor {
  std::string covariate;
  Transform transform = Transform::Identity;
};

/// A fixed-effect model term: a main effect (one factor) or a two-way
/// interaction (two factors).
struct Term {
  std::string name;
  std::vector<TermFactor> factors;  // size 1 or 2
};

struct ModelSpec {
  std::vector<Term> terms;
  BaselineFamily family = BaselineFamily::Weibull;

  void validate(const CovariateSchema& schema) const;
};

/// Span of design-matrix columns owned by one term.
struct TermSpan {
  std::string term;
  int start = 0;
  int width = 0;
};

/// Row-per-spell numeric design matrix with intercept first, then term
/// columns in spec order. subject_index maps each row to its subject's
/// position in the cohort.
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> columns;
  std::vector<TermSpan> spans;  // excludes the intercept
  std::vector<int> subject_index;

  const TermSpan* find_term(const std::string& name) const;
};

/// Column names a term expands to under reference-cell coding.
std::vector<std::string> term_column_names(const Term& term, const CovariateSchema& schema);

/// Evaluates one term for a single spell; writes term_width values.
/// Throws on log of a non-positive value, naming the covariate.
void eval_term(const Term& term, const CovariateSchema& schema, const Spell& spell,
               double* out);

int term_width(const Term& term, const CovariateSchema& schema);

DesignMatrix build_design(const Cohort& cohort, const ModelSpec& spec);

}  // namespace readmit
