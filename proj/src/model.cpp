#include "readmit/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace readmit {

namespace {

// Built-in numeric pseudo-covariate: the within-subject spell sequence.
bool is_builtin_numeric(const std::string& name) { return name == "seq"; }

const Covariate* resolve(const CovariateSchema& schema, const std::string& name) {
  return schema.find(name);
}

void validate_factor(const TermFactor& f, const CovariateSchema& schema,
                     const std::string& term_name) {
  if (is_builtin_numeric(f.covariate)) return;
  const Covariate* cov = resolve(schema, f.covariate);
  if (cov == nullptr)
    throw std::invalid_argument("term '" + term_name + "': unknown covariate '" + f.covariate +
                                "'");
  if (cov->kind == CovariateKind::Categorical && f.transform != Transform::Identity)
    throw std::invalid_argument("term '" + term_name + "': transform on categorical covariate '" +
                                f.covariate + "'");
}

int factor_width(const TermFactor& f, const CovariateSchema& schema) {
  if (is_builtin_numeric(f.covariate)) return 1;
  const Covariate* cov = resolve(schema, f.covariate);
  if (cov->kind == CovariateKind::Numeric) return 1;
  return static_cast<int>(cov->levels.size()) - 1;
}

// Non-reference levels in declared order.
std::vector<std::string> dummy_levels(const Covariate& cov) {
  std::vector<std::string> out;
  for (const auto& level : cov.levels)
    if (level != cov.reference) out.push_back(level);
  return out;
}

double numeric_factor_value(const TermFactor& f, const Spell& spell) {
  double v;
  if (is_builtin_numeric(f.covariate)) {
    v = static_cast<double>(spell.seq);
  } else {
    v = spell.numeric_values.at(f.covariate);
  }
  if (f.transform == Transform::Log) {
    if (!(v > 0.0))
      throw std::invalid_argument("log transform of non-positive value for covariate '" +
                                  f.covariate + "'");
    v = std::log(v);
  }
  return v;
}

// Dummy vector (length L-1) for one categorical factor at this spell.
void categorical_factor_values(const Covariate& cov, const Spell& spell, double* out) {
  const std::string& observed = spell.categorical_values.at(cov.name);
  int k = 0;
  for (const auto& level : cov.levels) {
    if (level == cov.reference) continue;
    out[k++] = observed == level ? 1.0 : 0.0;
  }
}

}  // namespace

void ModelSpec::validate(const CovariateSchema& schema) const {
  schema.validate();
  std::set<std::string> names;
  for (const auto& term : terms) {
    if (term.name.empty()) throw std::invalid_argument("term with empty name");
    if (!names.insert(term.name).second)
      throw std::invalid_argument("duplicate term '" + term.name + "'");
    if (term.factors.empty() || term.factors.size() > 2)
      throw std::invalid_argument("term '" + term.name +
                                  "': main effects and two-way interactions only");
    for (const auto& f : term.factors) validate_factor(f, schema, term.name);
  }
}

const TermSpan* DesignMatrix::find_term(const std::string& name) const {
  for (const auto& span : spans)
    if (span.term == name) return &span;
  return nullptr;
}

int term_width(const Term& term, const CovariateSchema& schema) {
  int w = 1;
  for (const auto& f : term.factors) w *= factor_width(f, schema);
  return w;
}

std::vector<std::string> term_column_names(const Term& term, const CovariateSchema& schema) {
  // A width-1 term keeps its own name; wider terms append the level combo.
  std::vector<std::vector<std::string>> labels;
  for (const auto& f : term.factors) {
    const Covariate* cov = is_builtin_numeric(f.covariate) ? nullptr : resolve(schema, f.covariate);
    if (cov != nullptr && cov->kind == CovariateKind::Categorical) {
      labels.push_back(dummy_levels(*cov));
    } else {
      labels.push_back({""});
    }
  }
  std::vector<std::string> out;
  for (const auto& a : labels[0]) {
    if (labels.size() == 1) {
      out.push_back(a);
    } else {
      for (const auto& b : labels[1]) {
        std::string combo = a;
        if (!a.empty() && !b.empty()) combo = a + "*" + b;
        else if (!b.empty()) combo = b;
        out.push_back(combo);
      }
    }
  }
  for (auto& label : out) label = label.empty() ? term.name : term.name + "=" + label;
  return out;
}

void eval_term(const Term& term, const CovariateSchema& schema, const Spell& spell, double* out) {
  // Per-factor column blocks, then the interaction is their outer product.
  double scalar = 1.0;
  std::vector<double> block;  // at most one categorical block per factor pair handled below
  std::vector<double> block2;
  bool have_block = false, have_block2 = false;

  for (const auto& f : term.factors) {
    const Covariate* cov = is_builtin_numeric(f.covariate) ? nullptr : resolve(schema, f.covariate);
    if (cov != nullptr && cov->kind == CovariateKind::Categorical) {
      std::vector<double> values(static_cast<std::size_t>(cov->levels.size() - 1));
      categorical_factor_values(*cov, spell, values.data());
      if (!have_block) {
        block = std::move(values);
        have_block = true;
      } else {
        block2 = std::move(values);
        have_block2 = true;
      }
    } else {
      scalar *= numeric_factor_value(f, spell);
    }
  }

  if (!have_block) {
    out[0] = scalar;
  } else if (!have_block2) {
    for (std::size_t i = 0; i < block.size(); ++i) out[i] = scalar * block[i];
  } else {
    std::size_t k = 0;
    for (double a : block)
      for (double b : block2) out[k++] = scalar * a * b;
  }
}

DesignMatrix build_design(const Cohort& cohort, const ModelSpec& spec) {
  spec.validate(cohort.schema);
  if (cohort.subjects.empty()) throw std::invalid_argument("build_design: empty cohort");

  const std::size_t n_rows = cohort.n_spells();
  int n_cols = 1;
  std::vector<TermSpan> spans;
  for (const auto& term : spec.terms) {
    const int w = term_width(term, cohort.schema);
    spans.push_back(TermSpan{term.name, n_cols, w});
    n_cols += w;
  }

  DesignMatrix design;
  design.X.resize(static_cast<Eigen::Index>(n_rows), n_cols);
  design.columns.push_back("(intercept)");
  for (const auto& term : spec.terms)
    for (const auto& name : term_column_names(term, cohort.schema)) design.columns.push_back(name);
  design.spans = spans;
  design.subject_index.resize(n_rows);

  std::size_t row = 0;
  for (std::size_t s = 0; s < cohort.subjects.size(); ++s) {
    for (const auto& spell : cohort.subjects[s].spells) {
      design.X(static_cast<Eigen::Index>(row), 0) = 1.0;
      for (std::size_t t = 0; t < spec.terms.size(); ++t) {
        std::vector<double> values(static_cast<std::size_t>(spans[t].width));
        eval_term(spec.terms[t], cohort.schema, spell, values.data());
        for (int k = 0; k < spans[t].width; ++k)
          design.X(static_cast<Eigen::Index>(row), spans[t].start + k) = values[static_cast<std::size_t>(k)];
      }
      design.subject_index[row] = static_cast<int>(s);
      ++row;
    }
  }

  // Singularity guard: exactly duplicated columns yield a rank-deficient fit.
  for (int i = 0; i < n_cols; ++i) {
    for (int j = i + 1; j < n_cols; ++j) {
      if (design.X.col(i) == design.X.col(j))
        throw std::invalid_argument("design matrix columns '" + design.columns[static_cast<std::size_t>(i)] +
                                    "' and '" + design.columns[static_cast<std::size_t>(j)] +
                                    "' are identical");
    }
  }
  return design;
}

}  // namespace readmit
