#include "readmit/screen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace readmit::screen {

namespace {

std::vector<double> numeric_column(const Cohort& cohort, const std::string& name) {
  std::vector<double> out;
  for (const auto& subject : cohort.subjects)
    for (const auto& spell : subject.spells) out.push_back(spell.numeric_values.at(name));
  return out;
}

std::vector<std::string> categorical_column(const Cohort& cohort, const std::string& name) {
  std::vector<std::string> out;
  for (const auto& subject : cohort.subjects)
    for (const auto& spell : subject.spells) out.push_back(spell.categorical_values.at(name));
  return out;
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

bool constant(const std::vector<double>& x) {
  for (double v : x)
    if (v != x.front()) return false;
  return true;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Cramer's V over the observed contingency table; empty rows/columns dropped.
double cramers_v(const std::vector<std::string>& x, const std::vector<std::string>& y,
                 bool& degenerate) {
  std::map<std::string, int> levels_x, levels_y;
  for (const auto& v : x) levels_x.emplace(v, 0);
  for (const auto& v : y) levels_y.emplace(v, 0);
  int idx = 0;
  for (auto& [_, i] : levels_x) i = idx++;
  idx = 0;
  for (auto& [_, i] : levels_y) i = idx++;

  const std::size_t r = levels_x.size(), c = levels_y.size();
  if (r < 2 || c < 2) {
    degenerate = true;
    return 0.0;
  }
  degenerate = false;

  std::vector<double> table(r * c, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    table[static_cast<std::size_t>(levels_x[x[i]]) * c + static_cast<std::size_t>(levels_y[y[i]])] += 1.0;

  const double n = static_cast<double>(x.size());
  std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      row_sum[i] += table[i * c + j];
      col_sum[j] += table[i * c + j];
    }

  double chi2 = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double expected = row_sum[i] * col_sum[j] / n;
      const double d = table[i * c + j] - expected;
      chi2 += d * d / expected;
    }
  const double k = static_cast<double>(std::min(r, c)) - 1.0;
  return std::sqrt(chi2 / (n * k));
}

// Correlation ratio eta: share of numeric variance explained by the grouping.
double correlation_ratio(const std::vector<std::string>& group, const std::vector<double>& x,
                         bool& degenerate) {
  std::map<std::string, std::pair<double, int>> acc;  // sum, count
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto& [sum, count] = acc[group[i]];
    sum += x[i];
    count += 1;
  }
  if (acc.size() < 2 || constant(x)) {
    degenerate = true;
    return 0.0;
  }
  degenerate = false;
  const double m = mean_of(x);
  double between = 0.0, total = 0.0;
  for (const auto& [level, sc] : acc) {
    const double gm = sc.first / sc.second;
    between += sc.second * (gm - m) * (gm - m);
  }
  for (double v : x) total += (v - m) * (v - m);
  return std::sqrt(between / total);
}

}  // namespace

std::vector<Association> correlation_screen(
    const Cohort& cohort, const std::vector<std::pair<std::string, std::string>>& pairs,
    const ScreenOptions& options) {
  std::vector<Association> report;
  report.reserve(pairs.size());

  for (const auto& [a, b] : pairs) {
    const Covariate* ca = cohort.schema.find(a);
    const Covariate* cb = cohort.schema.find(b);
    if (ca == nullptr || cb == nullptr)
      throw std::invalid_argument("correlation_screen: unknown covariate '" +
                                  (ca == nullptr ? a : b) + "'");

    Association assoc;
    assoc.first = a;
    assoc.second = b;

    if (ca->kind == CovariateKind::Numeric && cb->kind == CovariateKind::Numeric) {
      const auto xa = numeric_column(cohort, a);
      const auto xb = numeric_column(cohort, b);
      if (constant(xa) || constant(xb)) {
        assoc.kind = AssociationKind::Degenerate;
        assoc.note = std::string("degenerate covariate '") + (constant(xa) ? a : b) +
                     "': zero variance";
      } else {
        assoc.kind = AssociationKind::Pearson;
        assoc.value = pearson(xa, xb);
      }
    } else if (ca->kind == CovariateKind::Categorical && cb->kind == CovariateKind::Categorical) {
      bool degenerate = false;
      const double v = cramers_v(categorical_column(cohort, a), categorical_column(cohort, b),
                                 degenerate);
      if (degenerate) {
        assoc.kind = AssociationKind::Degenerate;
        assoc.note = "degenerate covariate: single observed level";
      } else {
        assoc.kind = AssociationKind::CramersV;
        assoc.value = v;
      }
    } else {
      const auto& cat = ca->kind == CovariateKind::Categorical ? a : b;
      const auto& num = ca->kind == CovariateKind::Categorical ? b : a;
      bool degenerate = false;
      const double v =
          correlation_ratio(categorical_column(cohort, cat), numeric_column(cohort, num),
                            degenerate);
      if (degenerate) {
        assoc.kind = AssociationKind::Degenerate;
        assoc.note = "degenerate covariate: constant or single observed level";
      } else {
        assoc.kind = AssociationKind::CorrelationRatio;
        assoc.value = v;
      }
    }

    assoc.flagged =
        assoc.kind != AssociationKind::Degenerate && std::fabs(assoc.value) >= options.flag_threshold;
    report.push_back(std::move(assoc));
  }
  return report;
}

}  // namespace readmit::screen
