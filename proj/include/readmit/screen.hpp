#pragma once

#include <string>
#include <vector>

#include "readmit/types.hpp"

namespace readmit::screen {

enum class AssociationKind { Pearson, CramersV, CorrelationRatio, Degenerate };

struct Association {
  std::string first;
  std::string second;
  AssociationKind kind = AssociationKind::Degenerate;
  double value = 0.0;   // meaningless when degenerate
  bool flagged = false;
  std::string note;     // set for degenerate pairs
};

struct ScreenOptions {
  double flag_threshold = 0.8;
};

/// Pairwise association over spells: Pearson correlation for numeric pairs,
/// Cramer's V for categorical pairs, the correlation ratio for mixed pairs.
/// Degenerate covariates (constant / single observed level) are reported, not
/// computed.
std::vector<Association> correlation_screen(
    const Cohort& cohort, const std::vector<std::pair<std::string, std::string>>& pairs,
    const ScreenOptions& options = {});

}  // namespace readmit::screen
