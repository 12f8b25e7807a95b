#pragma once

#include <iosfwd>
#include <string>

#include "readmit/types.hpp"

namespace readmit::cohort {

/// Ingestion/validation failure; carries the 1-based file line when known.
struct IngestError : std::runtime_error {
  IngestError(std::string message, long line = 0);
  long line = 0;
};

struct IngestOptions {
  // Rewrites censored times from the on-disk 31 convention to the physical
  // day-30 censoring boundary before likelihood evaluation.
  bool censor_at_30 = false;
};

/// Reads a cohort CSV (columns subject_id, seq, time, event, plus every
/// schema covariate). Rows are grouped by subject and sorted by seq; subjects
/// are sorted by id, so the result is independent of input row order.
Cohort ingest_csv(const std::string& path, const CovariateSchema& schema,
                  const IngestOptions& options = {});

/// Same parser over an already-loaded document (used by tests and tools).
Cohort ingest_csv_text(const std::string& text, const CovariateSchema& schema,
                       const IngestOptions& options = {});

/// Writes the on-disk encoding: censored spells always emit time 31,
/// regardless of any in-memory rewrite. Numeric fields round-trip exactly.
void write_csv(const Cohort& cohort, std::ostream& out);
void write_csv_file(const Cohort& cohort, const std::string& path);

}  // namespace readmit::cohort
