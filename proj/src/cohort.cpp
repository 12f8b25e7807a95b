#include "readmit/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace readmit {

bool Covariate::has_level(const std::string& level) const {
  return std::find(levels.begin(), levels.end(), level) != levels.end();
}

const Covariate* CovariateSchema::find(const std::string& name) const {
  for (const auto& c : covariates)
    if (c.name == name) return &c;
  return nullptr;
}

void CovariateSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& c : covariates) {
    if (c.name.empty()) throw std::invalid_argument("schema: covariate with empty name");
    if (!seen.insert(c.name).second)
      throw std::invalid_argument("schema: duplicate covariate '" + c.name + "'");
    if (c.kind == CovariateKind::Categorical) {
      if (c.levels.size() < 2)
        throw std::invalid_argument("schema: categorical '" + c.name + "' needs at least 2 levels");
      std::set<std::string> lev(c.levels.begin(), c.levels.end());
      if (lev.size() != c.levels.size())
        throw std::invalid_argument("schema: duplicate level in '" + c.name + "'");
      if (!c.has_level(c.reference))
        throw std::invalid_argument("schema: reference level '" + c.reference +
                                    "' not among levels of '" + c.name + "'");
    }
  }
}

std::size_t Cohort::n_spells() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.spells.size();
  return n;
}

namespace cohort {

IngestError::IngestError(std::string message, long line_no)
    : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + message
                                     : std::move(message)),
      line(line_no) {}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

double parse_double(const std::string& s, const std::string& what, long line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    if (!std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("unparseable numeric value '" + s + "' for " + what, line);
  }
}

long parse_int(const std::string& s, const std::string& what, long line) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("unparseable integer value '" + s + "' for " + what, line);
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Cohort ingest_csv_text(const std::string& text, const CovariateSchema& schema,
                       const IngestOptions& options) {
  schema.validate();

  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IngestError("empty file");
  const auto header = split_csv_line(line);

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second)
      throw IngestError("duplicate column '" + header[i] + "'", 1);
  }
  for (const char* required : {"subject_id", "seq", "time", "event"}) {
    if (column.find(required) == column.end())
      throw IngestError(std::string("missing required column '") + required + "'", 1);
  }
  for (const auto& cov : schema.covariates) {
    if (column.find(cov.name) == column.end())
      throw IngestError("missing covariate column '" + cov.name + "'", 1);
  }

  std::map<std::string, std::vector<Spell>> by_subject;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw IngestError("expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);

    const std::string& id = fields[column["subject_id"]];
    if (id.empty()) throw IngestError("empty subject_id", line_no);

    Spell spell;
    const long seq = parse_int(fields[column["seq"]], "seq", line_no);
    if (seq < 1) throw IngestError("seq must be a positive integer", line_no);
    spell.seq = static_cast<int>(seq);
    spell.time = parse_double(fields[column["time"]], "time", line_no);
    const long event = parse_int(fields[column["event"]], "event", line_no);
    if (event != 0 && event != 1) throw IngestError("event must be 0 or 1", line_no);
    spell.event = static_cast<int>(event);

    if (!(spell.time > 0.0)) throw IngestError("time must be positive", line_no);
    if (spell.event == 1 && spell.time > 30.0)
      throw IngestError("event time exceeds 30-day window", line_no);
    if (spell.event == 0 && spell.time != 31.0)
      throw IngestError("censored spell must record time 31", line_no);

    for (const auto& cov : schema.covariates) {
      const std::string& raw = fields[column[cov.name]];
      if (raw.empty())
        throw IngestError("missing value for covariate '" + cov.name + "'", line_no);
      if (cov.kind == CovariateKind::Numeric) {
        spell.numeric_values[cov.name] = parse_double(raw, "covariate '" + cov.name + "'", line_no);
      } else {
        if (!cov.has_level(raw))
          throw IngestError("unknown level '" + raw + "' for covariate '" + cov.name + "'",
                            line_no);
        spell.categorical_values[cov.name] = raw;
      }
    }
    by_subject[id].push_back(std::move(spell));
  }

  if (by_subject.empty()) throw IngestError("no data rows");

  Cohort cohort;
  cohort.schema = schema;
  cohort.subjects.reserve(by_subject.size());
  for (auto& [id, spells] : by_subject) {
    std::sort(spells.begin(), spells.end(),
              [](const Spell& a, const Spell& b) { return a.seq < b.seq; });
    for (std::size_t j = 0; j < spells.size(); ++j) {
      if (spells[j].seq != static_cast<int>(j) + 1)
        throw IngestError("subject '" + id + "': seq values must be consecutive from 1");
    }
    cohort.subjects.push_back(Subject{id, std::move(spells)});
  }

  if (options.censor_at_30) {
    for (auto& subject : cohort.subjects)
      for (auto& spell : subject.spells)
        if (spell.event == 0) spell.time = 30.0;
    cohort.censor_times_rewritten = true;
  }
  return cohort;
}

Cohort ingest_csv(const std::string& path, const CovariateSchema& schema,
                  const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ingest_csv_text(buffer.str(), schema, options);
}

void write_csv(const Cohort& cohort, std::ostream& out) {
  out << "subject_id,seq,time,event";
  for (const auto& cov : cohort.schema.covariates) out << ',' << cov.name;
  out << '\n';
  for (const auto& subject : cohort.subjects) {
    for (const auto& spell : subject.spells) {
      const double time = spell.event == 0 ? 31.0 : spell.time;
      out << subject.id << ',' << spell.seq << ',' << format_double(time) << ',' << spell.event;
      for (const auto& cov : cohort.schema.covariates) {
        out << ',';
        if (cov.kind == CovariateKind::Numeric) {
          out << format_double(spell.numeric_values.at(cov.name));
        } else {
          out << spell.categorical_values.at(cov.name);
        }
      }
      out << '\n';
    }
  }
}

void write_csv_file(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file '" + path + "'");
  write_csv(cohort, out);
}

}  // namespace cohort
}  // namespace readmit
