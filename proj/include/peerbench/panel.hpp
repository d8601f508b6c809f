#pragma once

// Panel data model: ingestion from delimited text, covariate construction
// (including the two-sample KS distance that turns a group label into a
// number), and re-emission for audit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "peerbench/error.hpp"
#include "peerbench/text.hpp"

namespace peerbench {

enum class CovariateKind {
  kRaw,            // numeric pass-through
  kCode,           // hierarchical integer code used numerically
  kGroupDistance,  // group label replaced by KS distance to the baseline group
};

struct CovariateDef {
  std::string column;
  CovariateKind kind = CovariateKind::kRaw;
};

struct CovariateSpec {
  std::vector<CovariateDef> covariates;
  std::string baseline_group;

  std::optional<std::size_t> group_index() const {
    for (std::size_t j = 0; j < covariates.size(); ++j)
      if (covariates[j].kind == CovariateKind::kGroupDistance) return j;
    return std::nullopt;
  }

  void validate() const {
    std::size_t groups = 0;
    std::set<std::string> seen;
    for (const auto& c : covariates) {
      if (c.column.empty()) throw ConfigError("covariate with empty column name");
      if (!seen.insert(c.column).second) throw ConfigError("covariate '" + c.column + "' listed twice");
      if (c.kind == CovariateKind::kGroupDistance) ++groups;
    }
    if (groups > 1) throw ConfigError("at most one group-distance covariate is supported");
    if (groups == 1 && baseline_group.empty())
      throw ConfigError("group-distance covariate requires a baseline group");
  }
};

// Column roles plus covariate definitions; read from a key-value file:
//   subject = firm
//   time = year
//   score = roa
//   covariates = year, gics:code, log_assets, leverage, country:ks
//   baseline = USA
//   delimiter = comma
struct PanelSchema {
  std::string subject_column = "subject";
  std::string time_column = "time";
  std::string score_column = "score";
  CovariateSpec spec;
  char delimiter = ',';

  static PanelSchema from_config(const text::KeyValueConfig& cfg) {
    PanelSchema s;
    s.subject_column = cfg.get_or("subject", s.subject_column);
    s.time_column = cfg.get_or("time", s.time_column);
    s.score_column = cfg.get_or("score", s.score_column);
    s.delimiter = text::parse_delimiter(cfg.get_or("delimiter", ","));
    s.spec.baseline_group = cfg.get_or("baseline", "");
    for (const auto& item : text::split_list(cfg.get_or("covariates", ""))) {
      CovariateDef def;
      const auto colon = item.find(':');
      def.column = std::string(text::trim(item.substr(0, colon)));
      if (colon != std::string::npos) {
        const auto kind = text::trim(std::string_view(item).substr(colon + 1));
        if (kind == "raw") def.kind = CovariateKind::kRaw;
        else if (kind == "code") def.kind = CovariateKind::kCode;
        else if (kind == "ks" || kind == "group") def.kind = CovariateKind::kGroupDistance;
        else throw ConfigError("unknown covariate kind '" + std::string(kind) + "'");
      }
      s.spec.covariates.push_back(def);
    }
    s.spec.validate();
    return s;
  }

  text::KeyValueConfig to_config() const {
    text::KeyValueConfig cfg;
    cfg.set("subject", subject_column);
    cfg.set("time", time_column);
    cfg.set("score", score_column);
    cfg.set("delimiter", delimiter == '\t' ? "tab" : std::string(1, delimiter));
    std::string list;
    for (const auto& c : spec.covariates) {
      if (!list.empty()) list += ", ";
      list += c.column;
      if (c.kind == CovariateKind::kCode) list += ":code";
      if (c.kind == CovariateKind::kGroupDistance) list += ":ks";
    }
    cfg.set("covariates", list);
    if (!spec.baseline_group.empty()) cfg.set("baseline", spec.baseline_group);
    return cfg;
  }
};

struct Observation {
  std::string subject_id;
  int time = 0;
  double raw_score = 0.0;
  // One slot per covariate; the group-distance slot is NaN until built.
  std::vector<double> covariates;
  std::string group;
};

struct PanelDataset {
  std::vector<Observation> observations;
  std::vector<std::string> covariate_names;
  PanelSchema schema;
  std::pair<int, int> time_range{0, 0};
  std::size_t dropped_missing_score = 0;
  std::size_t dropped_missing_covariate = 0;
  bool covariates_built = false;

  std::size_t size() const noexcept { return observations.size(); }
  std::size_t arity() const noexcept { return covariate_names.size(); }

  std::vector<double> raw_scores() const {
    std::vector<double> out;
    out.reserve(observations.size());
    for (const auto& o : observations) out.push_back(o.raw_score);
    return out;
  }

  // Row-major covariate matrix (size() x arity()).
  std::vector<double> covariate_matrix() const {
    std::vector<double> out;
    out.reserve(observations.size() * arity());
    for (const auto& o : observations) out.insert(out.end(), o.covariates.begin(), o.covariates.end());
    return out;
  }

  void update_time_range() {
    if (observations.empty()) {
      time_range = {0, 0};
      return;
    }
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (const auto& o : observations) {
      lo = std::min(lo, o.time);
      hi = std::max(hi, o.time);
    }
    time_range = {lo, hi};
  }

  // Throws UniquenessError on a repeated (subject, time) pair.
  void check_unique() const {
    std::set<std::pair<std::string, int>> keys;
    for (const auto& o : observations)
      if (!keys.emplace(o.subject_id, o.time).second)
        throw UniquenessError("duplicate observation (" + o.subject_id + ", " + std::to_string(o.time) + ")");
  }
};

// Sup-norm distance between the two empirical CDFs.
inline double ks_distance(std::span<const double> sample_a, std::span<const double> sample_b) {
  if (sample_a.empty() || sample_b.empty()) throw DomainError("ks_distance: empty sample");
  std::vector<double> a(sample_a.begin(), sample_a.end());
  std::vector<double> b(sample_b.begin(), sample_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

inline PanelDataset load_panel(std::istream& in, const PanelSchema& schema) {
  schema.spec.validate();
  PanelDataset data;
  data.schema = schema;
  for (const auto& c : schema.spec.covariates) data.covariate_names.push_back(c.column);

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::trim(line).empty()) {
      header = text::split_record(line, schema.delimiter, line_no);
      break;
    }
  }
  if (header.empty()) throw ParseError(line_no, "missing header row");
  for (auto& h : header) h = std::string(text::trim(h));

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(1, "header has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t subject_col = column_of(schema.subject_column);
  const std::size_t time_col = column_of(schema.time_column);
  const std::size_t score_col = column_of(schema.score_column);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.spec.covariates) cov_cols.push_back(column_of(c.column));

  std::set<std::pair<std::string, int>> keys;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_record(line, schema.delimiter, line_no);
    if (fields.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    Observation obs;
    obs.subject_id = std::string(text::trim(fields[subject_col]));
    if (obs.subject_id.empty()) throw ParseError(line_no, "empty subject id");
    const auto t = text::parse_int(fields[time_col]);
    if (!t || *t < std::numeric_limits<int>::min() || *t > std::numeric_limits<int>::max())
      throw ParseError(line_no, "time is not an integer: '" + fields[time_col] + "'");
    obs.time = static_cast<int>(*t);

    if (text::trim(fields[score_col]).empty()) {
      ++data.dropped_missing_score;
      continue;
    }
    const auto score = text::parse_double(fields[score_col]);
    if (!score || !std::isfinite(*score))
      throw ParseError(line_no, "score is not a finite number: '" + fields[score_col] + "'");
    obs.raw_score = *score;

    bool missing = false;
    for (std::size_t j = 0; j < cov_cols.size() && !missing; ++j) {
      const std::string& cell = fields[cov_cols[j]];
      if (text::trim(cell).empty()) {
        missing = true;
        break;
      }
      switch (schema.spec.covariates[j].kind) {
        case CovariateKind::kRaw: {
          const auto v = text::parse_double(cell);
          if (!v || !std::isfinite(*v))
            throw ParseError(line_no, "covariate '" + schema.spec.covariates[j].column + "' is not numeric: '" + cell + "'");
          obs.covariates.push_back(*v);
          break;
        }
        case CovariateKind::kCode: {
          const auto v = text::parse_int(cell);
          if (!v) throw ParseError(line_no, "code '" + schema.spec.covariates[j].column + "' is not an integer: '" + cell + "'");
          obs.covariates.push_back(static_cast<double>(*v));
          break;
        }
        case CovariateKind::kGroupDistance:
          obs.group = std::string(text::trim(cell));
          obs.covariates.push_back(std::numeric_limits<double>::quiet_NaN());
          break;
      }
    }
    if (missing) {
      ++data.dropped_missing_covariate;
      continue;
    }
    if (!keys.emplace(obs.subject_id, obs.time).second)
      throw UniquenessError("line " + std::to_string(line_no) + ": duplicate observation (" + obs.subject_id +
                            ", " + std::to_string(obs.time) + ")");
    data.observations.push_back(std::move(obs));
  }
  data.update_time_range();
  data.covariates_built = !schema.spec.group_index().has_value();
  return data;
}

// Replaces the group label covariate by the KS distance between the group's
// pooled raw scores and the baseline group's. Other covariates pass through.
inline PanelDataset build_covariates(const PanelDataset& data) {
  PanelDataset out = data;
  const auto g = data.schema.spec.group_index();
  if (!g) {
    out.covariates_built = true;
    return out;
  }
  std::map<std::string, std::vector<double>> by_group;
  for (const auto& o : data.observations) by_group[o.group].push_back(o.raw_score);
  const std::string& baseline = data.schema.spec.baseline_group;
  const auto base = by_group.find(baseline);
  if (base == by_group.end() || base->second.empty())
    throw DomainError("baseline group '" + baseline + "' has no observations");
  std::map<std::string, double> distance;
  for (const auto& [label, scores] : by_group) {
    if (scores.empty()) throw DomainError("group '" + label + "' has no observations");
    distance[label] = label == baseline ? 0.0 : ks_distance(scores, base->second);
  }
  for (auto& o : out.observations) o.covariates[*g] = distance.at(o.group);
  out.covariates_built = true;
  return out;
}

// Header mirrors the schema; a built group covariate adds a "<column>_ks"
// column next to the label.
inline void write_panel(std::ostream& os, const PanelDataset& data) {
  const auto& schema = data.schema;
  const char d = schema.delimiter;
  std::vector<std::string> header{schema.subject_column, schema.time_column, schema.score_column};
  for (const auto& c : schema.spec.covariates) {
    header.push_back(c.column);
    if (c.kind == CovariateKind::kGroupDistance && data.covariates_built) header.push_back(c.column + "_ks");
  }
  os << text::join_record(header, d) << '\n';
  std::vector<std::string> row;
  for (const auto& o : data.observations) {
    row.clear();
    row.push_back(o.subject_id);
    row.push_back(std::to_string(o.time));
    row.push_back(text::format_double(o.raw_score));
    for (std::size_t j = 0; j < schema.spec.covariates.size(); ++j) {
      switch (schema.spec.covariates[j].kind) {
        case CovariateKind::kRaw:
          row.push_back(text::format_double(o.covariates[j]));
          break;
        case CovariateKind::kCode:
          row.push_back(std::to_string(static_cast<std::int64_t>(o.covariates[j])));
          break;
        case CovariateKind::kGroupDistance:
          row.push_back(o.group);
          if (data.covariates_built) row.push_back(text::format_double(o.covariates[j]));
          break;
      }
    }
    os << text::join_record(row, d) << '\n';
  }
}

}  // namespace peerbench
