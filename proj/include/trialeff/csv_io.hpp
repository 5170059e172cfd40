#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/errors.hpp"

namespace trialeff {

enum class CsvLayout { long_format, wide_format };

struct CsvOptions {
  CsvLayout layout = CsvLayout::wide_format;
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  // Overrides for named covariate columns; unnamed columns are inferred
  // (numeric with only 0/1 -> binary, numeric -> continuous, otherwise
  // categorical with lexicographically sorted levels).
  std::vector<CovariateSpec> schema;
  bool coerce_monotone = false;
};

struct CsvLoadInfo {
  std::size_t discarded_values = 0;  // only non-zero with coerce_monotone
};

namespace csv_detail {

inline std::vector<std::string> split_row(const std::string& line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::malformed_file, "line " + std::to_string(line_no) + ": unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
      line.erase(0, 3);
    if (line.empty()) continue;
    auto cells = split_row(line, line_no);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorCode::malformed_file, "line " + std::to_string(line_no) + ": expected " +
                                                 std::to_string(t.header.size()) + " cells, found " +
                                                 std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error(ErrorCode::malformed_file, "empty file");
  return t;
}

inline CovariateSpec resolve_schema(const std::string& name, const std::vector<std::string>& raw,
                                    const std::vector<CovariateSpec>& overrides) {
  for (const auto& s : overrides)
    if (s.name == name) return s;
  CovariateSpec spec;
  spec.name = name;
  bool numeric = true;
  bool zero_one = true;
  for (const auto& v : raw) {
    auto x = parse_number(v);
    if (!x) {
      numeric = false;
      break;
    }
    if (*x != 0.0 && *x != 1.0) zero_one = false;
  }
  if (numeric) {
    spec.kind = zero_one ? CovariateKind::binary : CovariateKind::continuous;
  } else {
    spec.kind = CovariateKind::categorical;
    std::set<std::string> levels(raw.begin(), raw.end());
    levels.erase("");
    spec.levels.assign(levels.begin(), levels.end());
  }
  return spec;
}

inline double encode_value(const CovariateSpec& spec, const std::string& raw, std::size_t line_no) {
  const auto where = [&] { return "line " + std::to_string(line_no) + ", covariate '" + spec.name + "'"; };
  if (raw.empty())
    throw Error(ErrorCode::malformed_file, where() + ": missing baseline covariates are not supported");
  switch (spec.kind) {
    case CovariateKind::categorical: {
      auto it = std::find(spec.levels.begin(), spec.levels.end(), raw);
      if (it == spec.levels.end()) throw Error(ErrorCode::malformed_file, where() + ": unknown level '" + raw + "'");
      return static_cast<double>(it - spec.levels.begin());
    }
    case CovariateKind::ordinal: {
      auto it = std::find(spec.levels.begin(), spec.levels.end(), raw);
      if (it != spec.levels.end()) return static_cast<double>(it - spec.levels.begin() + 1);
      [[fallthrough]];
    }
    default: {
      auto x = parse_number(raw);
      if (!x) throw Error(ErrorCode::malformed_file, where() + ": not a number '" + raw + "'");
      if (spec.kind == CovariateKind::binary && *x != 0.0 && *x != 1.0)
        throw Error(ErrorCode::malformed_file, where() + ": binary covariate outside {0,1}");
      return *x;
    }
  }
}

inline int parse_arm(const std::string& raw, std::size_t line_no) {
  auto x = parse_number(raw);
  if (!x || (*x != 0.0 && *x != 1.0))
    throw Error(ErrorCode::malformed_file, "line " + std::to_string(line_no) + ": arm must be 0 or 1");
  return static_cast<int>(*x);
}

inline std::optional<double> parse_outcome(const std::string& raw, std::size_t line_no) {
  if (raw.find_first_not_of(" \t") == std::string::npos) return std::nullopt;
  auto x = parse_number(raw);
  if (!x) throw Error(ErrorCode::malformed_file, "line " + std::to_string(line_no) + ": bad outcome '" + raw + "'");
  return x;
}

inline std::size_t column_index(const Table& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw Error(ErrorCode::malformed_file, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

inline TrialDataset finish(std::vector<ParticipantRecord> records, std::vector<std::string> labels,
                           std::vector<CovariateSpec> schema, const CsvOptions& opt, CsvLoadInfo* info) {
  std::size_t discarded = 0;
  if (opt.coerce_monotone) discarded = coerce_monotone(records);
  if (info) info->discarded_values = discarded;
  return TrialDataset(std::move(records), opt.outcome_kind, std::move(labels), std::move(schema));
}

inline TrialDataset read_wide(const Table& t, const CsvOptions& opt, CsvLoadInfo* info) {
  const std::size_t id_col = column_index(t, "subject_id");
  const std::size_t arm_col = column_index(t, "arm");
  std::vector<std::size_t> cov_cols, y_cols;
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == id_col || c == arm_col) continue;
    if (t.header[c].rfind("y_", 0) == 0) {
      y_cols.push_back(c);
      labels.push_back(t.header[c].substr(2));
    } else {
      if (!y_cols.empty())
        throw Error(ErrorCode::malformed_file, "covariate column '" + t.header[c] + "' after outcome columns");
      cov_cols.push_back(c);
    }
  }
  if (y_cols.empty()) throw Error(ErrorCode::malformed_file, "no outcome columns (y_1..y_K)");

  std::vector<CovariateSpec> schema;
  for (std::size_t c : cov_cols) {
    std::vector<std::string> raw;
    raw.reserve(t.rows.size());
    for (const auto& row : t.rows) raw.push_back(row[c]);
    schema.push_back(resolve_schema(t.header[c], raw, opt.schema));
  }

  std::vector<ParticipantRecord> records;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line_no = t.line_numbers[r];
    ParticipantRecord rec;
    rec.subject_id = row[id_col];
    if (!seen.insert(rec.subject_id).second)
      throw Error(ErrorCode::malformed_file,
                  "line " + std::to_string(line_no) + ": duplicate subject '" + rec.subject_id + "'");
    rec.arm = parse_arm(row[arm_col], line_no);
    for (std::size_t j = 0; j < cov_cols.size(); ++j)
      rec.baseline.push_back(encode_value(schema[j], row[cov_cols[j]], line_no));
    for (std::size_t c : y_cols) rec.outcomes.push_back(parse_outcome(row[c], line_no));
    records.push_back(std::move(rec));
  }
  return finish(std::move(records), std::move(labels), std::move(schema), opt, info);
}

inline TrialDataset read_long(const Table& t, const CsvOptions& opt, CsvLoadInfo* info) {
  const std::size_t id_col = column_index(t, "subject_id");
  const std::size_t arm_col = column_index(t, "arm");
  const std::size_t visit_col = column_index(t, "visit");
  const std::size_t y_col = column_index(t, "outcome");
  std::vector<std::size_t> cov_cols;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (c != id_col && c != arm_col && c != visit_col && c != y_col) cov_cols.push_back(c);

  // Visit labels: numeric ascending when every label is numeric, otherwise
  // order of first appearance.
  std::vector<std::string> labels;
  {
    std::set<std::string> seen;
    for (const auto& row : t.rows)
      if (seen.insert(row[visit_col]).second) labels.push_back(row[visit_col]);
    const bool numeric = std::all_of(labels.begin(), labels.end(),
                                     [](const std::string& s) { return parse_number(s).has_value(); });
    if (numeric)
      std::stable_sort(labels.begin(), labels.end(),
                       [](const std::string& a, const std::string& b) { return *parse_number(a) < *parse_number(b); });
  }
  std::unordered_map<std::string, std::size_t> visit_index;
  for (std::size_t i = 0; i < labels.size(); ++i) visit_index[labels[i]] = i;

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> rows_of;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& id = t.rows[r][id_col];
    auto [it, inserted] = rows_of.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(r);
  }

  std::vector<CovariateSpec> schema;
  for (std::size_t c : cov_cols) {
    std::vector<std::string> raw;
    for (const auto& id : order) raw.push_back(t.rows[rows_of[id].front()][c]);
    schema.push_back(resolve_schema(t.header[c], raw, opt.schema));
  }

  std::vector<ParticipantRecord> records;
  records.reserve(order.size());
  for (const auto& id : order) {
    const auto& rows = rows_of[id];
    const auto& first = t.rows[rows.front()];
    const std::size_t first_line = t.line_numbers[rows.front()];
    ParticipantRecord rec;
    rec.subject_id = id;
    rec.arm = parse_arm(first[arm_col], first_line);
    for (std::size_t j = 0; j < cov_cols.size(); ++j)
      rec.baseline.push_back(encode_value(schema[j], first[cov_cols[j]], first_line));
    rec.outcomes.assign(labels.size(), std::nullopt);
    std::vector<bool> filled(labels.size(), false);
    for (std::size_t r : rows) {
      const auto& row = t.rows[r];
      const std::size_t line_no = t.line_numbers[r];
      if (parse_arm(row[arm_col], line_no) != rec.arm)
        throw Error(ErrorCode::mixed_arm_subject, "subject '" + id + "' appears with two arm values (line " +
                                                      std::to_string(line_no) + ")");
      for (std::size_t c : cov_cols)
        if (row[c] != first[c])
          throw Error(ErrorCode::malformed_file, "line " + std::to_string(line_no) + ": covariate '" +
                                                     t.header[c] + "' changes within subject '" + id + "'");
      const std::size_t v = visit_index.at(row[visit_col]);
      if (filled[v])
        throw Error(ErrorCode::malformed_file, "line " + std::to_string(line_no) + ": duplicate visit '" +
                                                   row[visit_col] + "' for subject '" + id + "'");
      filled[v] = true;
      rec.outcomes[v] = parse_outcome(row[y_col], line_no);
    }
    records.push_back(std::move(rec));
  }
  return finish(std::move(records), std::move(labels), std::move(schema), opt, info);
}

inline std::string covariate_text(const CovariateSpec& spec, double v) {
  if (spec.kind == CovariateKind::categorical) return quote_if_needed(spec.levels.at(static_cast<std::size_t>(v)));
  return format_number(v);
}

}  // namespace csv_detail

inline TrialDataset read_csv(std::istream& in, const CsvOptions& opt, CsvLoadInfo* info = nullptr) {
  const auto table = csv_detail::read_table(in);
  return opt.layout == CsvLayout::wide_format ? csv_detail::read_wide(table, opt, info)
                                              : csv_detail::read_long(table, opt, info);
}

inline TrialDataset load_csv(const std::string& path, const CsvOptions& opt, CsvLoadInfo* info = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::malformed_file, "cannot open '" + path + "'");
  return read_csv(in, opt, info);
}

/// Writes `ds` with 17 significant digits so that reading it back yields
/// bit-identical values.
inline void write_csv(std::ostream& out, const TrialDataset& ds, CsvLayout layout) {
  using csv_detail::covariate_text;
  using csv_detail::format_number;
  using csv_detail::quote_if_needed;
  const auto& schema = ds.covariates();
  if (layout == CsvLayout::wide_format) {
    out << "subject_id,arm";
    for (const auto& c : schema) out << ',' << quote_if_needed(c.name);
    for (const auto& l : ds.visit_labels()) out << ",y_" << quote_if_needed(l);
    out << '\n';
    for (const auto& r : ds.records()) {
      out << quote_if_needed(r.subject_id) << ',' << r.arm;
      for (std::size_t j = 0; j < schema.size(); ++j) out << ',' << covariate_text(schema[j], r.baseline[j]);
      for (const auto& y : r.outcomes) {
        out << ',';
        if (y) out << format_number(*y);
      }
      out << '\n';
    }
  } else {
    out << "subject_id,arm,visit,outcome";
    for (const auto& c : schema) out << ',' << quote_if_needed(c.name);
    out << '\n';
    for (const auto& r : ds.records()) {
      for (std::size_t t = 0; t < ds.visits(); ++t) {
        out << quote_if_needed(r.subject_id) << ',' << r.arm << ',' << quote_if_needed(ds.visit_labels()[t]) << ',';
        if (r.outcomes[t]) out << format_number(*r.outcomes[t]);
        for (std::size_t j = 0; j < schema.size(); ++j) out << ',' << covariate_text(schema[j], r.baseline[j]);
        out << '\n';
      }
    }
  }
}

inline void save_csv(const std::string& path, const TrialDataset& ds, CsvLayout layout) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::malformed_file, "cannot write '" + path + "'");
  write_csv(out, ds, layout);
}

}  // namespace trialeff
