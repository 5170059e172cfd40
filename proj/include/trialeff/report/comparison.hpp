#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "trialeff/errors.hpp"
#include "trialeff/report/analysis_report.hpp"

namespace trialeff {

/// One (study, estimator) row of the variance-ratio comparison.
struct ComparisonRow {
  std::string study;
  std::string outcome;
  std::string estimator;
  std::string status;
  double variance = NAN;
  double variance_ratio = NAN;
  bool adjusted_dominant = false;  // study-level flag, repeated on each row
};

/// Reads an analysis report and checks its schema tag and version.
inline nlohmann::json load_analysis_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::malformed_file, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_file, path + ": " + e.what());
  }
  if (!j.is_object() || j.value("schema", std::string()) != kAnalysisSchema || !j.contains("schema_version") ||
      !j["schema_version"].is_number_integer() || !j.contains("estimators") || !j["estimators"].is_array() ||
      !j.contains("study") || !j["study"].is_string())
    throw Error(ErrorCode::schema_mismatch, path + ": not a " + std::string(kAnalysisSchema) + " report");
  if (j["schema_version"].get<int>() != kAnalysisSchemaVersion)
    throw Error(ErrorCode::schema_mismatch, path + ": schema version " + std::to_string(j["schema_version"].get<int>()) +
                                                ", expected " + std::to_string(kAnalysisSchemaVersion));
  return j;
}

/// Rows sorted by study ID (input order breaks ties). A study is "adjusted
/// dominant" when it has at least one adjusted estimator and every adjusted
/// variance ratio exceeds 1.
inline std::vector<ComparisonRow> compare_reports(const std::vector<nlohmann::json>& reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& j : reports) {
    const std::size_t first = rows.size();
    bool any_adjusted = false, dominant = true;
    const std::string outcome = j.contains("dataset") ? j["dataset"].value("outcome", std::string()) : std::string();
    for (const auto& e : j["estimators"]) {
      ComparisonRow r;
      r.study = j["study"].get<std::string>();
      r.outcome = outcome;
      r.estimator = e.value("estimator", std::string());
      r.status = e.value("status", std::string());
      if (e.contains("variance_ratio") && e["variance_ratio"].is_number()) r.variance_ratio = e["variance_ratio"].get<double>();
      if (e.contains("bootstrap") && e["bootstrap"].is_object() && e["bootstrap"]["variance"].is_number())
        r.variance = e["bootstrap"]["variance"].get<double>();
      if (r.estimator != "unadjusted") {
        any_adjusted = true;
        if (!(r.variance_ratio > 1.0)) dominant = false;
      }
      rows.push_back(std::move(r));
    }
    for (std::size_t i = first; i < rows.size(); ++i) rows[i].adjusted_dominant = any_adjusted && dominant;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.study < b.study; });
  return rows;
}

inline void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "study,outcome,estimator,status,variance,variance_ratio,adjusted_dominant\n";
  for (const auto& r : rows)
    out << csv_detail::quote_if_needed(r.study) << ',' << r.outcome << ',' << r.estimator << ',' << r.status << ','
        << format_g(r.variance) << ',' << format_g(r.variance_ratio) << ',' << (r.adjusted_dominant ? "yes" : "no")
        << '\n';
}

}  // namespace trialeff
