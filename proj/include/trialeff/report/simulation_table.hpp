#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "trialeff/report/analysis_report.hpp"
#include "trialeff/simulation/study.hpp"

namespace trialeff {

namespace table_detail {

inline std::string fixed4(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

}  // namespace table_detail

/// One block per scenario cell, laid out like the simulation result tables:
/// Bias, VAR, MSE, relative MSE (RMSE) and coverage (CP), 4 decimals.
inline void print_scenario_block(std::ostream& out, const ScenarioMetrics& m) {
  using table_detail::fixed4;
  using table_detail::pad;
  const std::size_t k = m.missing_overall.size();
  out << "== " << to_string(m.outcome) << " | effect " << m.effect << " | dropout " << m.dropout << " | n " << m.n
      << " | replicates " << m.replicates << " ==\n";
  out << "true delta " << fixed4(m.true_delta) << "; missing at final visit: control "
      << fixed4(k ? m.missing[0][k - 1] : NAN) << ", treated " << fixed4(k ? m.missing[1][k - 1] : NAN) << ", overall "
      << fixed4(k ? m.missing_overall[k - 1] : NAN) << '\n';
  out << std::string(12, ' ') << pad("Bias", 9) << pad("VAR", 9) << pad("MSE", 9) << pad("RMSE", 9) << pad("CP", 9)
      << pad("failed", 8) << '\n';
  for (const auto& e : m.estimators) {
    std::string name = to_string(e.kind);
    name.resize(12, ' ');
    out << name << pad(fixed4(e.bias), 9) << pad(fixed4(e.variance), 9) << pad(fixed4(e.mse), 9)
        << pad(fixed4(e.relative_mse), 9) << pad(e.intervals ? fixed4(e.coverage) : "-", 9)
        << pad(std::to_string(e.failed), 8) << '\n';
  }
  out << '\n';
}

/// Header printed once per simulate run. Coverage uses fewer bootstrap
/// replicates than the analysis default; the header says so.
inline void print_study_header(std::ostream& out, const std::string& name, const std::string& provenance,
                               std::size_t replicates, std::size_t boot, std::size_t analysis_boot) {
  out << "study " << name << "\nsource: " << provenance << "\nreplicates per scenario: " << replicates << '\n';
  if (boot == 0)
    out << "coverage: disabled (boot = 0)\n";
  else
    out << "coverage: BCa intervals from " << boot << " bootstrap replicates per trial (analyze default is "
        << analysis_boot << ")\n";
  out << "RMSE is MSE(unadjusted) / MSE(estimator)\n\n";
}

inline void write_simulation_csv_header(std::ostream& out) {
  out << "study,outcome,effect,dropout,n,replicates,boot,true_delta,missing_final_control,missing_final_treated,"
         "missing_final_overall,estimator,retained,failed,not_converged,mean,bias,bias_se,variance,variance_se,mse,"
         "mse_se,relative_mse,relative_mse_se,coverage,coverage_se,intervals\n";
}

inline void write_simulation_csv_rows(std::ostream& out, const std::string& study, const ScenarioMetrics& m) {
  const std::size_t k = m.missing_overall.size();
  for (const auto& e : m.estimators) {
    out << csv_detail::quote_if_needed(study) << ',' << to_string(m.outcome) << ',' << csv_detail::quote_if_needed(m.effect)
        << ',' << csv_detail::quote_if_needed(m.dropout) << ',' << m.n << ',' << m.replicates << ',' << m.boot << ','
        << format_g(m.true_delta) << ',' << format_g(m.missing[0][k - 1]) << ',' << format_g(m.missing[1][k - 1]) << ','
        << format_g(m.missing_overall[k - 1]) << ',' << to_string(e.kind) << ',' << e.retained << ',' << e.failed << ','
        << e.not_converged << ',' << format_g(e.mean) << ',' << format_g(e.bias) << ',' << format_g(e.bias_se) << ','
        << format_g(e.variance) << ',' << format_g(e.variance_se) << ',' << format_g(e.mse) << ',' << format_g(e.mse_se)
        << ',' << format_g(e.relative_mse) << ',' << format_g(e.relative_mse_se) << ','
        << (e.intervals ? format_g(e.coverage) : "") << ',' << (e.intervals ? format_g(e.coverage_se) : "") << ','
        << e.intervals << '\n';
  }
}

}  // namespace trialeff
