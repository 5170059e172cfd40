#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "trialeff/csv_io.hpp"
#include "trialeff/estimators/estimators.hpp"
#include "trialeff/inference/bootstrap.hpp"

namespace trialeff {

inline constexpr const char* kAnalysisSchema = "trialeff-analysis";
inline constexpr int kAnalysisSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct AnalysisSettings {
  std::string study;
  std::vector<EstimatorKind> estimators;  // empty: every applicable estimator
  EstimatorSpec defaults;
  std::size_t boot = 10000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  double level = 0.95;
};

struct EstimatorOutcome {
  EstimatorKind kind = EstimatorKind::unadjusted;
  std::optional<EffectEstimate> point;
  std::optional<BootstrapResult> boot;
  std::optional<ErrorCode> error;
  std::string message;
  double variance_ratio = NAN;  // V_unadj / V_adj
  double seconds = 0.0;         // wall time, reported only on request

  bool ok() const { return !error.has_value(); }
};

struct AnalysisReport {
  AnalysisSettings settings;
  std::size_t n = 0;
  std::size_t visits = 0;
  OutcomeKind outcome = OutcomeKind::continuous;
  std::vector<CovariateSpec> covariates;
  DropoutSummary dropout;
  std::vector<EstimatorOutcome> results;
  std::vector<std::pair<EstimatorKind, std::string>> excluded;

  bool has_errors() const {
    for (const auto& r : results)
      if (!r.ok()) return true;
    return false;
  }
};

inline AnalysisReport run_analysis(const TrialDataset& ds, const AnalysisSettings& settings) {
  AnalysisReport rep;
  rep.settings = settings;
  rep.n = ds.size();
  rep.visits = ds.visits();
  rep.outcome = ds.outcome_kind();
  rep.covariates = ds.covariates();
  rep.dropout = dropout_summary(ds);

  std::vector<EstimatorKind> kinds = settings.estimators;
  if (kinds.empty()) {
    for (auto k : {EstimatorKind::unadjusted, EstimatorKind::mmrm, EstimatorKind::mmrm_star, EstimatorKind::glmm,
                   EstimatorKind::tmle}) {
      if (supports(k, ds.outcome_kind()))
        kinds.push_back(k);
      else
        rep.excluded.emplace_back(k, std::string("not defined for ") + to_string(ds.outcome_kind()) + " outcomes");
    }
  }

  for (auto k : kinds) {
    EstimatorOutcome out;
    out.kind = k;
    EstimatorSpec spec = settings.defaults;
    spec.kind = k;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (settings.boot > 0) {
        BootstrapOptions bo;
        bo.replicates = settings.boot;
        bo.seed = settings.seed;
        bo.workers = settings.workers;
        bo.level = settings.level;
        out.boot = bootstrap(ds, spec, bo);
        out.point = out.boot->point;
      } else {
        out.point = estimate(ds, spec);
      }
    } catch (const Error& e) {
      out.error = e.code();
      out.message = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rep.results.push_back(std::move(out));
  }

  const EstimatorOutcome* ref = nullptr;
  for (const auto& r : rep.results)
    if (r.kind == EstimatorKind::unadjusted && r.boot) ref = &r;
  for (auto& r : rep.results) {
    if (!r.boot || !ref) continue;
    r.variance_ratio = &r == ref ? 1.0 : ref->boot->variance / r.boot->variance;
  }
  return rep;
}

namespace report_detail {

inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace report_detail

/// Canonical machine output. Timings are left out by default so that
/// repeated runs at a fixed seed are byte-identical.
inline nlohmann::json to_json(const AnalysisReport& rep, bool timings = false) {
  using nlohmann::json;
  using report_detail::number;
  json j;
  j["schema"] = kAnalysisSchema;
  j["schema_version"] = kAnalysisSchemaVersion;
  j["study"] = rep.settings.study;

  json cov = json::array();
  for (const auto& c : rep.covariates) cov.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  json missing = {{"control", json::array()}, {"treated", json::array()}, {"overall", json::array()}};
  for (std::size_t t = 0; t < rep.visits; ++t) {
    missing["control"].push_back(number(rep.dropout.missing[0][t]));
    missing["treated"].push_back(number(rep.dropout.missing[1][t]));
    missing["overall"].push_back(number(rep.dropout.overall[t]));
  }
  j["dataset"] = {{"n", rep.n},
                  {"visits", rep.visits},
                  {"visit_labels", rep.dropout.visit_labels},
                  {"outcome", to_string(rep.outcome)},
                  {"covariates", cov},
                  {"arm_sizes", {rep.dropout.arm_size[0], rep.dropout.arm_size[1]}},
                  {"missing_fraction", missing}};

  json ladder = json::array();
  for (auto s : rep.settings.defaults.glmm.ladder) ladder.push_back(to_string(s));
  j["settings"] = {{"boot", rep.settings.boot},
                   {"seed", rep.settings.seed},
                   {"level", rep.settings.level},
                   {"mmrm_structure", to_string(rep.settings.defaults.mmrm.structure)},
                   {"mmrm_star_visit1_baseline", !rep.settings.defaults.mmrm.star_without_visit1_baseline},
                   {"glmm_ladder", ladder},
                   {"tmle_truncation", rep.settings.defaults.tmle.truncation}};

  json ests = json::array();
  json failures = json::array();
  for (const auto& r : rep.results) {
    json e;
    e["estimator"] = to_string(r.kind);
    if (!r.ok()) {
      e["status"] = "failed";
      failures.push_back({{"estimator", to_string(r.kind)}, {"error", to_string(*r.error)}, {"message", r.message}});
      ests.push_back(e);
      continue;
    }
    const EffectEstimate& p = *r.point;
    e["status"] = "ok";
    e["delta"] = number(p.delta);
    e["arm_means"] = {{"control", number(p.arm_means[0])}, {"treated", number(p.arm_means[1])}};
    e["n_used"] = p.n_used;
    e["covariance_structure"] = p.covariance ? json(to_string(p.covariance->structure)) : json(nullptr);
    e["converged"] = p.diagnostics.converged;
    e["iterations"] = p.diagnostics.iterations;
    e["notes"] = p.notes;
    if (r.boot) {
      const BootstrapResult& b = *r.boot;
      e["bootstrap"] = {{"replicates", b.requested},
                        {"retained", b.replicates.size()},
                        {"failed", b.failed},
                        {"not_converged", b.not_converged},
                        {"variance", number(b.variance)},
                        {"jackknife_failed", b.jackknife.failed},
                        {"interval",
                         {{"lower", number(b.interval.lower)},
                          {"upper", number(b.interval.upper)},
                          {"level", b.interval.level},
                          {"z0", number(b.interval.z0)},
                          {"acceleration", number(b.interval.acceleration)},
                          {"fallback", to_string(b.interval.fallback)}}}};
    } else {
      e["bootstrap"] = nullptr;
    }
    e["variance_ratio"] = number(r.variance_ratio);
    ests.push_back(e);
  }
  j["estimators"] = ests;
  json excl = json::array();
  for (const auto& [k, why] : rep.excluded) excl.push_back({{"estimator", to_string(k)}, {"reason", why}});
  j["excluded"] = excl;
  j["failures"] = failures;
  j["metadata"] = {{"tool", "trialeff"}, {"version", kToolVersion}, {"seed", rep.settings.seed}};
  if (timings) {
    json t = json::object();
    for (const auto& r : rep.results) t[to_string(r.kind)] = r.seconds;
    j["metadata"]["timings_seconds"] = t;
  }
  return j;
}

/// CSV number: 10 significant digits, trailing zeros kept; empty when not finite.
inline std::string format_g(double v, int digits = 10) {
  if (!std::isfinite(v)) return "";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%#.*g", digits, v);
  return buf;
}

inline void write_analysis_csv(std::ostream& out, const AnalysisReport& rep) {
  out << "study,estimator,status,delta,control_mean,treated_mean,variance,ci_lower,ci_upper,variance_ratio,"
         "covariance_structure,message\n";
  for (const auto& r : rep.results) {
    out << csv_detail::quote_if_needed(rep.settings.study) << ',' << to_string(r.kind) << ',' << (r.ok() ? "ok" : "failed");
    if (r.ok()) {
      const auto& p = *r.point;
      out << ',' << format_g(p.delta) << ',' << format_g(p.arm_means[0]) << ',' << format_g(p.arm_means[1]);
      if (r.boot)
        out << ',' << format_g(r.boot->variance) << ',' << format_g(r.boot->interval.lower) << ','
            << format_g(r.boot->interval.upper);
      else
        out << ",,,";
      out << ',' << format_g(r.variance_ratio) << ',' << (p.covariance ? to_string(p.covariance->structure) : "")
          << ",\n";
    } else {
      out << ",,,,,,,,," << csv_detail::quote_if_needed(r.message) << '\n';
    }
  }
}

}  // namespace trialeff
