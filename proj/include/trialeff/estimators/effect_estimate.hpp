#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/errors.hpp"
#include "trialeff/numerics/covariance.hpp"
#include "trialeff/numerics/diagnostics.hpp"

namespace trialeff {

enum class EstimatorKind { unadjusted, mmrm, mmrm_star, glmm, tmle };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::unadjusted: return "unadjusted";
    case EstimatorKind::mmrm: return "mmrm";
    case EstimatorKind::mmrm_star: return "mmrm_star";
    case EstimatorKind::glmm: return "glmm";
    case EstimatorKind::tmle: return "tmle";
  }
  return "unadjusted";
}

inline EstimatorKind parse_estimator(const std::string& s) {
  if (s == "unadjusted" || s == "unadj") return EstimatorKind::unadjusted;
  if (s == "mmrm") return EstimatorKind::mmrm;
  if (s == "mmrm_star" || s == "mmrm*") return EstimatorKind::mmrm_star;
  if (s == "glmm" || s == "glmm_standardized" || s == "gee") return EstimatorKind::glmm;
  if (s == "tmle") return EstimatorKind::tmle;
  throw Error(ErrorCode::invalid_params, "unknown estimator '" + s + "'");
}

/// Whether the estimator is defined for an outcome kind: the MMRM family
/// needs continuous outcomes, the standardized GLMM binary ones.
inline bool supports(EstimatorKind k, OutcomeKind o) {
  switch (k) {
    case EstimatorKind::mmrm:
    case EstimatorKind::mmrm_star: return o == OutcomeKind::continuous;
    case EstimatorKind::glmm: return o == OutcomeKind::binary;
    default: return true;
  }
}

/// Estimate of the final-visit treatment effect, treatment minus control.
struct EffectEstimate {
  double delta = 0.0;
  std::array<double, 2> arm_means{0.0, 0.0};  // {control, treatment}
  EstimatorKind kind = EstimatorKind::unadjusted;
  std::optional<CovarianceParams> covariance;  // MMRM / GLMM structure actually used
  FitDiagnostics diagnostics;
  std::size_t n_used = 0;
  std::vector<std::string> notes;
};

inline EffectEstimate make_estimate(EstimatorKind kind, double control_mean, double treated_mean) {
  EffectEstimate e;
  e.kind = kind;
  e.arm_means = {control_mean, treated_mean};
  e.delta = treated_mean - control_mean;
  e.diagnostics.converged = true;
  return e;
}

inline void require_outcome(EstimatorKind k, const TrialDataset& ds) {
  if (!supports(k, ds.outcome_kind()))
    throw Error(ErrorCode::incompatible_outcome, std::string(to_string(k)) + " is not defined for " +
                                                     to_string(ds.outcome_kind()) + " outcomes");
}

/// Both arms need at least one subject observed at the final visit.
inline void require_final_visit_in_both_arms(const TrialDataset& ds) {
  std::size_t count[2] = {0, 0};
  const std::size_t last = ds.visits() - 1;
  for (const auto& r : ds.records())
    if (r.observed(last)) ++count[r.arm];
  for (int a = 0; a < 2; ++a)
    if (count[a] == 0)
      throw Error(ErrorCode::empty_arm, std::string(a ? "treatment" : "control") +
                                            " arm has no subject observed at the final visit");
}

}  // namespace trialeff
