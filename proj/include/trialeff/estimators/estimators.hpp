#pragma once

#include <string>
#include <vector>

#include "trialeff/estimators/effect_estimate.hpp"
#include "trialeff/estimators/glmm.hpp"
#include "trialeff/estimators/mmrm.hpp"
#include "trialeff/estimators/tmle.hpp"
#include "trialeff/estimators/unadjusted.hpp"

namespace trialeff {

/// An estimator together with its options.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::unadjusted;
  MmrmOptions mmrm;
  GlmmOptions glmm;
  TmleOptions tmle;

  std::string name() const { return to_string(kind); }
};

inline EffectEstimate estimate(const TrialDataset& ds, const EstimatorSpec& spec) {
  require_outcome(spec.kind, ds);
  switch (spec.kind) {
    case EstimatorKind::unadjusted: return unadjusted(ds);
    case EstimatorKind::mmrm: return mmrm(ds, spec.mmrm);
    case EstimatorKind::mmrm_star: return mmrm_star(ds, spec.mmrm);
    case EstimatorKind::glmm: return glmm_standardized(ds, spec.glmm);
    case EstimatorKind::tmle: return tmle(ds, spec.tmle);
  }
  return unadjusted(ds);
}

/// Copy of `spec` whose covariance optimization starts at the estimate's
/// fitted parameters. Resampled fits land near the original optimum, so this
/// saves most of the iterations without changing the optimum itself.
inline EstimatorSpec warm_started(EstimatorSpec spec, const EffectEstimate& point) {
  if ((spec.kind == EstimatorKind::mmrm || spec.kind == EstimatorKind::mmrm_star) && point.covariance &&
      point.covariance->structure == spec.mmrm.structure)
    spec.mmrm.init_theta = point.covariance->theta;
  return spec;
}

/// Estimators applicable to an outcome kind, in reporting order.
inline std::vector<EstimatorKind> all_estimators(OutcomeKind kind) {
  std::vector<EstimatorKind> out;
  for (auto k : {EstimatorKind::unadjusted, EstimatorKind::mmrm, EstimatorKind::mmrm_star, EstimatorKind::glmm,
                 EstimatorKind::tmle})
    if (supports(k, kind)) out.push_back(k);
  return out;
}

}  // namespace trialeff
