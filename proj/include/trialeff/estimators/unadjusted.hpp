#pragma once

#include "trialeff/data_model.hpp"
#include "trialeff/estimators/effect_estimate.hpp"

namespace trialeff {

/// Difference of arm-specific completer means at the final visit.
inline EffectEstimate unadjusted(const TrialDataset& ds) {
  require_final_visit_in_both_arms(ds);
  const std::size_t last = ds.visits() - 1;
  double sum[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (const auto& r : ds.records()) {
    if (!r.observed(last)) continue;
    sum[r.arm] += *r.outcomes[last];
    ++n[r.arm];
  }
  auto e = make_estimate(EstimatorKind::unadjusted, sum[0] / static_cast<double>(n[0]),
                         sum[1] / static_cast<double>(n[1]));
  e.n_used = n[0] + n[1];
  return e;
}

}  // namespace trialeff
