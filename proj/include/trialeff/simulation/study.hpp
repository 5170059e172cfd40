#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trialeff/estimators/estimators.hpp"
#include "trialeff/inference/bootstrap.hpp"
#include "trialeff/simulation/metrics.hpp"
#include "trialeff/simulation/scenario.hpp"
#include "trialeff/simulation/source.hpp"
#include "trialeff/util/parallel.hpp"

namespace trialeff {

/// One cell of a simulation study: outcome kind x effect x dropout.
struct ScenarioSpec {
  OutcomeKind outcome = OutcomeKind::continuous;
  EffectProfile effect;
  DropoutMechanism dropout;
  std::size_t n = 380;
  std::vector<EstimatorSpec> estimators;  // entries not defined for the outcome are skipped
};

struct RunOptions {
  std::size_t replicates = 1000;
  std::size_t boot = 0;  // 0 disables coverage
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  bool keep_replicates = false;
};

struct ScenarioMetrics {
  OutcomeKind outcome = OutcomeKind::continuous;
  std::string effect;
  std::string dropout;
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::size_t boot = 0;
  double true_delta = 0.0;
  CalibratedDropout calibration;
  // Mean per-visit missing fraction by arm over replicates, {control, treated}.
  std::array<std::vector<double>, 2> missing;
  std::vector<double> missing_overall;
  std::vector<EstimatorMetrics> estimators;
  std::vector<std::vector<ReplicateValue>> values;  // [estimator][replicate], when kept
};

inline constexpr std::uint64_t kCoverageStream = 0xC0FE4A6EULL;

inline ScenarioMetrics run_scenario(const SourcePopulation& src, const ScenarioSpec& spec, const RunOptions& opt) {
  if (opt.replicates < 2) throw Error(ErrorCode::invalid_params, "run_scenario needs at least 2 replicates");
  const TrialDataset& pool = src.pool(spec.outcome);
  const std::size_t k = pool.visits();
  spec.effect.validate(k);

  std::vector<EstimatorSpec> ests;
  for (const auto& e : spec.estimators)
    if (supports(e.kind, spec.outcome)) ests.push_back(e);
  if (ests.empty()) throw Error(ErrorCode::invalid_params, "no estimator applies to this outcome kind");

  ScenarioMetrics out;
  out.outcome = spec.outcome;
  out.effect = spec.effect.name;
  out.dropout = spec.dropout.name;
  out.n = spec.n;
  out.replicates = opt.replicates;
  out.boot = opt.boot;
  out.true_delta = exact_true_delta(pool, spec.effect);
  out.calibration = calibrate_dropout(spec.dropout, pool, spec.effect);

  const std::size_t r_count = opt.replicates;
  std::vector<std::vector<ReplicateValue>> values(ests.size(), std::vector<ReplicateValue>(r_count));
  std::vector<std::array<std::vector<double>, 2>> missing(r_count);
  std::vector<std::size_t> arm_n(2 * r_count, 0);

  parallel_for(r_count, opt.workers, [&](std::size_t r) {
    const TrialDataset trial = generate_trial(pool, spec.n, spec.effect, out.calibration, opt.seed, r);
    const DropoutSummary ds = dropout_summary(trial);
    missing[r] = {ds.missing[0], ds.missing[1]};
    arm_n[2 * r] = ds.arm_size[0];
    arm_n[2 * r + 1] = ds.arm_size[1];
    BootstrapOptions bo;
    bo.replicates = opt.boot;
    bo.seed = stream_seed(opt.seed, kCoverageStream, r);
    bo.workers = 1;
    for (std::size_t e = 0; e < ests.size(); ++e) {
      ReplicateValue& v = values[e][r];
      try {
        if (opt.boot > 0) {
          try {
            const BootstrapResult b = bootstrap(trial, ests[e], bo);
            v.delta = b.point.delta;
            v.converged = b.point.diagnostics.converged;
            v.covered = b.interval.covers(out.true_delta);
          } catch (const Error& err) {
            if (err.code() != ErrorCode::too_many_failures) throw;
            const EffectEstimate p = estimate(trial, ests[e]);
            v.delta = p.delta;
            v.converged = p.diagnostics.converged;
          }
        } else {
          const EffectEstimate p = estimate(trial, ests[e]);
          v.delta = p.delta;
          v.converged = p.diagnostics.converged;
        }
      } catch (const Error&) {
        v.delta.reset();
      }
    }
  });

  // Deterministic fold in replicate order.
  for (int a = 0; a < 2; ++a) out.missing[a].assign(k, 0.0);
  out.missing_overall.assign(k, 0.0);
  for (std::size_t r = 0; r < r_count; ++r) {
    const double n0 = static_cast<double>(arm_n[2 * r]), n1 = static_cast<double>(arm_n[2 * r + 1]);
    for (std::size_t t = 0; t < k; ++t) {
      for (int a = 0; a < 2; ++a) out.missing[a][t] += missing[r][a][t];
      out.missing_overall[t] += (missing[r][0][t] * n0 + missing[r][1][t] * n1) / (n0 + n1);
    }
  }
  for (std::size_t t = 0; t < k; ++t) {
    for (int a = 0; a < 2; ++a) out.missing[a][t] /= static_cast<double>(r_count);
    out.missing_overall[t] /= static_cast<double>(r_count);
  }

  std::optional<std::size_t> ref;
  for (std::size_t e = 0; e < ests.size(); ++e) {
    out.estimators.push_back(summarize(ests[e].kind, values[e], out.true_delta));
    if (ests[e].kind == EstimatorKind::unadjusted) ref = e;
  }
  if (ref)
    for (std::size_t e = 0; e < ests.size(); ++e)
      attach_relative_mse(out.estimators[e], out.estimators[*ref], values[e], values[*ref], out.true_delta);
  if (ref) out.estimators[*ref].relative_mse = 1.0;
  if (opt.keep_replicates) out.values = std::move(values);
  return out;
}

}  // namespace trialeff
