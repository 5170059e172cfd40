#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "trialeff/estimators/effect_estimate.hpp"

namespace trialeff {

/// Relative MSE: MSE of the unadjusted estimator over that of another one.
inline double relative_mse(double mse_unadjusted, double mse_estimator) { return mse_unadjusted / mse_estimator; }

/// Operating characteristics of one estimator over Monte Carlo replicates.
/// VAR uses the replicate count as denominator so that MSE = VAR + bias^2
/// holds exactly; every *_se field is a Monte Carlo standard error.
struct EstimatorMetrics {
  EstimatorKind kind = EstimatorKind::unadjusted;
  std::size_t retained = 0;
  std::size_t failed = 0;
  std::size_t not_converged = 0;  // retained but flagged
  double mean = NAN;
  double bias = NAN;
  double variance = NAN;
  double mse = NAN;
  double relative_mse = NAN;
  double coverage = NAN;
  std::size_t intervals = 0;  // replicates with a bootstrap interval
  double bias_se = NAN;
  double variance_se = NAN;
  double mse_se = NAN;
  double relative_mse_se = NAN;
  double coverage_se = NAN;
};

/// Per-replicate outcome of one estimator.
struct ReplicateValue {
  std::optional<double> delta;
  bool converged = true;
  std::optional<bool> covered;
};

inline EstimatorMetrics summarize(EstimatorKind kind, std::span<const ReplicateValue> reps, double truth) {
  EstimatorMetrics m;
  m.kind = kind;
  std::vector<double> d;
  std::size_t covered = 0;
  for (const auto& r : reps) {
    if (!r.delta) {
      ++m.failed;
      continue;
    }
    d.push_back(*r.delta);
    if (!r.converged) ++m.not_converged;
    if (r.covered) {
      ++m.intervals;
      covered += *r.covered ? 1 : 0;
    }
  }
  m.retained = d.size();
  if (!d.empty()) {
    const double n = static_cast<double>(d.size());
    double sum = 0.0;
    for (double x : d) sum += x;
    m.mean = sum / n;
    m.bias = m.mean - truth;
    double m2 = 0.0, m4 = 0.0, se2 = 0.0, se4 = 0.0;
    for (double x : d) {
      const double c = x - m.mean;
      m2 += c * c;
      m4 += c * c * c * c;
      const double e2 = (x - truth) * (x - truth);
      se2 += e2;
      se4 += e2 * e2;
    }
    m.variance = m2 / n;
    m.mse = se2 / n;
    m.bias_se = n > 1 ? std::sqrt(m2 / (n - 1.0) / n) : NAN;
    m.variance_se = std::sqrt(std::max(0.0, m4 / n - m.variance * m.variance) / n);
    m.mse_se = std::sqrt(std::max(0.0, se4 / n - m.mse * m.mse) / n);
  }
  if (m.intervals > 0) {
    const double k = static_cast<double>(m.intervals);
    m.coverage = static_cast<double>(covered) / k;
    m.coverage_se = std::sqrt(m.coverage * (1.0 - m.coverage) / k);
  }
  return m;
}

/// Fills relative MSE against the reference (unadjusted) replicates. The
/// standard error uses replicates where both estimators produced a value.
inline void attach_relative_mse(EstimatorMetrics& m, const EstimatorMetrics& ref,
                                std::span<const ReplicateValue> est, std::span<const ReplicateValue> unadj,
                                double truth) {
  m.relative_mse = relative_mse(ref.mse, m.mse);
  double su = 0, se = 0, suu = 0, see = 0, sue = 0, n = 0;
  for (std::size_t r = 0; r < est.size() && r < unadj.size(); ++r) {
    if (!est[r].delta || !unadj[r].delta) continue;
    const double u = (*unadj[r].delta - truth) * (*unadj[r].delta - truth);
    const double e = (*est[r].delta - truth) * (*est[r].delta - truth);
    su += u;
    se += e;
    suu += u * u;
    see += e * e;
    sue += u * e;
    n += 1.0;
  }
  if (n < 2 || se <= 0 || su <= 0) return;
  const double mu = su / n, me = se / n;
  const double vu = suu / n - mu * mu, ve = see / n - me * me, cue = sue / n - mu * me;
  const double rel2 = vu / (mu * mu) + ve / (me * me) - 2.0 * cue / (mu * me);
  m.relative_mse_se = (mu / me) * std::sqrt(std::max(0.0, rel2) / n);
}

}  // namespace trialeff
