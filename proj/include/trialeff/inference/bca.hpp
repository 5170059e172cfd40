#pragma once

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "trialeff/errors.hpp"

namespace trialeff {

enum class IntervalFallback { none, percentile, degenerate };

inline const char* to_string(IntervalFallback f) {
  switch (f) {
    case IntervalFallback::none: return "none";
    case IntervalFallback::percentile: return "percentile";
    case IntervalFallback::degenerate: return "degenerate";
  }
  return "none";
}

struct BcaInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  double z0 = 0.0;
  double acceleration = 0.0;
  IntervalFallback fallback = IntervalFallback::none;

  bool covers(double value) const { return lower <= value && value <= upper; }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) return p <= 0.0 ? -INFINITY : INFINITY;
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Linear-interpolation quantile of sorted data (R type 7).
inline double sorted_quantile(std::span<const double> sorted, double p) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = (static_cast<double>(n) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Bias-correction: probit of the share of replicates below the point
/// estimate, counting exact ties as one half.
inline double bca_z0(std::span<const double> replicates, double point) {
  double below = 0.0;
  for (double r : replicates) below += r < point ? 1.0 : (r == point ? 0.5 : 0.0);
  return normal_quantile(below / static_cast<double>(replicates.size()));
}

/// Acceleration from leave-one-out values; NaN when the spread is zero.
inline double bca_acceleration(std::span<const double> jackknife) {
  if (jackknife.empty()) return NAN;
  double mean = 0.0;
  for (double v : jackknife) mean += v;
  mean /= static_cast<double>(jackknife.size());
  double s2 = 0.0, s3 = 0.0;
  for (double v : jackknife) {
    const double d = mean - v;
    s2 += d * d;
    s3 += d * d * d;
  }
  if (!(s2 > 0.0)) return NAN;
  return s3 / (6.0 * std::pow(s2, 1.5));
}

/// BCa interval from bootstrap replicates, the point estimate and
/// leave-one-out values. Falls back to the percentile interval when the bias
/// correction is infinite or the jackknife has no spread, and to the point
/// itself when every replicate is identical.
inline BcaInterval bca_interval(std::span<const double> replicates, double point, std::span<const double> jackknife,
                                double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::invalid_params, "interval level must lie in (0, 1)");
  if (replicates.empty()) throw Error(ErrorCode::degenerate_replicates, "no bootstrap replicates");
  BcaInterval out;
  out.level = level;
  std::vector<double> sorted(replicates.begin(), replicates.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    out.lower = out.upper = sorted.front();
    out.z0 = NAN;
    out.acceleration = 0.0;
    out.fallback = IntervalFallback::degenerate;
    return out;
  }
  const double alpha = 0.5 * (1.0 - level);
  const double z_lo = normal_quantile(alpha);
  const double z_hi = normal_quantile(1.0 - alpha);
  out.z0 = bca_z0(replicates, point);
  out.acceleration = bca_acceleration(jackknife);

  auto percentile = [&] {
    out.fallback = IntervalFallback::percentile;
    out.lower = sorted_quantile(sorted, alpha);
    out.upper = sorted_quantile(sorted, 1.0 - alpha);
    return out;
  };
  if (!std::isfinite(out.z0) || !std::isfinite(out.acceleration)) {
    if (!std::isfinite(out.acceleration)) out.acceleration = 0.0;
    return percentile();
  }
  auto adjusted = [&](double z) {
    const double num = out.z0 + z;
    const double den = 1.0 - out.acceleration * num;
    return den > 0.0 ? normal_cdf(out.z0 + num / den) : NAN;
  };
  const double p_lo = adjusted(z_lo);
  const double p_hi = adjusted(z_hi);
  if (!std::isfinite(p_lo) || !std::isfinite(p_hi) || p_lo > p_hi) return percentile();
  out.lower = sorted_quantile(sorted, p_lo);
  out.upper = sorted_quantile(sorted, p_hi);
  return out;
}

}  // namespace trialeff
