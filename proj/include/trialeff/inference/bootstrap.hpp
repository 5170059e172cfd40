#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trialeff/estimators/estimators.hpp"
#include "trialeff/inference/bca.hpp"
#include "trialeff/util/parallel.hpp"
#include "trialeff/util/rng.hpp"

namespace trialeff {

inline constexpr std::uint64_t kBootstrapStream = 0xB0075742ULL;

struct BootstrapOptions {
  std::size_t replicates = 10000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  double level = 0.95;
  double max_failure_fraction = 0.10;
  bool warm_start = true;  // start covariance fits at the point estimate's optimum
};

struct JackknifeResult {
  std::vector<double> values;  // retained leave-one-out deltas, in subject order
  std::size_t failed = 0;
};

struct BootstrapResult {
  EffectEstimate point;
  std::vector<double> replicates;  // retained, in replicate order
  std::size_t failed = 0;          // estimator raised an error
  std::size_t not_converged = 0;   // estimate returned without convergence
  double variance = 0.0;
  BcaInterval interval;
  JackknifeResult jackknife;
  std::uint64_t seed = 0;
  std::size_t requested = 0;

  std::size_t excluded() const { return failed + not_converged; }
};

/// Unbiased sample variance.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

/// Subject indices of bootstrap resample `b`.
inline std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed, std::size_t b) {
  Rng rng = make_rng(seed, kBootstrapStream, b);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(rng, n));
  return idx;
}

inline JackknifeResult jackknife(const TrialDataset& ds, const EstimatorSpec& spec, std::size_t workers = 1) {
  const std::size_t n = ds.size();
  if (n < 3) throw Error(ErrorCode::invalid_params, "jackknife needs at least 3 subjects");
  std::vector<std::optional<double>> slot(n);
  parallel_for(n, workers, [&](std::size_t i) {
    std::vector<std::size_t> keep;
    keep.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) keep.push_back(j);
    try {
      const EffectEstimate e = estimate(ds.subset(keep), spec);
      if (e.diagnostics.converged && std::isfinite(e.delta)) slot[i] = e.delta;
    } catch (const Error&) {
    }
  });
  JackknifeResult out;
  for (const auto& s : slot) {
    if (s)
      out.values.push_back(*s);
    else
      ++out.failed;
  }
  return out;
}

/// Subject-level nonparametric bootstrap with a BCa interval. Replicate b
/// draws from its own generator keyed on (seed, b), so the result does not
/// depend on the worker count.
inline BootstrapResult bootstrap(const TrialDataset& ds, const EstimatorSpec& spec, const BootstrapOptions& opt) {
  if (opt.replicates < 2) throw Error(ErrorCode::invalid_params, "bootstrap needs at least 2 replicates");
  BootstrapResult out;
  out.seed = opt.seed;
  out.requested = opt.replicates;
  out.point = estimate(ds, spec);
  const EstimatorSpec rspec = opt.warm_start ? warm_started(spec, out.point) : spec;

  enum class Status : unsigned char { ok, failed, not_converged };
  std::vector<double> value(opt.replicates, NAN);
  std::vector<Status> status(opt.replicates, Status::failed);
  parallel_for(opt.replicates, opt.workers, [&](std::size_t b) {
    try {
      const EffectEstimate e = estimate(ds.subset(resample_indices(ds.size(), opt.seed, b)), rspec);
      value[b] = e.delta;
      status[b] = (e.diagnostics.converged && std::isfinite(e.delta)) ? Status::ok : Status::not_converged;
    } catch (const Error&) {
      status[b] = Status::failed;
    }
  });
  for (std::size_t b = 0; b < opt.replicates; ++b) {
    switch (status[b]) {
      case Status::ok: out.replicates.push_back(value[b]); break;
      case Status::failed: ++out.failed; break;
      case Status::not_converged: ++out.not_converged; break;
    }
  }
  if (static_cast<double>(out.failed) > opt.max_failure_fraction * static_cast<double>(opt.replicates) ||
      out.replicates.size() < 2)
    throw Error(ErrorCode::too_many_failures, spec.name() + ": " + std::to_string(out.failed) + " failed and " +
                                                  std::to_string(out.not_converged) + " non-converged of " +
                                                  std::to_string(opt.replicates) + " bootstrap replicates");
  out.variance = sample_variance(out.replicates);

  const bool constant = std::all_of(out.replicates.begin(), out.replicates.end(),
                                    [&](double v) { return v == out.replicates.front(); });
  if (!constant) out.jackknife = jackknife(ds, rspec, opt.workers);
  out.interval = bca_interval(out.replicates, out.point.delta, out.jackknife.values, opt.level);
  return out;
}

}  // namespace trialeff
