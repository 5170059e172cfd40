#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/errors.hpp"
#include "trialeff/numerics/logistic.hpp"
#include "trialeff/simulation/source.hpp"
#include "trialeff/util/rng.hpp"

namespace trialeff {

enum class EffectKind { zero, beneficial };

/// Treatment effect injected into treated subjects. Continuous outcomes are
/// lowered by `shifts[t]`; binary non-responders become responders with
/// probability `flip_probabilities[t]`, independently per visit.
struct EffectProfile {
  std::string name = "zero";
  EffectKind kind = EffectKind::zero;
  std::vector<double> shifts;
  std::vector<double> flip_probabilities;

  void validate(std::size_t k) const {
    if (kind == EffectKind::zero) return;
    if (shifts.size() != k || flip_probabilities.size() != k)
      throw Error(ErrorCode::invalid_params, "effect '" + name + "': shifts and flip_probabilities need " +
                                                 std::to_string(k) + " values");
    for (double s : shifts)
      if (!std::isfinite(s)) throw Error(ErrorCode::invalid_params, "effect '" + name + "': shifts must be finite");
    for (double p : flip_probabilities)
      if (!(p >= 0.0 && p <= 1.0))
        throw Error(ErrorCode::invalid_params, "effect '" + name + "': flip probabilities must lie in [0, 1]");
  }
};

enum class DropoutKind { none, mcar, mar };

inline const char* to_string(DropoutKind k) {
  switch (k) {
    case DropoutKind::none: return "none";
    case DropoutKind::mcar: return "mcar";
    case DropoutKind::mar: return "mar";
  }
  return "none";
}

/// Monotone dropout. Targets are cumulative missing fractions per visit.
/// MAR hazards are logit(h_t) = intercept_t(arm) + slope * (latest observed
/// outcome), with the latest outcome taken as 0 before the first visit.
struct DropoutMechanism {
  std::string name = "none";
  DropoutKind kind = DropoutKind::none;
  std::vector<double> missing;                   // mcar
  std::array<std::vector<double>, 2> arm_missing;  // mar: {control, treated}
  double slope_continuous = 0.5;
  double slope_binary = -0.5;
  std::array<std::optional<std::vector<double>>, 2> intercepts;  // mar overrides, skip calibration

  void validate(std::size_t k) const {
    auto check = [&](const std::vector<double>& m, const std::string& what) {
      if (m.size() != k)
        throw Error(ErrorCode::invalid_params, "dropout '" + name + "': " + what + " needs " + std::to_string(k) +
                                                   " values");
      double prev = 0.0;
      for (double v : m) {
        if (!(v >= 0.0 && v < 1.0))
          throw Error(ErrorCode::invalid_params, "dropout '" + name + "': " + what + " must lie in [0, 1)");
        if (v < prev)
          throw Error(ErrorCode::invalid_params, "dropout '" + name + "': " + what + " must be nondecreasing");
        prev = v;
      }
    };
    if (kind == DropoutKind::mcar) check(missing, "missing");
    if (kind == DropoutKind::mar) {
      check(arm_missing[0], "missing_control");
      check(arm_missing[1], "missing_treated");
      for (int a = 0; a < 2; ++a)
        if (intercepts[a] && intercepts[a]->size() != k)
          throw Error(ErrorCode::invalid_params, "dropout '" + name + "': intercept override needs " +
                                                     std::to_string(k) + " values");
    }
  }
};

/// Dropout hazards ready for generation.
struct CalibratedDropout {
  DropoutKind kind = DropoutKind::none;
  std::vector<double> hazard;                    // mcar, per visit
  std::array<std::vector<double>, 2> intercept;  // mar, per arm and visit
  double slope = 0.0;

  double probability(int arm, std::size_t t, double latest) const {
    switch (kind) {
      case DropoutKind::none: return 0.0;
      case DropoutKind::mcar: return hazard[t];
      case DropoutKind::mar: return expit(intercept[arm][t] + slope * latest);
    }
    return 0.0;
  }
};

namespace scenario_detail {

/// One possible trajectory of a pool subject under an arm, with its
/// probability (pool draw times effect randomness).
struct Atom {
  double weight;
  std::vector<double> y;
};

inline std::vector<Atom> arm_atoms(const TrialDataset& pool, const EffectProfile& effect, int arm) {
  const std::size_t k = pool.visits();
  const double base = 1.0 / static_cast<double>(pool.size());
  const bool binary = pool.outcome_kind() == OutcomeKind::binary;
  std::vector<Atom> out;
  for (const auto& r : pool.records()) {
    std::vector<double> y(k);
    for (std::size_t t = 0; t < k; ++t) y[t] = *r.outcomes[t];
    if (arm == 0 || effect.kind == EffectKind::zero) {
      out.push_back({base, std::move(y)});
    } else if (!binary) {
      for (std::size_t t = 0; t < k; ++t) y[t] -= effect.shifts[t];
      out.push_back({base, std::move(y)});
    } else {
      // Enumerate flips of the non-responder visits.
      std::vector<std::size_t> zeros;
      for (std::size_t t = 0; t < k; ++t)
        if (y[t] == 0.0) zeros.push_back(t);
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << zeros.size()); ++mask) {
        double w = base;
        std::vector<double> z = y;
        for (std::size_t j = 0; j < zeros.size(); ++j) {
          const double p = effect.flip_probabilities[zeros[j]];
          if (mask >> j & 1) {
            z[zeros[j]] = 1.0;
            w *= p;
          } else {
            w *= 1.0 - p;
          }
        }
        if (w > 0.0) out.push_back({w, std::move(z)});
      }
    }
  }
  return out;
}

}  // namespace scenario_detail

/// Expected cumulative missing fraction per visit for one arm, exact over
/// the pool and the effect's randomness.
inline std::vector<double> expected_missing(const TrialDataset& pool, const EffectProfile& effect,
                                            const CalibratedDropout& d, int arm) {
  const std::size_t k = pool.visits();
  const auto atoms = scenario_detail::arm_atoms(pool, effect, arm);
  std::vector<double> surv(atoms.size(), 1.0);
  std::vector<double> out(k);
  for (std::size_t t = 0; t < k; ++t) {
    double observed = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const double latest = t == 0 ? 0.0 : atoms[i].y[t - 1];
      surv[i] *= 1.0 - d.probability(arm, t, latest);
      observed += atoms[i].weight * surv[i];
    }
    out[t] = 1.0 - observed;
  }
  return out;
}

/// Turns marginal targets into hazards. MCAR hazards follow in closed form;
/// MAR intercepts are found visit by visit by bisection on the exact
/// expected missing fraction.
inline CalibratedDropout calibrate_dropout(const DropoutMechanism& m, const TrialDataset& pool,
                                           const EffectProfile& effect) {
  const std::size_t k = pool.visits();
  m.validate(k);
  CalibratedDropout d;
  d.kind = m.kind;
  if (m.kind == DropoutKind::none) return d;
  if (m.kind == DropoutKind::mcar) {
    double prev = 0.0;
    for (double target : m.missing) {
      d.hazard.push_back(1.0 - (1.0 - target) / (1.0 - prev));
      prev = target;
    }
    return d;
  }

  d.slope = pool.outcome_kind() == OutcomeKind::binary ? m.slope_binary : m.slope_continuous;
  for (int a = 0; a < 2; ++a) {
    if (m.intercepts[a]) {
      d.intercept[a] = *m.intercepts[a];
      continue;
    }
    const auto atoms = scenario_detail::arm_atoms(pool, effect, a);
    std::vector<double> surv(atoms.size(), 1.0);
    d.intercept[a].assign(k, 0.0);
    double missing_prev = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      auto missing_at = [&](double c) {
        double observed = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
          const double latest = t == 0 ? 0.0 : atoms[i].y[t - 1];
          observed += atoms[i].weight * surv[i] * (1.0 - expit(c + d.slope * latest));
        }
        return 1.0 - observed;
      };
      const double target = m.arm_missing[a][t];
      double c;
      if (target <= missing_prev + 1e-15) {
        c = -INFINITY;
      } else {
        double lo = -40.0, hi = 40.0;
        if (!(missing_at(lo) <= target && missing_at(hi) >= target))
          throw Error(ErrorCode::calibration_out_of_range,
                      "dropout '" + m.name + "': " + (a ? "treated" : "control") + " target " + std::to_string(target) +
                          " at visit " + pool.visit_labels()[t] + " is unreachable");
        for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
          const double mid = 0.5 * (lo + hi);
          (missing_at(mid) < target ? lo : hi) = mid;
        }
        c = 0.5 * (lo + hi);
      }
      d.intercept[a][t] = c;
      double observed = 0.0;
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double latest = t == 0 ? 0.0 : atoms[i].y[t - 1];
        surv[i] *= 1.0 - expit(c + d.slope * latest);
        observed += atoms[i].weight * surv[i];
      }
      missing_prev = 1.0 - observed;
    }
  }
  return d;
}

inline constexpr std::uint64_t kTrialStream = 0x7121A1ULL;
inline constexpr std::uint64_t kOracleStream = 0x0AC1EULL;

/// One simulated trial: resample n subjects with replacement, assign arms by
/// fair coin, inject the effect into the treated arm, then apply dropout.
inline TrialDataset generate_trial(const TrialDataset& pool, std::size_t n, const EffectProfile& effect,
                                   const CalibratedDropout& dropout, std::uint64_t seed, std::uint64_t replicate) {
  const std::size_t k = pool.visits();
  effect.validate(k);
  if (n < 2) throw Error(ErrorCode::invalid_params, "trial size must be at least 2");
  const bool binary = pool.outcome_kind() == OutcomeKind::binary;
  Rng rng = make_rng(seed, kTrialStream, replicate);
  std::vector<ParticipantRecord> recs;
  recs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))];
    ParticipantRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "P%05zu", i + 1);
    r.subject_id = id;
    r.baseline = src.baseline;
    r.arm = bernoulli(rng, 0.5) ? 1 : 0;
    r.outcomes = src.outcomes;
    if (r.arm == 1 && effect.kind == EffectKind::beneficial) {
      for (std::size_t t = 0; t < k; ++t) {
        if (!binary) {
          *r.outcomes[t] -= effect.shifts[t];
        } else if (*r.outcomes[t] == 0.0 && bernoulli(rng, effect.flip_probabilities[t])) {
          r.outcomes[t] = 1.0;
        }
      }
    }
    double latest = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      if (dropout.kind != DropoutKind::none && bernoulli(rng, dropout.probability(r.arm, t, latest))) {
        for (std::size_t s = t; s < k; ++s) r.outcomes[s].reset();
        break;
      }
      latest = *r.outcomes[t];
    }
    recs.push_back(std::move(r));
  }
  return TrialDataset(std::move(recs), pool.outcome_kind(), pool.visit_labels(), pool.covariates());
}

/// E[Y_K | A = 1] - E[Y_K | A = 0] over the pool, computed exactly.
inline double exact_true_delta(const TrialDataset& pool, const EffectProfile& effect) {
  effect.validate(pool.visits());
  if (effect.kind == EffectKind::zero) return 0.0;
  const std::size_t last = pool.visits() - 1;
  if (pool.outcome_kind() == OutcomeKind::continuous) return -effect.shifts[last];
  double nonresponders = 0.0;
  for (const auto& r : pool.records()) nonresponders += *r.outcomes[last] == 0.0 ? 1.0 : 0.0;
  return effect.flip_probabilities[last] * nonresponders / static_cast<double>(pool.size());
}

struct OracleResult {
  double delta = 0.0;
  double mc_se = 0.0;
};

/// Monte Carlo evaluation of the final-visit effect without dropout: each
/// draw takes a pool subject and both potential outcomes.
inline OracleResult true_delta_oracle(const TrialDataset& pool, const EffectProfile& effect, std::size_t n_mc,
                                      std::uint64_t seed) {
  if (n_mc < 100000) throw Error(ErrorCode::invalid_params, "oracle needs at least 1e5 draws");
  effect.validate(pool.visits());
  const std::size_t last = pool.visits() - 1;
  const bool binary = pool.outcome_kind() == OutcomeKind::binary;
  Rng rng = make_rng(seed, kOracleStream, 0);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const auto& r = pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))];
    const double y0 = *r.outcomes[last];
    double y1 = y0;
    if (effect.kind == EffectKind::beneficial) {
      if (!binary)
        y1 = y0 - effect.shifts[last];
      else if (y0 == 0.0 && bernoulli(rng, effect.flip_probabilities[last]))
        y1 = 1.0;
    }
    const double d = y1 - y0;
    sum += d;
    sum2 += d * d;
  }
  const double n = static_cast<double>(n_mc);
  OracleResult out;
  out.delta = sum / n;
  out.mc_se = std::sqrt(std::max(0.0, sum2 / n - out.delta * out.delta) / (n - 1.0));
  return out;
}

}  // namespace trialeff
