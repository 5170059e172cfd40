#pragma once

// Dataset builders shared by the unit tests and the acceptance binary.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/numerics/reml.hpp"
#include "trialeff/util/rng.hpp"

namespace trialeff::testing {

struct SynthOptions {
  OutcomeKind kind = OutcomeKind::continuous;
  std::size_t n = 200;
  std::size_t visits = 3;
  std::size_t covariates = 2;
  double hazard = 0.08;   // per-visit MCAR dropout hazard
  double effect = 0.4;    // arm shift at the final visit
  std::uint64_t seed = 1;
};

inline std::vector<std::string> visit_labels(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t t = 1; t <= k; ++t) out.push_back(std::to_string(t));
  return out;
}

inline std::vector<CovariateSpec> continuous_schema(std::size_t m) {
  std::vector<CovariateSpec> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back({"x" + std::to_string(j + 1), CovariateKind::continuous, {}});
  return out;
}

/// Random trial with monotone MCAR dropout. Outcomes depend on the
/// covariates with visit-varying slopes and have correlated noise.
inline TrialDataset synthetic_dataset(const SynthOptions& o) {
  Rng rng = make_rng(o.seed, 0x7E57ULL, 0);
  std::vector<ParticipantRecord> recs;
  for (std::size_t i = 0; i < o.n; ++i) {
    ParticipantRecord r;
    r.subject_id = "s" + std::to_string(i);
    r.arm = i < 2 ? static_cast<int>(i) : (bernoulli(rng, 0.5) ? 1 : 0);
    for (std::size_t j = 0; j < o.covariates; ++j) r.baseline.push_back(standard_normal(rng));
    double noise = standard_normal(rng);
    bool dropped = false;
    for (std::size_t t = 0; t < o.visits; ++t) {
      noise = 0.6 * noise + 0.8 * standard_normal(rng);
      double mu = 0.3 * static_cast<double>(t) + r.arm * o.effect * static_cast<double>(t + 1) / static_cast<double>(o.visits);
      for (std::size_t j = 0; j < o.covariates; ++j)
        mu += (0.5 + 0.2 * static_cast<double>(t) - 0.3 * static_cast<double>(j)) * r.baseline[j];
      const double y = o.kind == OutcomeKind::binary ? (mu + noise > 0.3 ? 1.0 : 0.0) : mu + noise;
      // The first two subjects always complete so both arms reach the final visit.
      if (!dropped && i >= 2 && bernoulli(rng, o.hazard)) dropped = true;
      r.outcomes.push_back(dropped ? std::nullopt : std::optional<double>(y));
    }
    recs.push_back(std::move(r));
  }
  return TrialDataset(std::move(recs), o.kind, visit_labels(o.visits), continuous_schema(o.covariates));
}

/// Record with the given arm, covariates and outcomes (NaN marks missing).
inline ParticipantRecord record(std::string id, int arm, std::vector<double> x, std::vector<double> y) {
  ParticipantRecord r;
  r.subject_id = std::move(id);
  r.arm = arm;
  r.baseline = std::move(x);
  for (double v : y) r.outcomes.push_back(std::isnan(v) ? std::nullopt : std::optional<double>(v));
  return r;
}

inline TrialDataset swap_arms(const TrialDataset& ds) {
  return ds.transformed([](ParticipantRecord& r) { r.arm = 1 - r.arm; });
}

// Subjects with K visits, a saturated visit mean, one covariate and
// monotone dropout.
inline std::vector<SubjectBlock> random_blocks(std::size_t n, std::size_t k, std::uint64_t seed, double hazard = 0.15) {
  Rng rng = make_rng(seed, 11, 0);
  const auto kk = static_cast<Eigen::Index>(k);
  std::vector<SubjectBlock> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = standard_normal(rng);
    SubjectBlock b;
    double e = standard_normal(rng);
    std::vector<double> ys;
    for (std::size_t t = 0; t < k; ++t) {
      if (t > 0 && uniform01(rng) < hazard) break;
      e = 0.7 * e + 0.7 * standard_normal(rng);
      b.visits.push_back(static_cast<int>(t));
      ys.push_back(0.5 * static_cast<double>(t) + 0.8 * x + e);
    }
    const auto m = static_cast<Eigen::Index>(ys.size());
    b.design = Eigen::MatrixXd::Zero(m, kk + 1);
    b.response.resize(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      b.design(a, b.visits[a]) = 1.0;
      b.design(a, kk) = x;
      b.response[a] = ys[a];
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline Eigen::VectorXd random_theta(CovarianceStructure s, std::size_t k, Rng& rng) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(parameter_count(s, k)));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = uniform01(rng) - 0.5;
  return t;
}

}  // namespace trialeff::testing
