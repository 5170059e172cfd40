#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/estimators/effect_estimate.hpp"
#include "trialeff/numerics/linear.hpp"
#include "trialeff/numerics/logistic.hpp"

namespace trialeff {

enum class PropensityModel { estimated, fixed_half };
enum class ContinuousLink { identity, scaled_logit };

struct TmleOptions {
  double truncation = 0.025;  // floor for predicted propensities and continuation probabilities
  PropensityModel propensity = PropensityModel::estimated;
  ContinuousLink continuous_link = ContinuousLink::identity;
  std::size_t min_risk_set = 10;  // each fit needs max(min_risk_set, columns + 2) subjects
};

/// Subjects entering one weighted outcome regression with their weights.
struct TmleStepWeights {
  std::vector<std::size_t> subjects;
  std::vector<double> weights;
};

/// Working-model fits behind a longitudinal TMLE estimate.
///
/// Visits are indexed 1..K as in the estimator's description; vectors below
/// are 0-based, so `continuation[t]` is the model for attending visit t + 1
/// among subjects who attended visit t (visit 0 is baseline). Coefficients
/// refer to standardized baseline covariates.
struct TmleFit {
  Eigen::VectorXd propensity_coef;                 // empty when fixed at 0.5
  Eigen::VectorXd propensity;                      // truncated P(A = 1 | X) per subject
  std::vector<Eigen::VectorXd> continuation_coef;  // per t = 0..K-1; empty when nobody drops out
  std::vector<Eigen::VectorXd> continuation;       // truncated P(R_t = 1 | history), NaN outside the risk set
  // outcome_coef[a][t - 1] and step_weights[a][t - 1] for regression step t = 1..K
  std::array<std::vector<Eigen::VectorXd>, 2> outcome_coef;
  std::array<std::vector<TmleStepWeights>, 2> step_weights;
  std::array<Eigen::VectorXd, 2> q1;  // per-arm predictions at step 1, every subject
  std::array<double, 2> arm_means{0.0, 0.0};
  bool separation = false;
  std::vector<std::string> warnings;
};

namespace tmle_detail {

inline void require_risk_set(std::size_t have, Eigen::Index columns, const TmleOptions& opt, const std::string& what) {
  const std::size_t need = std::max(opt.min_risk_set, static_cast<std::size_t>(columns) + 2);
  if (have < need)
    throw Error(ErrorCode::insufficient_risk_set,
                what + ": " + std::to_string(have) + " subjects, need " + std::to_string(need));
}

}  // namespace tmle_detail

inline TmleFit fit_tmle(const TrialDataset& ds, const TmleOptions& opt = {}) {
  if (!(opt.truncation > 0.0 && opt.truncation <= 1.0))
    throw Error(ErrorCode::invalid_params, "tmle: truncation must lie in (0, 1]");
  require_final_visit_in_both_arms(ds);
  const Eigen::MatrixXd x = standardized_columns(encode_design(ds).matrix);
  const auto n = static_cast<Eigen::Index>(ds.size());
  const std::size_t k = ds.visits();
  const Eigen::Index px = x.cols();
  const bool binary = ds.outcome_kind() == OutcomeKind::binary;
  const bool logit_link = binary || opt.continuous_link == ContinuousLink::scaled_logit;
  const double floor = opt.truncation;

  TmleFit fit;
  auto note_separation = [&](const FitDiagnostics& d, const std::string& what) {
    if (d.separation) {
      fit.separation = true;
      fit.warnings.push_back("SeparationDetected: " + what + " (coefficients capped)");
    }
  };

  Eigen::VectorXd arm(n);
  for (Eigen::Index i = 0; i < n; ++i) arm[i] = ds[static_cast<std::size_t>(i)].arm;
  std::vector<std::size_t> attended(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) attended[static_cast<std::size_t>(i)] = ds[static_cast<std::size_t>(i)].observed_count();

  // (1) propensity
  if (opt.propensity == PropensityModel::estimated) {
    tmle_detail::require_risk_set(static_cast<std::size_t>(n), px, opt, "propensity model");
    const LogisticFit pf = irls_logistic(x, arm, Eigen::VectorXd::Ones(n));
    note_separation(pf.diagnostics, "propensity model");
    fit.propensity_coef = pf.coef;
    fit.propensity = predict_logistic(x, pf.coef);
  } else {
    fit.propensity = Eigen::VectorXd::Constant(n, 0.5);
  }

  // Outcome scale for the bounded continuous variant.
  double lo = 0.0, hi = 1.0;
  if (!binary && logit_link) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const auto& r : ds.records())
      for (const auto& y : r.outcomes)
        if (y) {
          lo = std::min(lo, *y);
          hi = std::max(hi, *y);
        }
    if (!(hi > lo)) hi = lo + 1.0;
  }
  auto scaled = [&](double y) { return (!binary && logit_link) ? (y - lo) / (hi - lo) : y; };

  // History design: (X, A?, Y_1..Y_m) for subject i.
  auto history_row = [&](Eigen::Index i, bool with_arm, std::size_t m) {
    Eigen::VectorXd row(px + (with_arm ? 1 : 0) + static_cast<Eigen::Index>(m));
    row.head(px) = x.row(i).transpose();
    Eigen::Index c = px;
    if (with_arm) row[c++] = arm[i];
    for (std::size_t t = 0; t < m; ++t) row[c++] = *ds[static_cast<std::size_t>(i)].outcomes[t];
    return row;
  };

  // (2) continuation: P(attend visit t+1 | attended visit t, A, X, Y_1..Y_t)
  fit.continuation.assign(k, Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN()));
  fit.continuation_coef.assign(k, Eigen::VectorXd());
  for (std::size_t t = 0; t < k; ++t) {
    std::vector<Eigen::Index> risk;
    std::size_t stay = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (attended[static_cast<std::size_t>(i)] >= t) {
        risk.push_back(i);
        if (attended[static_cast<std::size_t>(i)] >= t + 1) ++stay;
      }
    const std::string what = "continuation model at visit " + std::to_string(t);
    if (stay == risk.size()) {
      for (Eigen::Index i : risk) fit.continuation[t][i] = 1.0;
      continue;
    }
    const Eigen::Index cols = px + 1 + static_cast<Eigen::Index>(t);
    tmle_detail::require_risk_set(risk.size(), cols, opt, what);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(risk.size()), cols);
    Eigen::VectorXd r(static_cast<Eigen::Index>(risk.size()));
    for (std::size_t j = 0; j < risk.size(); ++j) {
      z.row(static_cast<Eigen::Index>(j)) = history_row(risk[j], true, t).transpose();
      r[static_cast<Eigen::Index>(j)] = attended[static_cast<std::size_t>(risk[j])] >= t + 1 ? 1.0 : 0.0;
    }
    const LogisticFit hf = irls_logistic(z, r, Eigen::VectorXd::Ones(z.rows()));
    note_separation(hf.diagnostics, what);
    fit.continuation_coef[t] = hf.coef;
    const Eigen::VectorXd p = predict_logistic(z, hf.coef);
    for (std::size_t j = 0; j < risk.size(); ++j)
      fit.continuation[t][risk[j]] = std::clamp(p[static_cast<Eigen::Index>(j)], floor, 1.0);
  }

  // (3) sequential weighted regressions, per arm, from the final visit down to visit 1.
  for (int a = 0; a < 2; ++a) {
    fit.outcome_coef[a].assign(k, Eigen::VectorXd());
    fit.step_weights[a].assign(k, TmleStepWeights{});
    Eigen::VectorXd pi_a(n);
    for (Eigen::Index i = 0; i < n; ++i)
      pi_a[i] = std::clamp(a == 1 ? fit.propensity[i] : 1.0 - fit.propensity[i], floor, 1.0);

    // q[i]: current pseudo-outcome, defined for subjects who attended visit t.
    Eigen::VectorXd q = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < n; ++i)
      if (attended[static_cast<std::size_t>(i)] >= k) q[i] = scaled(*ds[static_cast<std::size_t>(i)].outcomes[k - 1]);

    for (std::size_t t = k; t >= 1; --t) {
      const std::string what = std::string("outcome regression, arm ") + (a ? "1" : "0") + ", visit " + std::to_string(t);
      std::vector<Eigen::Index> members;
      for (Eigen::Index i = 0; i < n; ++i)
        if (static_cast<int>(arm[i]) == a && attended[static_cast<std::size_t>(i)] >= t) members.push_back(i);
      const Eigen::Index cols = px + static_cast<Eigen::Index>(t - 1);
      tmle_detail::require_risk_set(members.size(), cols, opt, what);

      const auto m = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd z(m, cols);
      Eigen::VectorXd resp(m), w(m);
      TmleStepWeights& sw = fit.step_weights[a][t - 1];
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index i = members[static_cast<std::size_t>(j)];
        z.row(j) = history_row(i, false, t - 1).transpose();
        resp[j] = q[i];
        double denom = pi_a[i];
        for (std::size_t s = 0; s < t; ++s) denom *= fit.continuation[s][i];
        w[j] = 1.0 / denom;
        sw.subjects.push_back(static_cast<std::size_t>(i));
        sw.weights.push_back(w[j]);
      }

      Eigen::VectorXd coef;
      if (logit_link) {
        const LogisticFit lf = irls_logistic(z, resp.cwiseMax(0.0).cwiseMin(1.0), w);
        note_separation(lf.diagnostics, what);
        coef = lf.coef;
      } else {
        coef = wls(z, resp, w).coef;
      }
      fit.outcome_coef[a][t - 1] = coef;

      Eigen::VectorXd next = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
      for (Eigen::Index i = 0; i < n; ++i) {
        if (attended[static_cast<std::size_t>(i)] + 1 < t) continue;  // needs Y_1..Y_{t-1}
        const double eta = history_row(i, false, t - 1).dot(coef);
        next[i] = logit_link ? expit(eta) : eta;
      }
      q = std::move(next);
    }
    fit.q1[a] = q;
    const double mean_scaled = q.mean();
    fit.arm_means[a] = (!binary && logit_link) ? lo + (hi - lo) * mean_scaled : mean_scaled;
  }
  return fit;
}

inline EffectEstimate tmle(const TrialDataset& ds, const TmleOptions& opt = {}) {
  const TmleFit fit = fit_tmle(ds, opt);
  EffectEstimate e = make_estimate(EstimatorKind::tmle, fit.arm_means[0], fit.arm_means[1]);
  e.n_used = ds.size();
  e.diagnostics.separation = fit.separation;
  e.notes = fit.warnings;
  return e;
}

}  // namespace trialeff
