#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/estimators/effect_estimate.hpp"
#include "trialeff/estimators/longitudinal_design.hpp"
#include "trialeff/numerics/covariance.hpp"
#include "trialeff/numerics/logistic.hpp"

namespace trialeff {

struct GlmmOptions {
  std::vector<CovarianceStructure> ladder{CovarianceStructure::unstructured, CovarianceStructure::ar1,
                                          CovarianceStructure::compound_symmetry, CovarianceStructure::independence};
  double tolerance = 1e-6;  // on max |delta beta|
  int max_iterations = 50;
  double damping = 0.95;  // off-diagonal shrink factor while the working correlation is not PD
  double coefficient_cap = 30.0;
};

struct GeeAttempt {
  CovarianceStructure structure;
  bool converged = false;
  bool separation = false;
  int iterations = 0;
  std::string message;
};

struct GeeFit {
  LongitudinalLayout layout;
  Eigen::VectorXd coefficients;  // baseline covariates enter standardized
  CovarianceStructure structure = CovarianceStructure::independence;
  Eigen::MatrixXd working_correlation;
  Eigen::VectorXd risk_control;  // predicted final-visit risk under A = 0, every subject
  Eigen::VectorXd risk_treated;  // same under A = 1
  FitDiagnostics diagnostics;
  std::vector<GeeAttempt> attempts;
};

namespace gee_detail {

struct Subject {
  std::vector<int> visits;
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
};

/// Moment estimate of the working correlation from Pearson residuals.
inline Eigen::MatrixXd moment_correlation(CovarianceStructure s, const std::vector<Subject>& subjects,
                                          const std::vector<Eigen::VectorXd>& pearson, std::size_t k) {
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::MatrixXd cnt = Eigen::MatrixXd::Zero(kk, kk);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& v = subjects[i].visits;
    for (std::size_t a = 0; a < v.size(); ++a)
      for (std::size_t b = 0; b < v.size(); ++b) {
        sum(v[a], v[b]) += pearson[i][static_cast<Eigen::Index>(a)] * pearson[i][static_cast<Eigen::Index>(b)];
        cnt(v[a], v[b]) += 1.0;
      }
  }
  Eigen::MatrixXd cov(kk, kk);
  for (Eigen::Index a = 0; a < kk; ++a)
    for (Eigen::Index b = 0; b < kk; ++b) cov(a, b) = cnt(a, b) > 0 ? sum(a, b) / cnt(a, b) : 0.0;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(kk, kk);
  auto r = [&](Eigen::Index a, Eigen::Index b) {
    const double d = std::sqrt(cov(a, a) * cov(b, b));
    return d > 0 ? cov(a, b) / d : 0.0;
  };
  switch (s) {
    case CovarianceStructure::unstructured:
      for (Eigen::Index a = 0; a < kk; ++a)
        for (Eigen::Index b = 0; b < kk; ++b)
          if (a != b) corr(a, b) = r(a, b);
      break;
    case CovarianceStructure::ar1: {
      double rho = 0.0;
      for (Eigen::Index a = 0; a + 1 < kk; ++a) rho += r(a, a + 1);
      rho = kk > 1 ? rho / static_cast<double>(kk - 1) : 0.0;
      for (Eigen::Index a = 0; a < kk; ++a)
        for (Eigen::Index b = 0; b < kk; ++b) corr(a, b) = std::pow(rho, static_cast<double>(std::abs(a - b)));
      break;
    }
    case CovarianceStructure::compound_symmetry: {
      double rho = 0.0;
      int pairs = 0;
      for (Eigen::Index a = 0; a < kk; ++a)
        for (Eigen::Index b = 0; b < a; ++b, ++pairs) rho += r(a, b);
      rho = pairs ? rho / pairs : 0.0;
      for (Eigen::Index a = 0; a < kk; ++a)
        for (Eigen::Index b = 0; b < kk; ++b)
          if (a != b) corr(a, b) = rho;
      break;
    }
    case CovarianceStructure::independence: break;
  }
  return corr;
}

inline bool is_pd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 1e-8;
}

}  // namespace gee_detail

/// GEE fit of the marginal logistic model with a single working correlation
/// structure. Returns with `diagnostics.converged == false` when the
/// coefficient updates fail to settle within the iteration budget.
inline GeeFit fit_gee(const TrialDataset& ds, const EncodedDesign& enc, CovarianceStructure structure,
                      const GlmmOptions& opt = {}) {
  GeeFit fit;
  fit.structure = structure;
  fit.layout.visits = ds.visits();
  fit.layout.covariate_columns = static_cast<std::size_t>(enc.matrix.cols() - 1);
  fit.layout.terms = BaselineTerms::main_effects;
  const auto width = static_cast<Eigen::Index>(fit.layout.width());
  const auto c = static_cast<Eigen::Index>(fit.layout.covariate_columns);
  const std::size_t k = ds.visits();

  std::vector<gee_detail::Subject> subjects;
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    const std::size_t m = r.observed_count();
    if (m == 0) continue;
    gee_detail::Subject s;
    s.design.resize(static_cast<Eigen::Index>(m), width);
    s.response.resize(static_cast<Eigen::Index>(m));
    const Eigen::VectorXd x = enc.matrix.row(static_cast<Eigen::Index>(i)).tail(c).transpose();
    for (std::size_t t = 0; t < m; ++t) {
      s.visits.push_back(static_cast<int>(t));
      fit.layout.fill_row(s.design.row(static_cast<Eigen::Index>(t)).transpose(), t, r.arm, x);
      s.response[static_cast<Eigen::Index>(t)] = *r.outcomes[t];
    }
    rows += static_cast<Eigen::Index>(m);
    subjects.push_back(std::move(s));
  }

  // Independence logistic fit as the starting point.
  Eigen::MatrixXd stacked(rows, width);
  Eigen::VectorXd ystack(rows);
  {
    Eigen::Index r = 0;
    for (const auto& s : subjects) {
      stacked.middleRows(r, s.design.rows()) = s.design;
      ystack.segment(r, s.design.rows()) = s.response;
      r += s.design.rows();
    }
  }
  if (numerical_rank(stacked) < width)
    throw Error(ErrorCode::rank_deficient_design, "glmm: marginal logistic design is rank deficient");
  LogisticOptions lo;
  lo.coefficient_cap = opt.coefficient_cap;
  const LogisticFit start = irls_logistic(stacked, ystack, Eigen::VectorXd::Ones(rows), lo);
  fit.coefficients = start.coef;
  if (start.diagnostics.separation) {
    fit.diagnostics.separation = true;
    return fit;
  }

  std::vector<Eigen::VectorXd> pearson(subjects.size());
  std::vector<Eigen::VectorXd> sd(subjects.size());
  auto update_residuals = [&] {
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const Eigen::VectorXd eta = subjects[i].design * fit.coefficients;
      pearson[i].resize(eta.size());
      sd[i].resize(eta.size());
      for (Eigen::Index t = 0; t < eta.size(); ++t) {
        const double mu = expit(eta[t]);
        sd[i][t] = std::sqrt(mu * (1.0 - mu));
        pearson[i][t] = (subjects[i].response[t] - mu) / sd[i][t];
      }
    }
  };

  // Fisher scoring pieces: D' V^-1 D = X' S R^-1 S X and
  // D' V^-1 (y - mu) = X' S R^-1 e, with S = diag(sd) and e Pearson residuals.
  auto accumulate = [&](const Eigen::MatrixXd& corr, Eigen::MatrixXd& h, Eigen::VectorXd& u) {
    std::map<std::vector<int>, Eigen::MatrixXd> inverse;
    h = Eigen::MatrixXd::Zero(width, width);
    u = Eigen::VectorXd::Zero(width);
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const auto& s = subjects[i];
      auto it = inverse.find(s.visits);
      if (it == inverse.end()) {
        const auto m = static_cast<Eigen::Index>(s.visits.size());
        Eigen::MatrixXd sub(m, m);
        for (Eigen::Index a = 0; a < m; ++a)
          for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = corr(s.visits[a], s.visits[b]);
        it = inverse.emplace(s.visits, sub.llt().solve(Eigen::MatrixXd::Identity(m, m))).first;
      }
      const Eigen::MatrixXd sx = sd[i].asDiagonal() * s.design;
      const Eigen::MatrixXd rsx = it->second * sx;
      h.noalias() += sx.transpose() * rsx;
      u.noalias() += rsx.transpose() * pearson[i];
    }
  };

  auto& diag = fit.diagnostics;
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    diag.iterations = iter;
    update_residuals();
    Eigen::MatrixXd corr = gee_detail::moment_correlation(structure, subjects, pearson, k);
    for (int d = 0; d < 500 && !gee_detail::is_pd(corr); ++d) {
      const Eigen::VectorXd keep = corr.diagonal();
      corr *= opt.damping;
      corr.diagonal() = keep;
    }
    if (!gee_detail::is_pd(corr)) break;
    fit.working_correlation = corr;

    Eigen::MatrixXd h;
    Eigen::VectorXd u;
    accumulate(corr, h, u);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) break;
    const Eigen::VectorXd step = ldlt.solve(u);
    if (!step.allFinite()) break;
    fit.coefficients += step;
    diag.condition = ldlt.rcond();
    if (fit.coefficients.cwiseAbs().maxCoeff() > opt.coefficient_cap) {
      diag.separation = true;
      break;
    }
    if (step.cwiseAbs().maxCoeff() < opt.tolerance) {
      diag.converged = true;
      break;
    }
  }
  diag.tolerance = opt.tolerance;
  if (fit.working_correlation.size() > 0) {
    update_residuals();
    Eigen::MatrixXd h;
    Eigen::VectorXd u;
    accumulate(fit.working_correlation, h, u);
    diag.gradient_norm = u.cwiseAbs().maxCoeff();
  }

  const auto n = static_cast<Eigen::Index>(ds.size());
  fit.risk_control.resize(n);
  fit.risk_treated.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = enc.matrix.row(i).tail(c).transpose();
    Eigen::VectorXd row0(width), row1(width);
    fit.layout.fill_row(row0, k - 1, 0, x);
    fit.layout.fill_row(row1, k - 1, 1, x);
    fit.risk_control[i] = expit(row0.dot(fit.coefficients));
    fit.risk_treated[i] = expit(row1.dot(fit.coefficients));
  }
  return fit;
}

/// Marginally standardized risk difference from the GEE logistic fit,
/// moving down the working-correlation ladder until a fit converges.
inline GeeFit fit_glmm(const TrialDataset& ds, const GlmmOptions& opt = {}) {
  require_outcome(EstimatorKind::glmm, ds);
  require_final_visit_in_both_arms(ds);
  if (opt.ladder.empty()) throw Error(ErrorCode::invalid_params, "glmm: empty covariance ladder");
  EncodedDesign enc = encode_design(ds);
  enc.matrix = standardized_columns(enc.matrix);
  std::vector<GeeAttempt> attempts;
  bool any_separation = false;
  for (auto s : opt.ladder) {
    GeeAttempt att;
    att.structure = s;
    try {
      GeeFit fit = fit_gee(ds, enc, s, opt);
      att.converged = fit.diagnostics.converged;
      att.separation = fit.diagnostics.separation;
      att.iterations = fit.diagnostics.iterations;
      att.message = att.converged ? "converged" : (att.separation ? "separation" : "not converged");
      attempts.push_back(att);
      any_separation = any_separation || att.separation;
      if (att.converged) {
        fit.attempts = attempts;
        return fit;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::rank_deficient_design) throw;
      att.message = e.what();
      attempts.push_back(att);
    }
  }
  std::string summary;
  for (const auto& a : attempts) summary += std::string(summary.empty() ? "" : "; ") + to_string(a.structure) + ": " + a.message;
  if (any_separation) throw Error(ErrorCode::separation_detected, "glmm: " + summary);
  throw Error(ErrorCode::all_structures_failed, "glmm: " + summary);
}

inline EffectEstimate glmm_standardized(const TrialDataset& ds, const GlmmOptions& opt = {}) {
  const GeeFit fit = fit_glmm(ds, opt);
  EffectEstimate e = make_estimate(EstimatorKind::glmm, fit.risk_control.mean(), fit.risk_treated.mean());
  e.delta = (fit.risk_treated - fit.risk_control).mean();
  e.arm_means = {fit.risk_control.mean(), fit.risk_control.mean() + e.delta};
  if (fit.working_correlation.size() > 0)
    e.covariance = CovarianceParams::from_matrix(fit.structure, fit.working_correlation);
  e.diagnostics = fit.diagnostics;
  for (const auto& r : ds.records())
    if (r.observed_count() > 0) ++e.n_used;
  for (const auto& a : fit.attempts) e.notes.push_back(std::string(to_string(a.structure)) + ": " + a.message);
  return e;
}

}  // namespace trialeff
