#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/estimators/effect_estimate.hpp"
#include "trialeff/estimators/longitudinal_design.hpp"
#include "trialeff/numerics/reml.hpp"

namespace trialeff {

struct MmrmOptions {
  CovarianceStructure structure = CovarianceStructure::unstructured;
  LikelihoodCriterion criterion = LikelihoodCriterion::reml;
  // MMRM* only: drop the visit-1 baseline terms, leaving X x visit for j = 2..K.
  bool star_without_visit1_baseline = false;
  std::optional<Eigen::VectorXd> init_theta;
};

struct MmrmFit {
  LongitudinalLayout layout;
  Eigen::VectorXd coefficients;
  std::vector<std::string> names;
  CovarianceParams covariance;
  FitDiagnostics diagnostics;
};

namespace mmrm_detail {

inline std::vector<SubjectBlock> subject_blocks(const TrialDataset& ds, const EncodedDesign& enc,
                                                const LongitudinalLayout& layout) {
  std::vector<SubjectBlock> out;
  out.reserve(ds.size());
  const auto width = static_cast<Eigen::Index>(layout.width());
  const auto c = static_cast<Eigen::Index>(layout.covariate_columns);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    const std::size_t m = r.observed_count();
    if (m == 0) continue;
    SubjectBlock b;
    b.design.resize(static_cast<Eigen::Index>(m), width);
    b.response.resize(static_cast<Eigen::Index>(m));
    const Eigen::VectorXd x = enc.matrix.row(static_cast<Eigen::Index>(i)).tail(c).transpose();
    for (std::size_t t = 0; t < m; ++t) {
      b.visits.push_back(static_cast<int>(t));
      layout.fill_row(b.design.row(static_cast<Eigen::Index>(t)).transpose(), t, r.arm, x);
      b.response[static_cast<Eigen::Index>(t)] = *r.outcomes[t];
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace mmrm_detail

/// Fits the repeated-measures model with saturated visit and visit-by-arm
/// means. `star` adds visit-specific baseline coefficients (MMRM*).
inline MmrmFit fit_mmrm(const TrialDataset& ds, bool star, const MmrmOptions& opt = {}) {
  require_outcome(star ? EstimatorKind::mmrm_star : EstimatorKind::mmrm, ds);
  require_final_visit_in_both_arms(ds);
  const EncodedDesign enc = encode_design(ds);

  MmrmFit fit;
  fit.layout.visits = ds.visits();
  fit.layout.covariate_columns = static_cast<std::size_t>(enc.matrix.cols() - 1);
  fit.layout.terms = !star ? BaselineTerms::main_effects
                           : (opt.star_without_visit1_baseline ? BaselineTerms::per_visit_without_first
                                                               : BaselineTerms::per_visit);
  const std::vector<std::string> cov_names(enc.columns.begin() + 1, enc.columns.end());
  fit.names = fit.layout.column_names(ds.visit_labels(), cov_names);

  const auto blocks = mmrm_detail::subject_blocks(ds, enc, fit.layout);
  {
    Eigen::Index rows = 0;
    for (const auto& b : blocks) rows += b.design.rows();
    Eigen::MatrixXd stacked(rows, static_cast<Eigen::Index>(fit.layout.width()));
    Eigen::Index r = 0;
    for (const auto& b : blocks) {
      stacked.middleRows(r, b.design.rows()) = b.design;
      r += b.design.rows();
    }
    if (numerical_rank(stacked) < stacked.cols())
      throw Error(ErrorCode::rank_deficient_design, std::string(star ? "mmrm_star" : "mmrm") +
                                                        ": repeated-measures design is rank deficient");
  }

  RemlOptions ro;
  ro.criterion = opt.criterion;
  ro.init = opt.init_theta;
  const RemlFit reml = fit_reml(blocks, ds.visits(), opt.structure, ro);
  fit.coefficients = reml.beta;
  fit.covariance = reml.covariance;
  fit.diagnostics = reml.diagnostics;
  return fit;
}

inline EffectEstimate mmrm_estimate(const TrialDataset& ds, bool star, const MmrmOptions& opt = {}) {
  const MmrmFit fit = fit_mmrm(ds, star, opt);
  const double delta = fit.layout.arm_contrast(fit.coefficients);
  const double control = fit.coefficients[0] + (ds.visits() >= 2
                                                     ? fit.coefficients[static_cast<Eigen::Index>(fit.layout.final_visit_column())]
                                                     : 0.0);
  // Arm means are reported at the covariate average so that their
  // difference is exactly delta.
  double baseline_shift = 0.0;
  {
    const EncodedDesign enc = encode_design(ds);
    const Eigen::VectorXd xbar = enc.matrix.colwise().mean().tail(enc.matrix.cols() - 1).transpose();
    Eigen::VectorXd row(static_cast<Eigen::Index>(fit.layout.width()));
    fit.layout.fill_row(row, ds.visits() - 1, 0, xbar);
    baseline_shift = row.tail(row.size() - static_cast<Eigen::Index>(fit.layout.baseline_offset()))
                         .dot(fit.coefficients.tail(row.size() - static_cast<Eigen::Index>(fit.layout.baseline_offset())));
  }
  EffectEstimate e = make_estimate(star ? EstimatorKind::mmrm_star : EstimatorKind::mmrm, control + baseline_shift,
                                   control + baseline_shift + delta);
  e.delta = delta;
  e.covariance = fit.covariance;
  e.diagnostics = fit.diagnostics;
  for (const auto& r : ds.records())
    if (r.observed_count() > 0) ++e.n_used;
  if (!fit.diagnostics.converged) e.notes.push_back("NotConverged: covariance optimization did not converge");
  return e;
}

inline EffectEstimate mmrm(const TrialDataset& ds, const MmrmOptions& opt = {}) { return mmrm_estimate(ds, false, opt); }

inline EffectEstimate mmrm_star(const TrialDataset& ds, const MmrmOptions& opt = {}) {
  return mmrm_estimate(ds, true, opt);
}

}  // namespace trialeff
