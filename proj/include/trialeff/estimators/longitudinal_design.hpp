#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "trialeff/data_model.hpp"

namespace trialeff {

/// Baseline-covariate terms in a repeated-measures mean model.
enum class BaselineTerms {
  main_effects,             // beta_X' X on every visit
  per_visit,                // beta_X' X plus X x I(t = j) for j = 2..K
  per_visit_without_first,  // only X x I(t = j) for j = 2..K (visit 1 unadjusted)
};

/// Column layout of the saturated visit-by-arm mean model:
///   0            intercept
///   1..K-1       I(t = j), j = 2..K
///   K            I(A = 1)
///   K+1..2K-1    I(t = j) x I(A = 1), j = 2..K
///   2K..         baseline terms
struct LongitudinalLayout {
  std::size_t visits = 1;
  std::size_t covariate_columns = 0;  // encoded covariates excluding the intercept
  BaselineTerms terms = BaselineTerms::main_effects;

  std::size_t arm_column() const { return visits; }
  std::size_t arm_final_visit_column() const { return 2 * visits - 1; }  // only valid for K >= 2
  std::size_t final_visit_column() const { return visits - 1; }          // only valid for K >= 2
  std::size_t baseline_offset() const { return 2 * visits; }

  std::size_t width() const {
    const std::size_t c = covariate_columns;
    switch (terms) {
      case BaselineTerms::main_effects: return 2 * visits + c;
      case BaselineTerms::per_visit: return 2 * visits + c * visits;
      case BaselineTerms::per_visit_without_first: return 2 * visits + c * (visits - 1);
    }
    return 0;
  }

  /// Fills one design row for visit t (0-based), arm a, covariates x (no intercept).
  template <typename Row, typename Cov>
  void fill_row(Row&& row, std::size_t t, int a, const Cov& x) const {
    row.setZero();
    row[0] = 1.0;
    if (t > 0) row[static_cast<Eigen::Index>(t)] = 1.0;
    if (a == 1) {
      row[static_cast<Eigen::Index>(visits)] = 1.0;
      if (t > 0) row[static_cast<Eigen::Index>(visits + t)] = 1.0;
    }
    const auto c = static_cast<Eigen::Index>(covariate_columns);
    auto off = static_cast<Eigen::Index>(baseline_offset());
    if (terms != BaselineTerms::per_visit_without_first) {
      row.segment(off, c) = x;
      off += c;
    }
    if (terms != BaselineTerms::main_effects && t > 0) row.segment(off + static_cast<Eigen::Index>(t - 1) * c, c) = x;
  }

  /// delta = alpha_1 + alpha_K in this layout.
  double arm_contrast(const Eigen::VectorXd& coef) const {
    double d = coef[static_cast<Eigen::Index>(arm_column())];
    if (visits >= 2) d += coef[static_cast<Eigen::Index>(arm_final_visit_column())];
    return d;
  }

  std::vector<std::string> column_names(const std::vector<std::string>& visit_labels,
                                        const std::vector<std::string>& covariate_names) const {
    std::vector<std::string> out{"(Intercept)"};
    for (std::size_t j = 1; j < visits; ++j) out.push_back("visit=" + visit_labels[j]);
    out.push_back("arm");
    for (std::size_t j = 1; j < visits; ++j) out.push_back("arm:visit=" + visit_labels[j]);
    if (terms != BaselineTerms::per_visit_without_first)
      for (const auto& n : covariate_names) out.push_back(n);
    if (terms != BaselineTerms::main_effects)
      for (std::size_t j = 1; j < visits; ++j)
        for (const auto& n : covariate_names) out.push_back(n + ":visit=" + visit_labels[j]);
    return out;
  }
};

}  // namespace trialeff
