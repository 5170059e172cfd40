#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "trialeff/errors.hpp"
#include "trialeff/numerics/covariance.hpp"
#include "trialeff/numerics/diagnostics.hpp"
#include "trialeff/numerics/linear.hpp"
#include "trialeff/numerics/optimize.hpp"

namespace trialeff {

/// One subject's observed rows: `visits` are 0-based visit indices into the
/// K x K covariance, `design` has one row per observed visit.
struct SubjectBlock {
  std::vector<int> visits;
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
};

namespace reml_detail {

inline Eigen::MatrixXd principal(const Eigen::MatrixXd& sigma, const std::vector<int>& visits) {
  const auto m = static_cast<Eigen::Index>(visits.size());
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) out(a, b) = sigma(visits[a], visits[b]);
  return out;
}

}  // namespace reml_detail

/// Generalized least squares for fixed effects given the covariance:
/// beta = (sum X_i' S_i^-1 X_i)^-1 sum X_i' S_i^-1 y_i, with S_i the
/// principal submatrix of Sigma on subject i's observed visits.
inline Eigen::VectorXd gls_profile_beta(std::span<const SubjectBlock> subjects, const CovarianceParams& sigma) {
  if (subjects.empty()) throw Error(ErrorCode::singular_system, "gls: no subjects");
  const Eigen::MatrixXd full = sigma.materialize();
  const Eigen::Index p = subjects.front().design.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  for (const auto& s : subjects) {
    if (s.visits.empty()) continue;
    Eigen::LLT<Eigen::MatrixXd> llt(reml_detail::principal(full, s.visits));
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::singular_system, "gls: covariance not positive definite");
    const Eigen::MatrixXd wx = llt.solve(s.design);
    a.noalias() += s.design.transpose() * wx;
    c.noalias() += wx.transpose() * s.response;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13))
    throw Error(ErrorCode::singular_system, "gls: X' S^-1 X is singular");
  return ldlt.solve(c);
}

enum class LikelihoodCriterion { reml, ml };

/// -2 log (restricted) likelihood of a multivariate normal linear model
/// with a structured residual covariance, beta profiled out.
///
/// Subjects are grouped by observed-visit pattern and reduced to
/// sufficient statistics once, so each evaluation costs O(patterns * (m p)^2)
/// independently of the number of subjects.
class RemlObjective {
 public:
  RemlObjective(std::span<const SubjectBlock> subjects, std::size_t visits,
                LikelihoodCriterion criterion = LikelihoodCriterion::reml)
      : k_(visits), criterion_(criterion) {
    if (subjects.empty()) throw Error(ErrorCode::singular_system, "reml: no subjects");
    p_ = subjects.front().design.cols();
    std::map<std::vector<int>, std::size_t> index;
    for (const auto& s : subjects) {
      if (s.visits.empty()) continue;
      auto [it, inserted] = index.try_emplace(s.visits, patterns_.size());
      if (inserted) {
        Pattern pat;
        pat.visits = s.visits;
        const auto m = static_cast<Eigen::Index>(s.visits.size());
        pat.szz = Eigen::MatrixXd::Zero(m * p_, m * p_);
        pat.szy = Eigen::MatrixXd::Zero(m * p_, m);
        pat.syy = Eigen::MatrixXd::Zero(m, m);
        patterns_.push_back(std::move(pat));
      }
      Pattern& pat = patterns_[it->second];
      const auto m = static_cast<Eigen::Index>(s.visits.size());
      Eigen::VectorXd z(m * p_);
      for (Eigen::Index a = 0; a < m; ++a) z.segment(a * p_, p_) = s.design.row(a).transpose();
      pat.szz.selfadjointView<Eigen::Lower>().rankUpdate(z);
      pat.szy.noalias() += z * s.response.transpose();
      pat.syy.noalias() += s.response * s.response.transpose();
      pat.count += 1;
      n_obs_ += static_cast<std::size_t>(m);
    }
    for (auto& pat : patterns_) pat.szz = pat.szz.selfadjointView<Eigen::Lower>();
  }

  std::size_t visits() const { return k_; }
  Eigen::Index columns() const { return p_; }
  std::size_t observations() const { return n_obs_; }
  LikelihoodCriterion criterion() const { return criterion_; }

  /// Objective value; +inf if the covariance is numerically singular.
  double value(const CovarianceParams& sigma) const { return evaluate(sigma, nullptr, nullptr); }

  /// Objective value and analytic gradient with respect to theta.
  double value_and_gradient(const CovarianceParams& sigma, Eigen::VectorXd& grad) const {
    return evaluate(sigma, &grad, nullptr);
  }

  /// GLS fixed effects at the given covariance.
  Eigen::VectorXd beta(const CovarianceParams& sigma) const {
    Eigen::VectorXd b;
    const double f = evaluate(sigma, nullptr, &b);
    if (!std::isfinite(f)) throw Error(ErrorCode::singular_system, "reml: singular system at the supplied covariance");
    return b;
  }

 private:
  struct Pattern {
    std::vector<int> visits;
    Eigen::MatrixXd szz;  // sum z z', z = stacked design rows
    Eigen::MatrixXd szy;  // sum z y'
    Eigen::MatrixXd syy;  // sum y y'
    std::size_t count = 0;
  };

  struct PatternWork {
    Eigen::MatrixXd w;  // V^-1
    double logdet = 0.0;
  };

  double evaluate(const CovarianceParams& sigma, Eigen::VectorXd* grad, Eigen::VectorXd* beta_out) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (!sigma.theta.allFinite()) return inf;
    const Eigen::MatrixXd full = sigma.materialize();
    if (!full.allFinite()) return inf;
    const Eigen::Index p = p_;

    std::vector<PatternWork> work(patterns_.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
    double yy = 0.0;
    double logdet = 0.0;
    for (std::size_t q = 0; q < patterns_.size(); ++q) {
      const Pattern& pat = patterns_[q];
      const auto m = static_cast<Eigen::Index>(pat.visits.size());
      Eigen::LLT<Eigen::MatrixXd> llt(reml_detail::principal(full, pat.visits));
      if (llt.info() != Eigen::Success) return inf;
      const Eigen::MatrixXd l = llt.matrixL();
      double ld = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!(l(i, i) > 0)) return inf;
        ld += 2.0 * std::log(l(i, i));
      }
      work[q].w = llt.solve(Eigen::MatrixXd::Identity(m, m));
      work[q].logdet = ld;
      const Eigen::MatrixXd& w = work[q].w;
      logdet += static_cast<double>(pat.count) * ld;
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
          const double wij = w(i, j);
          a.noalias() += wij * pat.szz.block(i * p, j * p, p, p);
          c.noalias() += wij * pat.szy.block(i * p, j, p, 1);
          yy += wij * pat.syy(i, j);
        }
      }
    }

    Eigen::LLT<Eigen::MatrixXd> alt(a);
    if (alt.info() != Eigen::Success) return inf;
    const Eigen::MatrixXd al = alt.matrixL();
    double logdet_a = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!(al(i, i) > 0)) return inf;
      logdet_a += 2.0 * std::log(al(i, i));
    }
    const double rcond_guard = al.diagonal().minCoeff() / al.diagonal().maxCoeff();
    if (!(rcond_guard > 1e-8)) return inf;
    const Eigen::VectorXd b = alt.solve(c);
    if (beta_out) *beta_out = b;
    const double quad = yy - c.dot(b);

    const bool reml = criterion_ == LikelihoodCriterion::reml;
    const double n_eff = reml ? static_cast<double>(n_obs_) - static_cast<double>(p) : static_cast<double>(n_obs_);
    double f = n_eff * std::log(2.0 * std::numbers::pi) + logdet + quad;
    if (reml) f += logdet_a;

    if (grad) {
      const auto derivs = sigma.derivatives();
      grad->setZero(static_cast<Eigen::Index>(derivs.size()));
      const Eigen::MatrixXd a_inv = reml ? alt.solve(Eigen::MatrixXd::Identity(p, p)) : Eigen::MatrixXd();
      // Residual cross-product per pattern at beta-hat.
      std::vector<Eigen::MatrixXd> rr(patterns_.size());
      for (std::size_t q = 0; q < patterns_.size(); ++q) {
        const Pattern& pat = patterns_[q];
        const auto m = static_cast<Eigen::Index>(pat.visits.size());
        Eigen::MatrixXd r(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
          for (Eigen::Index j = 0; j < m; ++j) {
            r(i, j) = pat.syy(i, j) - b.dot(pat.szy.col(j).segment(i * p, p)) - b.dot(pat.szy.col(i).segment(j * p, p)) +
                      b.dot((pat.szz.block(i * p, j * p, p, p) * b).eval());
          }
        }
        rr[q] = std::move(r);
      }
      for (std::size_t k = 0; k < derivs.size(); ++k) {
        double gk = 0.0;
        Eigen::MatrixXd da = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t q = 0; q < patterns_.size(); ++q) {
          const Pattern& pat = patterns_[q];
          const auto m = static_cast<Eigen::Index>(pat.visits.size());
          const Eigen::MatrixXd dv = reml_detail::principal(derivs[k], pat.visits);
          const Eigen::MatrixXd& w = work[q].w;
          const Eigen::MatrixXd wdv = w * dv;
          const Eigen::MatrixXd mm = wdv * w;
          gk += static_cast<double>(pat.count) * wdv.trace();
          gk -= (mm.cwiseProduct(rr[q])).sum();
          if (reml) {
            for (Eigen::Index i = 0; i < m; ++i)
              for (Eigen::Index j = 0; j < m; ++j) da.noalias() += mm(i, j) * pat.szz.block(i * p, j * p, p, p);
          }
        }
        if (reml) gk -= (a_inv.cwiseProduct(da)).sum();
        (*grad)[static_cast<Eigen::Index>(k)] = gk;
      }
    }
    return f;
  }

  std::size_t k_;
  LikelihoodCriterion criterion_;
  Eigen::Index p_ = 0;
  std::size_t n_obs_ = 0;
  std::vector<Pattern> patterns_;
};

enum class GradientMode { analytic, numeric };

struct RemlOptions {
  LikelihoodCriterion criterion = LikelihoodCriterion::reml;
  GradientMode gradient = GradientMode::analytic;
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
  double gradient_tolerance = 1e-6;
  std::optional<Eigen::VectorXd> init;  // theta to start from
};

struct RemlFit {
  CovarianceParams covariance;
  Eigen::VectorXd beta;
  FitDiagnostics diagnostics;
  std::vector<double> objective_trace;
};

/// Starting covariance: residuals of an OLS fit of the mean model, then the
/// sample covariance of complete cases, or pooled pairwise moments when
/// fewer than K + 1 subjects are complete.
inline Eigen::MatrixXd initial_covariance(std::span<const SubjectBlock> subjects, std::size_t k) {
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::Index rows = 0;
  for (const auto& s : subjects) rows += s.design.rows();
  const Eigen::Index p = subjects.front().design.cols();
  Eigen::MatrixXd x(rows, p);
  Eigen::VectorXd y(rows);
  Eigen::Index r = 0;
  for (const auto& s : subjects) {
    x.middleRows(r, s.design.rows()) = s.design;
    y.segment(r, s.design.rows()) = s.response;
    r += s.design.rows();
  }
  const Eigen::VectorXd coef = ols(x, y).coef;

  Eigen::MatrixXd complete_sum = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::VectorXd complete_mean = Eigen::VectorXd::Zero(kk);
  std::size_t complete = 0;
  Eigen::MatrixXd pair_sum = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::MatrixXd pair_n = Eigen::MatrixXd::Zero(kk, kk);
  for (const auto& s : subjects) {
    const Eigen::VectorXd e = s.response - s.design * coef;
    const auto m = static_cast<Eigen::Index>(s.visits.size());
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) {
        pair_sum(s.visits[a], s.visits[b]) += e[a] * e[b];
        pair_n(s.visits[a], s.visits[b]) += 1.0;
      }
    }
    if (static_cast<std::size_t>(m) == k) {
      complete_sum.noalias() += e * e.transpose();
      complete_mean += e;
      ++complete;
    }
  }
  if (complete > k) {
    complete_mean /= static_cast<double>(complete);
    Eigen::MatrixXd cov = (complete_sum - static_cast<double>(complete) * complete_mean * complete_mean.transpose()) /
                          static_cast<double>(complete - 1);
    if (Eigen::LLT<Eigen::MatrixXd>(cov).info() == Eigen::Success && cov.diagonal().minCoeff() > 0) return cov;
  }
  Eigen::MatrixXd cov(kk, kk);
  for (Eigen::Index a = 0; a < kk; ++a)
    for (Eigen::Index b = 0; b < kk; ++b) cov(a, b) = pair_n(a, b) > 0 ? pair_sum(a, b) / pair_n(a, b) : 0.0;
  double fallback = 0.0;
  int nonzero = 0;
  for (Eigen::Index a = 0; a < kk; ++a)
    if (cov(a, a) > 0) {
      fallback += cov(a, a);
      ++nonzero;
    }
  fallback = nonzero ? fallback / nonzero : 1.0;
  for (Eigen::Index a = 0; a < kk; ++a)
    if (!(cov(a, a) > 0)) cov(a, a) = fallback;
  return cov;
}

/// Maximizes the (restricted) likelihood over the covariance parameters by
/// BFGS on the unconstrained scale, then returns GLS fixed effects at the
/// optimum. Non-convergence is reported through the diagnostics.
inline RemlFit fit_reml(std::span<const SubjectBlock> subjects, std::size_t k, CovarianceStructure structure,
                        const RemlOptions& opt = {}) {
  std::vector<SubjectBlock> used;
  for (const auto& s : subjects)
    if (!s.visits.empty()) used.push_back(s);
  if (used.empty()) throw Error(ErrorCode::singular_system, "reml: no observed outcomes");

  const RemlObjective objective(used, k, opt.criterion);
  Eigen::VectorXd theta0;
  if (opt.init && static_cast<std::size_t>(opt.init->size()) == parameter_count(structure, k)) {
    theta0 = *opt.init;
  } else {
    theta0 = CovarianceParams::from_matrix(structure, initial_covariance(used, k)).theta;
  }

  auto fg = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
    const CovarianceParams cp(structure, k, theta);
    if (opt.gradient == GradientMode::analytic) return objective.value_and_gradient(cp, g);
    const double f = objective.value(cp);
    if (std::isfinite(f))
      g = central_difference([&](const Eigen::VectorXd& t) { return objective.value(CovarianceParams(structure, k, t)); },
                             theta);
    return f;
  };

  BfgsOptions bo;
  bo.max_iterations = opt.max_iterations;
  bo.relative_tolerance = opt.relative_tolerance;
  bo.gradient_tolerance = opt.gradient_tolerance;
  auto result = minimize_bfgs(fg, theta0, bo);

  RemlFit fit;
  fit.covariance = CovarianceParams(structure, k, result.x);
  if (!std::isfinite(result.diagnostics.objective))
    throw Error(ErrorCode::singular_system, "reml: objective is not finite at the starting covariance");
  fit.beta = objective.beta(fit.covariance);
  fit.diagnostics = result.diagnostics;
  fit.objective_trace = std::move(result.trace);
  return fit;
}

}  // namespace trialeff
