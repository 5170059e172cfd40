#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/errors.hpp"
#include "trialeff/numerics/diagnostics.hpp"

namespace trialeff {

inline double expit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(eta)) without overflow
inline double softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

struct LogisticOptions {
  double tolerance = 1e-8;  // on max |delta beta|
  int max_iterations = 100;
  double coefficient_cap = 30.0;
  double score_tolerance = 1e-6;  // max |score| required before declaring convergence
};

struct LogisticFit {
  Eigen::VectorXd coef;
  FitDiagnostics diagnostics;
};

/// Weighted Bernoulli quasi-log-likelihood sum_i w_i [y_i eta_i - log(1 + e^eta_i)].
/// Responses may be fractional.
inline double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                              const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += w[i] * (y[i] * eta[i] - softplus(eta[i]));
  return ll;
}

inline Eigen::VectorXd logistic_score(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = w[i] * (y[i] - expit(eta[i]));
  return x.transpose() * r;
}

inline Eigen::VectorXd predict_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  Eigen::VectorXd p = x * beta;
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = expit(p[i]);
  return p;
}

namespace detail {

// Coefficients at the cap stay fixed while Newton steps solve the score
// equations of the others, so the intercept still reproduces the weighted
// mean of the response after separation. Coefficients that reach the cap
// join the fixed set.
inline void refit_free(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                       Eigen::VectorXd& coef, const LogisticOptions& opt) {
  const Eigen::Index n = x.rows(), p = x.cols();
  std::vector<bool> fixed(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) fixed[static_cast<std::size_t>(j)] = std::abs(coef[j]) >= opt.coefficient_cap;
  double ll = logistic_loglik(x, y, w, coef);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < p; ++j)
      if (!fixed[static_cast<std::size_t>(j)]) free.push_back(j);
    if (free.empty()) return;
    const auto f = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd xf(n, f);
    for (Eigen::Index c = 0; c < f; ++c) xf.col(c) = x.col(free[static_cast<std::size_t>(c)]);
    const Eigen::VectorXd eta = x * coef;
    Eigen::VectorXd v(n), r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = expit(eta[i]);
      v[i] = w[i] * mu * (1.0 - mu);
      r[i] = w[i] * (y[i] - mu);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(xf.transpose() * v.asDiagonal() * xf);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) return;
    Eigen::VectorXd step = ldlt.solve(xf.transpose() * r);
    Eigen::VectorXd next = coef;
    double ll_next = ll;
    for (int halving = 0; halving < 40; ++halving) {
      next = coef;
      for (Eigen::Index c = 0; c < f; ++c) next[free[static_cast<std::size_t>(c)]] += step[c];
      ll_next = logistic_loglik(x, y, w, next);
      if (ll_next >= ll - 1e-12 * (1.0 + std::abs(ll))) break;
      step *= 0.5;
    }
    coef = next;
    ll = ll_next;
    bool capped = false;
    for (Eigen::Index j = 0; j < p; ++j)
      if (std::abs(coef[j]) > opt.coefficient_cap) {
        coef[j] = std::clamp(coef[j], -opt.coefficient_cap, opt.coefficient_cap);
        fixed[static_cast<std::size_t>(j)] = capped = true;
      }
    if (capped) {
      ll = logistic_loglik(x, y, w, coef);
      continue;
    }
    if (step.cwiseAbs().maxCoeff() < opt.tolerance) return;
  }
}

}  // namespace detail

/// Newton-Raphson (IRLS) for weighted logistic regression with fractional
/// responses in [0,1]. Steps are halved until the quasi-log-likelihood does
/// not decrease. If any coefficient exceeds the cap it is clamped there,
/// `diagnostics.separation` is set and the remaining coefficients are refit
/// with the capped ones held fixed; the same flag is raised when the
/// information matrix degenerates mid-fit.
inline LogisticFit irls_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                 const LogisticOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || w.size() != n) throw Error(ErrorCode::invalid_params, "irls_logistic: row counts differ");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(y[i] >= 0.0 && y[i] <= 1.0)) throw Error(ErrorCode::invalid_params, "irls_logistic: response outside [0,1]");
    if (!(w[i] > 0.0)) throw Error(ErrorCode::invalid_params, "irls_logistic: weights must be positive");
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(w.cwiseSqrt().asDiagonal() * x);
    qr.setThreshold(kRankTolerance);
    if (n < p || qr.rank() < p) throw Error(ErrorCode::singular_system, "irls_logistic: design is rank deficient");
  }

  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  double ll = logistic_loglik(x, y, w, fit.coef);
  auto& diag = fit.diagnostics;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    diag.iterations = iter;
    const Eigen::VectorXd eta = x * fit.coef;
    Eigen::VectorXd v(n), r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = expit(eta[i]);
      v[i] = w[i] * mu * (1.0 - mu);
      r[i] = w[i] * (y[i] - mu);
    }
    const Eigen::MatrixXd h = x.transpose() * v.asDiagonal() * x;
    const Eigen::VectorXd g = x.transpose() * r;
    ldlt.compute(h);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
      // The design has full rank, so a vanishing information matrix after
      // the first step means fitted probabilities are collapsing onto 0/1.
      if (iter == 1) throw Error(ErrorCode::singular_system, "irls_logistic: information matrix is singular");
      diag.separation = true;
      break;
    }
    Eigen::VectorXd step = ldlt.solve(g);

    Eigen::VectorXd next = fit.coef + step;
    double ll_next = logistic_loglik(x, y, w, next);
    for (int halving = 0; halving < 40 && !(ll_next >= ll - 1e-12 * (1.0 + std::abs(ll))); ++halving) {
      step *= 0.5;
      next = fit.coef + step;
      ll_next = logistic_loglik(x, y, w, next);
    }
    fit.coef = next;
    ll = ll_next;

    if (fit.coef.cwiseAbs().maxCoeff() > opt.coefficient_cap) {
      fit.coef = fit.coef.cwiseMax(-opt.coefficient_cap).cwiseMin(opt.coefficient_cap);
      diag.separation = true;
      detail::refit_free(x, y, w, fit.coef, opt);
      break;
    }
    if (step.cwiseAbs().maxCoeff() < opt.tolerance &&
        logistic_score(x, y, w, fit.coef).cwiseAbs().maxCoeff() < opt.score_tolerance) {
      diag.converged = true;
      break;
    }
  }

  diag.objective = logistic_loglik(x, y, w, fit.coef);
  diag.gradient_norm = logistic_score(x, y, w, fit.coef).cwiseAbs().maxCoeff();
  diag.tolerance = opt.score_tolerance;
  diag.condition = ldlt.rcond();
  if (diag.separation) diag.converged = false;
  return fit;
}

}  // namespace trialeff
