#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "trialeff/numerics/diagnostics.hpp"

namespace trialeff {

struct BfgsOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;  // on the objective change between iterations
  double gradient_tolerance = 1e-6;   // on max |g|, scaled by max(1, |f|)
  double max_step = 2.0;              // largest initial move in any coordinate
  // Extra quasi-Newton steps taken once the gradient test passes; BFGS is
  // superlinear there, so a few steps buy several more digits.
  int polish_steps = 3;
};

struct BfgsResult {
  Eigen::VectorXd x;
  FitDiagnostics diagnostics;
  std::vector<double> trace;  // objective after every accepted step, starting with f(x0)
};

/// Central-difference gradient with step h = 1e-6 (1 + |x_i|).
template <typename F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double rel_step = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Quasi-Newton minimization with Armijo backtracking, so the objective
/// never increases across accepted steps. `fg(x, g)` returns f(x) and fills
/// the gradient; it may return +inf for points outside the domain.
template <typename FG>
BfgsResult minimize_bfgs(FG&& fg, Eigen::VectorXd x0, const BfgsOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  BfgsResult out;
  out.x = std::move(x0);
  Eigen::VectorXd g(n);
  double f = fg(out.x, g);
  out.trace.push_back(f);
  auto& diag = out.diagnostics;
  auto grad_tol = [&](double fv) { return opt.gradient_tolerance * std::max(1.0, std::abs(fv)); };

  if (!std::isfinite(f)) {
    diag.objective = f;
    diag.gradient_norm = std::numeric_limits<double>::infinity();
    return out;
  }

  auto fresh_inverse_hessian = [&](const Eigen::VectorXd& grad) {
    const double gmax = grad.cwiseAbs().maxCoeff();
    const double scale = gmax > opt.max_step ? opt.max_step / gmax : 1.0;
    return Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n) * scale);
  };
  Eigen::MatrixXd h = fresh_inverse_hessian(g);
  Eigen::VectorXd g_next(n);
  bool reset_once = false;
  int polished = 0;

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    diag.iterations = iter;
    const double gmax = g.cwiseAbs().maxCoeff();
    if (gmax < grad_tol(f)) {
      if (polished >= opt.polish_steps || gmax < 1e-13 * std::max(1.0, std::abs(f))) break;
      ++polished;
    }

    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      h = fresh_inverse_hessian(g);
      dir = -h * g;
      slope = g.dot(dir);
    }

    double step = 1.0;
    Eigen::VectorXd x_next;
    double f_next = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 50; ++k, step *= 0.5) {
      x_next = out.x + step * dir;
      f_next = fg(x_next, g_next);
      if (std::isfinite(f_next) && f_next <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (reset_once) break;
      reset_once = true;
      h = fresh_inverse_hessian(g);
      continue;
    }
    reset_once = false;

    const Eigen::VectorXd s = x_next - out.x;
    const Eigen::VectorXd y = g_next - g;
    const double sy = s.dot(y);
    const double f_prev = f;
    out.x = x_next;
    f = f_next;
    g = g_next;
    out.trace.push_back(f);

    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
      h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    // A stalled objective ends the search unless the gradient says we are
    // already in the final polishing phase.
    if (std::abs(f_prev - f) <= opt.relative_tolerance * std::max(1.0, std::abs(f)) &&
        !(g.cwiseAbs().maxCoeff() < grad_tol(f)))
      break;
  }

  diag.objective = f;
  diag.gradient_norm = g.cwiseAbs().maxCoeff();
  diag.tolerance = grad_tol(f);
  diag.converged = diag.gradient_norm < diag.tolerance;
  return out;
}

}  // namespace trialeff
