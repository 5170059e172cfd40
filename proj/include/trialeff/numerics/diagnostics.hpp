#pragma once

namespace trialeff {

struct FitDiagnostics {
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;  // max-norm of the score / gradient at the returned point
  double tolerance = 0.0;      // gradient tolerance the convergence flag was judged against
  double condition = 0.0;      // reciprocal condition estimate of the final Hessian / normal matrix
  bool separation = false;     // a logistic coefficient hit the cap
};

}  // namespace trialeff
