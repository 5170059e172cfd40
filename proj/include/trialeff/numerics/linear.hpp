#pragma once

#include <Eigen/Dense>

#include "trialeff/data_model.hpp"
#include "trialeff/errors.hpp"

namespace trialeff {

struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;
};

/// Weighted least squares: minimizes sum_i w_i (y_i - x_i'b)^2 via
/// column-pivoted QR of diag(sqrt(w)) X.
inline LinearFit wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const Eigen::VectorXd& weights) {
  if (design.rows() != response.size() || design.rows() != weights.size())
    throw Error(ErrorCode::invalid_params, "wls: row counts differ");
  if (weights.size() > 0 && weights.minCoeff() <= 0.0)
    throw Error(ErrorCode::invalid_params, "wls: weights must be positive");
  const Eigen::VectorXd sw = weights.cwiseSqrt();
  const Eigen::MatrixXd wx = sw.asDiagonal() * design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wx);
  qr.setThreshold(kRankTolerance);
  if (design.rows() < design.cols() || qr.rank() < design.cols())
    throw Error(ErrorCode::singular_system, "wls: design is rank deficient");
  LinearFit fit;
  fit.coef = qr.solve(sw.cwiseProduct(response));
  fit.fitted = design * fit.coef;
  return fit;
}

inline LinearFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  return wls(design, response, Eigen::VectorXd::Ones(design.rows()));
}

}  // namespace trialeff
