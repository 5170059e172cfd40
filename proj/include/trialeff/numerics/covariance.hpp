#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "trialeff/errors.hpp"

namespace trialeff {

enum class CovarianceStructure { unstructured, ar1, compound_symmetry, independence };

inline const char* to_string(CovarianceStructure s) {
  switch (s) {
    case CovarianceStructure::unstructured: return "unstructured";
    case CovarianceStructure::ar1: return "ar1";
    case CovarianceStructure::compound_symmetry: return "compound_symmetry";
    case CovarianceStructure::independence: return "independence";
  }
  return "unstructured";
}

inline CovarianceStructure parse_structure(const std::string& s) {
  if (s == "unstructured" || s == "un") return CovarianceStructure::unstructured;
  if (s == "ar1") return CovarianceStructure::ar1;
  if (s == "compound_symmetry" || s == "cs") return CovarianceStructure::compound_symmetry;
  if (s == "independence" || s == "ind") return CovarianceStructure::independence;
  throw Error(ErrorCode::invalid_params, "unknown covariance structure '" + s + "'");
}

inline std::size_t parameter_count(CovarianceStructure s, std::size_t k) {
  switch (s) {
    case CovarianceStructure::unstructured: return k * (k + 1) / 2;
    case CovarianceStructure::ar1:
    case CovarianceStructure::compound_symmetry: return 2;
    case CovarianceStructure::independence: return k;
  }
  return 0;
}

/// K x K residual covariance on an unconstrained scale.
///
///   unstructured       log-Cholesky: row-major lower triangle of L, diagonal on log scale
///   ar1                {log sigma, atanh rho}
///   compound_symmetry  {log sigma, rho mapped by tanh onto (-1/(K-1), 1)}
///   independence       log sigma_t per visit
///
/// Every finite theta materializes to a symmetric positive definite matrix.
struct CovarianceParams {
  CovarianceStructure structure = CovarianceStructure::unstructured;
  std::size_t k = 1;
  Eigen::VectorXd theta;

  CovarianceParams() = default;
  CovarianceParams(CovarianceStructure s, std::size_t dim, Eigen::VectorXd t)
      : structure(s), k(dim), theta(std::move(t)) {
    if (static_cast<std::size_t>(theta.size()) != parameter_count(s, dim))
      throw Error(ErrorCode::invalid_params, "covariance theta has wrong length");
  }

  double cs_lower() const { return k >= 3 ? -1.0 / static_cast<double>(k - 1) : -1.0; }

  Eigen::MatrixXd materialize() const {
    const auto n = static_cast<Eigen::Index>(k);
    switch (structure) {
      case CovarianceStructure::unstructured: {
        const Eigen::MatrixXd l = cholesky_factor();
        return l * l.transpose();
      }
      case CovarianceStructure::ar1: {
        const double var = std::exp(2.0 * theta[0]);
        const double rho = std::tanh(theta[1]);
        Eigen::MatrixXd s(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) s(i, j) = var * std::pow(rho, static_cast<double>(std::abs(i - j)));
        return s;
      }
      case CovarianceStructure::compound_symmetry: {
        const double var = std::exp(2.0 * theta[0]);
        const double rho = cs_rho();
        Eigen::MatrixXd s = Eigen::MatrixXd::Constant(n, n, var * rho);
        s.diagonal().setConstant(var);
        return s;
      }
      case CovarianceStructure::independence: {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) s(i, i) = std::exp(2.0 * theta[i]);
        return s;
      }
    }
    return {};
  }

  /// d Sigma / d theta_p for every parameter p.
  std::vector<Eigen::MatrixXd> derivatives() const {
    const auto n = static_cast<Eigen::Index>(k);
    std::vector<Eigen::MatrixXd> out;
    switch (structure) {
      case CovarianceStructure::unstructured: {
        const Eigen::MatrixXd l = cholesky_factor();
        Eigen::Index p = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j <= i; ++j, ++p) {
            // dL = e_i e_j' scaled; dSigma = dL L' + L dL'
            const double scale = i == j ? std::exp(theta[p]) : 1.0;
            Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
            d.row(i) += scale * l.col(j).transpose();
            d.col(i) += scale * l.col(j);
            out.push_back(std::move(d));
          }
        }
        break;
      }
      case CovarianceStructure::ar1: {
        const double var = std::exp(2.0 * theta[0]);
        const double rho = std::tanh(theta[1]);
        Eigen::MatrixXd d0(n, n), d1(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < n; ++j) {
            const double lag = static_cast<double>(std::abs(i - j));
            d0(i, j) = 2.0 * var * std::pow(rho, lag);
            d1(i, j) = lag == 0 ? 0.0 : var * lag * std::pow(rho, lag - 1) * (1.0 - rho * rho);
          }
        }
        out.push_back(std::move(d0));
        out.push_back(std::move(d1));
        break;
      }
      case CovarianceStructure::compound_symmetry: {
        out.push_back(2.0 * materialize());
        const double var = std::exp(2.0 * theta[0]);
        const double th = std::tanh(theta[1]);
        const double drho = (1.0 - cs_lower()) * 0.5 * (1.0 - th * th);
        Eigen::MatrixXd d1 = Eigen::MatrixXd::Constant(n, n, var * drho);
        d1.diagonal().setZero();
        out.push_back(std::move(d1));
        break;
      }
      case CovarianceStructure::independence: {
        for (Eigen::Index i = 0; i < n; ++i) {
          Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
          d(i, i) = 2.0 * std::exp(2.0 * theta[i]);
          out.push_back(std::move(d));
        }
        break;
      }
    }
    return out;
  }

  /// Projects a covariance matrix onto this structure's parameterization.
  static CovarianceParams from_matrix(CovarianceStructure s, const Eigen::MatrixXd& sigma) {
    const auto k = static_cast<std::size_t>(sigma.rows());
    const Eigen::Index n = sigma.rows();
    Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count(s, k)));
    const Eigen::VectorXd var = sigma.diagonal().cwiseMax(1e-8);
    auto corr = [&](Eigen::Index i, Eigen::Index j) { return sigma(i, j) / std::sqrt(var[i] * var[j]); };
    switch (s) {
      case CovarianceStructure::unstructured: {
        Eigen::MatrixXd m = sigma;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        double ridge = 1e-8 * var.mean();
        while (llt.info() != Eigen::Success) {
          m = sigma;
          m.diagonal().array() += ridge;
          llt.compute(m);
          ridge *= 10.0;
        }
        const Eigen::MatrixXd l = llt.matrixL();
        Eigen::Index p = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j <= i; ++j, ++p) theta[p] = i == j ? std::log(l(i, i)) : l(i, j);
        break;
      }
      case CovarianceStructure::ar1: {
        double rho = 0.0;
        for (Eigen::Index i = 0; i + 1 < n; ++i) rho += corr(i, i + 1);
        rho = n > 1 ? rho / static_cast<double>(n - 1) : 0.0;
        rho = std::clamp(rho, -0.95, 0.95);
        theta[0] = 0.5 * std::log(var.mean());
        theta[1] = std::atanh(rho);
        break;
      }
      case CovarianceStructure::compound_symmetry: {
        double rho = 0.0;
        int pairs = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < i; ++j, ++pairs) rho += corr(i, j);
        rho = pairs ? rho / pairs : 0.0;
        const double lo = k >= 3 ? -1.0 / static_cast<double>(k - 1) : -1.0;
        rho = std::clamp(rho, lo + 0.05 * (1.0 - lo), 0.95);
        theta[0] = 0.5 * std::log(var.mean());
        theta[1] = std::atanh(2.0 * (rho - lo) / (1.0 - lo) - 1.0);
        break;
      }
      case CovarianceStructure::independence:
        for (Eigen::Index i = 0; i < n; ++i) theta[i] = 0.5 * std::log(var[i]);
        break;
    }
    return CovarianceParams(s, k, theta);
  }

 private:
  Eigen::MatrixXd cholesky_factor() const {
    const auto n = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j, ++p) l(i, j) = i == j ? std::exp(theta[p]) : theta[p];
    return l;
  }

  double cs_rho() const {
    const double lo = cs_lower();
    return lo + (1.0 - lo) * 0.5 * (1.0 + std::tanh(theta[1]));
  }
};

}  // namespace trialeff
