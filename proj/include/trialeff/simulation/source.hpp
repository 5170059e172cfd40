#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "trialeff/data_model.hpp"
#include "trialeff/errors.hpp"
#include "trialeff/inference/bca.hpp"
#include "trialeff/util/rng.hpp"

namespace trialeff {

/// Normal distribution truncated to [lower, upper].
struct TruncatedNormal {
  double mean = 0.0;
  double sd = 1.0;
  double lower = -INFINITY;
  double upper = INFINITY;

  /// Value at latent standard-normal score u (monotone in u).
  double from_latent(double u) const {
    const double pa = normal_cdf((lower - mean) / sd);
    const double pb = normal_cdf((upper - mean) / sd);
    const double p = std::clamp(pa + normal_cdf(u) * (pb - pa), 1e-300, 1.0 - 1e-16);
    return std::clamp(mean + sd * normal_quantile(p), lower, upper);
  }
};

/// Synthetic diabetes-trial completers.
///
/// Baseline covariates come from a Gaussian copula over latent scores
/// (age, female, weight, hba1c); female is 1 when its score exceeds the
/// matching normal quantile. The change from baseline at visit t is
///   Y_t = change_mean[t] + change_sd[t] * (b_t' s + sqrt(1 - b_t' C b_t) e_t)
/// where s holds the latent scores (female standardized as an indicator),
/// C = Corr(s), and e ~ N(0, residual correlation). The hba1c entry of b_t
/// is solved so that Corr(latent hba1c, Y_t) equals hba1c_correlation[t].
struct GeneratorParams {
  std::size_t size = 380;
  std::uint64_t seed = 1;
  std::vector<std::string> visit_labels{"4", "12", "26"};
  TruncatedNormal age{56.0, 9.5, 25.0, 80.0};
  TruncatedNormal weight{88.0, 18.0, 45.0, 160.0};
  TruncatedNormal hba1c{8.2, 0.9, 6.5, 12.0};
  double female_fraction = 0.45;
  // Latent correlations, order (age, female, weight, hba1c), lower triangle row-major:
  // (female,age), (weight,age), (weight,female), (hba1c,age), (hba1c,female), (hba1c,weight)
  std::vector<double> latent_correlation{-0.05, -0.10, -0.30, -0.10, 0.05, 0.10};
  std::vector<double> change_mean{-0.6, -0.9, -1.0};
  std::vector<double> change_sd{0.7, 0.85, 1.0};
  // Residual correlation of e, lower triangle row-major.
  std::vector<double> residual_correlation{0.6, 0.4, 0.7};
  std::vector<double> age_loading{0.15, 0.0, -0.25};
  std::vector<double> female_loading{0.0, 0.1, 0.15};
  std::vector<double> weight_loading{-0.05, 0.2, 0.45};
  std::vector<double> hba1c_correlation{0.5, 0.5, 0.5};
  double binary_threshold = 7.0;  // responder: baseline hba1c + change below this
};

inline constexpr std::size_t kLatentCount = 4;
inline constexpr std::size_t kFemaleIndex = 1;
inline constexpr std::size_t kHba1cIndex = 3;

namespace source_detail {

inline Eigen::MatrixXd lower_triangle_matrix(const std::vector<double>& v, std::size_t k, const char* what) {
  if (v.size() != k * (k - 1) / 2)
    throw Error(ErrorCode::invalid_params, std::string(what) + ": expected " + std::to_string(k * (k - 1) / 2) +
                                               " correlations, got " + std::to_string(v.size()));
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::size_t c = 0;
  for (Eigen::Index i = 1; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r = v[c++];
      if (!(std::abs(r) < 1.0)) throw Error(ErrorCode::invalid_params, std::string(what) + ": |r| must be < 1");
      m(i, j) = m(j, i) = r;
    }
  if (Eigen::LLT<Eigen::MatrixXd>(m).info() != Eigen::Success)
    throw Error(ErrorCode::invalid_params, std::string(what) + " is not positive definite");
  return m;
}

}  // namespace source_detail

/// Derived quantities of a generator configuration.
struct GeneratorModel {
  Eigen::MatrixXd latent_corr;    // 4 x 4
  Eigen::MatrixXd latent_chol;    // lower factor
  Eigen::MatrixXd score_corr;     // Corr(s)
  Eigen::MatrixXd loadings;       // K x 4, row t = b_t
  Eigen::VectorXd residual_scale; // sqrt(1 - b_t' C b_t)
  Eigen::MatrixXd residual_chol;  // K x K
  double female_cut = 0.0;        // female = 1 when latent score > cut
};

inline GeneratorModel generator_model(const GeneratorParams& p) {
  const std::size_t k = p.visit_labels.size();
  if (k == 0) throw Error(ErrorCode::invalid_params, "generator needs at least one visit");
  auto check_len = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != k)
      throw Error(ErrorCode::invalid_params, std::string(what) + ": expected " + std::to_string(k) + " values");
    for (double x : v)
      if (!std::isfinite(x)) throw Error(ErrorCode::invalid_params, std::string(what) + ": non-finite value");
  };
  check_len(p.change_mean, "change_mean");
  check_len(p.change_sd, "change_sd");
  check_len(p.age_loading, "age_loading");
  check_len(p.female_loading, "female_loading");
  check_len(p.weight_loading, "weight_loading");
  check_len(p.hba1c_correlation, "hba1c_correlation");
  for (double s : p.change_sd)
    if (!(s > 0)) throw Error(ErrorCode::invalid_params, "change_sd must be positive");
  for (const auto* m : {&p.age, &p.weight, &p.hba1c})
    if (!(m->sd > 0) || !(m->lower < m->upper))
      throw Error(ErrorCode::invalid_params, "covariate marginal needs sd > 0 and lower < upper");
  if (!(p.female_fraction > 0.0 && p.female_fraction < 1.0))
    throw Error(ErrorCode::invalid_params, "female_fraction must lie in (0, 1)");
  if (p.size < 2) throw Error(ErrorCode::invalid_params, "source size must be at least 2");

  GeneratorModel g;
  g.latent_corr = source_detail::lower_triangle_matrix(p.latent_correlation, kLatentCount, "latent_correlation");
  g.latent_chol = Eigen::LLT<Eigen::MatrixXd>(g.latent_corr).matrixL();
  g.female_cut = normal_quantile(1.0 - p.female_fraction);

  // Corr(s): the female score is a standardized indicator of its latent score.
  const double q = p.female_fraction;
  const double phi = std::exp(-0.5 * g.female_cut * g.female_cut) / std::sqrt(2.0 * std::numbers::pi);
  g.score_corr = g.latent_corr;
  for (Eigen::Index j = 0; j < 4; ++j)
    if (j != static_cast<Eigen::Index>(kFemaleIndex)) {
      const double r = g.latent_corr(kFemaleIndex, j) * phi / std::sqrt(q * (1.0 - q));
      g.score_corr(kFemaleIndex, j) = g.score_corr(j, kFemaleIndex) = r;
    }

  const auto kk = static_cast<Eigen::Index>(k);
  g.loadings.resize(kk, 4);
  g.residual_scale.resize(kk);
  for (Eigen::Index t = 0; t < kk; ++t) {
    Eigen::Vector4d b(p.age_loading[t], p.female_loading[t], p.weight_loading[t], 0.0);
    const double rest = g.score_corr.row(kHba1cIndex).dot(b.transpose());
    b[kHba1cIndex] = p.hba1c_correlation[t] - rest;
    const double explained = b.dot(g.score_corr * b);
    if (!(explained < 1.0))
      throw Error(ErrorCode::invalid_params, "visit " + p.visit_labels[t] +
                                                 ": covariate loadings explain more than the outcome variance");
    g.loadings.row(t) = b.transpose();
    g.residual_scale[t] = std::sqrt(1.0 - explained);
  }
  const Eigen::MatrixXd rc = source_detail::lower_triangle_matrix(p.residual_correlation, k, "residual_correlation");
  g.residual_chol = Eigen::LLT<Eigen::MatrixXd>(rc).matrixL();
  return g;
}

/// Resampling pool of completers, with the continuous changes and the
/// derived responder indicator for the same subjects.
struct SourcePopulation {
  std::optional<TrialDataset> continuous;
  std::optional<TrialDataset> binary;
  std::string provenance;

  const TrialDataset& pool(OutcomeKind kind) const {
    const auto& d = kind == OutcomeKind::continuous ? continuous : binary;
    if (!d)
      throw Error(ErrorCode::config_error,
                  std::string("source population has no ") + to_string(kind) + " outcomes");
    return *d;
  }
};

inline std::vector<CovariateSpec> source_schema() {
  return {{"age", CovariateKind::continuous, {}},
          {"female", CovariateKind::binary, {}},
          {"weight", CovariateKind::continuous, {}},
          {"hba1c", CovariateKind::continuous, {}}};
}

inline constexpr std::uint64_t kSourceStream = 0x5011ACEULL;

inline SourcePopulation synthesize_source(const GeneratorParams& p) {
  const GeneratorModel g = generator_model(p);
  const std::size_t k = p.visit_labels.size();
  const auto kk = static_cast<Eigen::Index>(k);
  Rng rng = make_rng(p.seed, kSourceStream, 0);
  const double q = p.female_fraction;

  std::vector<ParticipantRecord> cont, bin;
  cont.reserve(p.size);
  bin.reserve(p.size);
  Eigen::Vector4d z;
  Eigen::VectorXd e(kk);
  for (std::size_t i = 0; i < p.size; ++i) {
    for (int j = 0; j < 4; ++j) z[j] = standard_normal(rng);
    const Eigen::Vector4d u = g.latent_chol * z;
    for (Eigen::Index t = 0; t < kk; ++t) e[t] = standard_normal(rng);
    const Eigen::VectorXd eps = g.residual_chol * e;

    const double female = u[kFemaleIndex] > g.female_cut ? 1.0 : 0.0;
    Eigen::Vector4d s = u;
    s[kFemaleIndex] = (female - q) / std::sqrt(q * (1.0 - q));

    ParticipantRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "S%05zu", i + 1);
    r.subject_id = id;
    r.baseline = {p.age.from_latent(u[0]), female, p.weight.from_latent(u[2]), p.hba1c.from_latent(u[3])};
    r.outcomes.resize(k);
    ParticipantRecord rb = r;
    for (Eigen::Index t = 0; t < kk; ++t) {
      const double y = p.change_mean[t] + p.change_sd[t] * (g.loadings.row(t).dot(s) + g.residual_scale[t] * eps[t]);
      r.outcomes[t] = y;
      rb.outcomes[t] = (r.baseline[kHba1cIndex] + y < p.binary_threshold) ? 1.0 : 0.0;
    }
    cont.push_back(std::move(r));
    bin.push_back(std::move(rb));
  }
  SourcePopulation src;
  src.continuous.emplace(std::move(cont), OutcomeKind::continuous, p.visit_labels, source_schema());
  src.binary.emplace(std::move(bin), OutcomeKind::binary, p.visit_labels, source_schema());
  src.provenance = "synthetic(size=" + std::to_string(p.size) + ", seed=" + std::to_string(p.seed) + ")";
  return src;
}

/// Pool loaded from a CSV of completers.
inline SourcePopulation source_from_dataset(TrialDataset ds, std::string provenance) {
  for (const auto& r : ds.records())
    if (r.observed_count() != ds.visits())
      throw Error(ErrorCode::invalid_params, "source population must contain completers only (subject " +
                                                 r.subject_id + ")");
  SourcePopulation src;
  if (ds.outcome_kind() == OutcomeKind::continuous)
    src.continuous = std::move(ds);
  else
    src.binary = std::move(ds);
  src.provenance = std::move(provenance);
  return src;
}

}  // namespace trialeff
