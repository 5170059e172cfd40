#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trialeff/errors.hpp"

namespace trialeff {

enum class OutcomeKind { continuous, binary };
enum class CovariateKind { continuous, binary, ordinal, categorical };

inline const char* to_string(OutcomeKind kind) {
  return kind == OutcomeKind::continuous ? "continuous" : "binary";
}

inline const char* to_string(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::continuous: return "continuous";
    case CovariateKind::binary: return "binary";
    case CovariateKind::ordinal: return "ordinal";
    case CovariateKind::categorical: return "categorical";
  }
  return "continuous";
}

struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  // Categorical: level names in schema order (the first one is the reference).
  // Ordinal: optional ordered level names, scored 1..L.
  std::vector<std::string> levels;
};

/// One participant's baseline covariates, arm, and per-visit outcomes.
///
/// Categorical covariates hold the 0-based level index. An outcome value is
/// present exactly when the visit was attended, so the attendance flags are
/// derived from the outcome vector rather than stored separately.
struct ParticipantRecord {
  std::string subject_id;
  std::vector<double> baseline;
  int arm = 0;
  std::vector<std::optional<double>> outcomes;

  bool observed(std::size_t visit) const { return outcomes[visit].has_value(); }

  /// Number of leading attended visits. Under monotone dropout this is the
  /// total number of attended visits.
  std::size_t observed_count() const {
    std::size_t n = 0;
    while (n < outcomes.size() && outcomes[n].has_value()) ++n;
    return n;
  }
};

/// Encoded (1, X) design: intercept followed by expanded covariates.
struct EncodedDesign {
  Eigen::MatrixXd matrix;
  std::vector<std::string> columns;
  std::vector<std::string> reference_levels;  // one entry per categorical covariate
};

inline constexpr double kRankTolerance = 1e-10;

/// Numerical rank of `m` by column-pivoted QR at `kRankTolerance` relative.
inline Eigen::Index numerical_rank(const Eigen::MatrixXd& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(kRankTolerance);
  return qr.rank();
}

namespace detail {

inline void encode_into(const std::vector<CovariateSpec>& schema,
                        const std::vector<ParticipantRecord>& records,
                        EncodedDesign& out) {
  std::size_t width = 1;
  for (const auto& c : schema)
    width += c.kind == CovariateKind::categorical ? (c.levels.empty() ? 0 : c.levels.size() - 1) : 1;

  out.matrix.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(width));
  out.columns.clear();
  out.reference_levels.clear();
  out.columns.emplace_back("(Intercept)");
  for (const auto& c : schema) {
    if (c.kind == CovariateKind::categorical) {
      if (!c.levels.empty()) out.reference_levels.push_back(c.name + "=" + c.levels.front());
      for (std::size_t l = 1; l < c.levels.size(); ++l) out.columns.push_back(c.name + "=" + c.levels[l]);
    } else {
      out.columns.push_back(c.name);
    }
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::Index col = 0;
    out.matrix(row, col++) = 1.0;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& c = schema[j];
      const double v = records[i].baseline[j];
      if (c.kind == CovariateKind::categorical) {
        for (std::size_t l = 1; l < c.levels.size(); ++l)
          out.matrix(row, col++) = static_cast<std::size_t>(v) == l ? 1.0 : 0.0;
      } else {
        out.matrix(row, col++) = v;
      }
    }
  }
}

}  // namespace detail

/// Immutable longitudinal trial dataset with monotone dropout.
class TrialDataset {
 public:
  TrialDataset() = default;

  /// Validates every structural invariant; throws trialeff::Error on failure.
  TrialDataset(std::vector<ParticipantRecord> records, OutcomeKind kind,
               std::vector<std::string> visit_labels, std::vector<CovariateSpec> schema)
      : records_(std::move(records)),
        kind_(kind),
        visit_labels_(std::move(visit_labels)),
        schema_(std::move(schema)) {
    validate_records();
    validate_design();
  }

  const std::vector<ParticipantRecord>& records() const { return records_; }
  const ParticipantRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  std::size_t visits() const { return visit_labels_.size(); }
  std::size_t covariate_count() const { return schema_.size(); }
  OutcomeKind outcome_kind() const { return kind_; }
  const std::vector<std::string>& visit_labels() const { return visit_labels_; }
  const std::vector<CovariateSpec>& covariates() const { return schema_; }

  /// Dataset built from the given subjects (indices may repeat). Records
  /// are already valid, so only design regularity is left to the encoder.
  TrialDataset subset(std::span<const std::size_t> indices) const {
    TrialDataset out;
    out.kind_ = kind_;
    out.visit_labels_ = visit_labels_;
    out.schema_ = schema_;
    out.records_.reserve(indices.size());
    for (std::size_t i : indices) out.records_.push_back(records_[i]);
    return out;
  }

  /// Same dataset with a record-wise transform applied and revalidated.
  template <typename F>
  TrialDataset transformed(F&& f) const {
    std::vector<ParticipantRecord> recs = records_;
    for (auto& r : recs) f(r);
    return TrialDataset(std::move(recs), kind_, visit_labels_, schema_);
  }

 private:
  void validate_records() const {
    const std::size_t k = visit_labels_.size();
    const std::size_t m = schema_.size();
    if (k == 0) throw Error(ErrorCode::malformed_file, "dataset has no visits");
    for (const auto& c : schema_) {
      if (c.kind == CovariateKind::categorical && c.levels.empty())
        throw Error(ErrorCode::malformed_file, "categorical covariate '" + c.name + "' has no levels");
    }
    for (const auto& r : records_) {
      if (r.outcomes.size() != k)
        throw Error(ErrorCode::malformed_file,
                    "subject " + r.subject_id + " has " + std::to_string(r.outcomes.size()) +
                        " visits, expected " + std::to_string(k));
      if (r.baseline.size() != m)
        throw Error(ErrorCode::malformed_file,
                    "subject " + r.subject_id + " has " + std::to_string(r.baseline.size()) +
                        " covariates, expected " + std::to_string(m));
      if (r.arm != 0 && r.arm != 1)
        throw Error(ErrorCode::malformed_file, "subject " + r.subject_id + " has arm not in {0,1}");
      for (std::size_t j = 0; j < m; ++j) {
        const double v = r.baseline[j];
        if (!std::isfinite(v))
          throw Error(ErrorCode::malformed_file,
                      "subject " + r.subject_id + " has missing or non-finite covariate '" +
                          schema_[j].name + "'");
        if (schema_[j].kind == CovariateKind::categorical &&
            (v < 0 || v >= static_cast<double>(schema_[j].levels.size()) || v != std::floor(v)))
          throw Error(ErrorCode::malformed_file,
                      "subject " + r.subject_id + " has invalid level for '" + schema_[j].name + "'");
      }
      bool gap = false;
      for (std::size_t t = 0; t < k; ++t) {
        if (!r.outcomes[t]) {
          gap = true;
          continue;
        }
        if (gap)
          throw Error(ErrorCode::non_monotone_missingness,
                      "subject " + r.subject_id + " observed at visit " + visit_labels_[t] +
                          " after a missing visit");
        const double y = *r.outcomes[t];
        if (!std::isfinite(y))
          throw Error(ErrorCode::malformed_file, "subject " + r.subject_id + " has non-finite outcome");
        if (kind_ == OutcomeKind::binary && y != 0.0 && y != 1.0)
          throw Error(ErrorCode::malformed_file,
                      "subject " + r.subject_id + " has binary outcome outside {0,1}");
      }
    }
  }

  void validate_design() const {
    if (records_.empty()) return;
    EncodedDesign d;
    detail::encode_into(schema_, records_, d);
    for (Eigen::Index c = 0; c < d.matrix.cols(); ++c) {
      if (d.matrix.col(c).cwiseAbs().maxCoeff() == 0.0)
        throw Error(ErrorCode::rank_deficient_design, "column '" + d.columns[c] + "' is all zero");
    }
    if (numerical_rank(d.matrix) < d.matrix.cols())
      throw Error(ErrorCode::rank_deficient_design,
                  "baseline design (1, X) is not of full column rank");
  }

  std::vector<ParticipantRecord> records_;
  OutcomeKind kind_ = OutcomeKind::continuous;
  std::vector<std::string> visit_labels_;
  std::vector<CovariateSpec> schema_;
};

/// Intercept plus encoded covariates. Categorical covariates drop their first
/// level; ordinal covariates enter as numeric scores.
inline EncodedDesign encode_design(const TrialDataset& ds) {
  EncodedDesign out;
  detail::encode_into(ds.covariates(), ds.records(), out);
  for (Eigen::Index c = 0; c < out.matrix.cols(); ++c) {
    if (out.matrix.rows() > 0 && out.matrix.col(c).cwiseAbs().maxCoeff() == 0.0)
      throw Error(ErrorCode::rank_deficient_design, "column '" + out.columns[c] + "' is all zero");
  }
  if (numerical_rank(out.matrix) < out.matrix.cols())
    throw Error(ErrorCode::rank_deficient_design, "baseline design (1, X) is not of full column rank");
  return out;
}

/// Copy of an encoded design with every column after the intercept centered
/// and scaled to unit standard deviation. Models with an intercept make the
/// same predictions on either scale; logistic fits use this one so that the
/// coefficient cap flags separation rather than large covariate units.
inline Eigen::MatrixXd standardized_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    const double sd = std::sqrt((m.col(j).array() - mean).square().mean());
    out.col(j).array() -= mean;
    if (sd > 0) out.col(j) /= sd;
  }
  return out;
}

struct DropoutSummary {
  std::vector<std::string> visit_labels;
  // missing[arm][visit]: fraction of the arm's subjects with the outcome missing
  std::vector<double> missing[2];
  std::vector<double> overall;
  std::size_t arm_size[2] = {0, 0};
};

inline DropoutSummary dropout_summary(const TrialDataset& ds) {
  DropoutSummary s;
  const std::size_t k = ds.visits();
  s.visit_labels = ds.visit_labels();
  std::vector<std::size_t> miss[2] = {std::vector<std::size_t>(k, 0), std::vector<std::size_t>(k, 0)};
  for (const auto& r : ds.records()) {
    ++s.arm_size[r.arm];
    for (std::size_t t = 0; t < k; ++t)
      if (!r.observed(t)) ++miss[r.arm][t];
  }
  for (int a = 0; a < 2; ++a) {
    s.missing[a].resize(k);
    for (std::size_t t = 0; t < k; ++t)
      s.missing[a][t] = s.arm_size[a] ? static_cast<double>(miss[a][t]) / s.arm_size[a] : 0.0;
  }
  s.overall.resize(k);
  const std::size_t n = ds.size();
  for (std::size_t t = 0; t < k; ++t)
    s.overall[t] = n ? static_cast<double>(miss[0][t] + miss[1][t]) / n : 0.0;
  return s;
}

/// Censors every outcome after a subject's first missing visit. Returns the
/// number of observed values discarded.
inline std::size_t coerce_monotone(std::vector<ParticipantRecord>& records) {
  std::size_t discarded = 0;
  for (auto& r : records) {
    bool gap = false;
    for (auto& y : r.outcomes) {
      if (!y) {
        gap = true;
      } else if (gap) {
        y.reset();
        ++discarded;
      }
    }
  }
  return discarded;
}

}  // namespace trialeff
