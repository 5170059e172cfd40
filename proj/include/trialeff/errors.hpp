#pragma once

#include <stdexcept>
#include <string>

namespace trialeff {

enum class ErrorCode {
  malformed_file,
  non_monotone_missingness,
  mixed_arm_subject,
  rank_deficient_design,
  singular_system,
  separation_detected,
  not_converged,
  empty_arm,
  all_structures_failed,
  insufficient_risk_set,
  too_many_failures,
  degenerate_replicates,
  invalid_params,
  calibration_out_of_range,
  schema_mismatch,
  config_error,
  incompatible_outcome,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_file: return "MalformedFile";
    case ErrorCode::non_monotone_missingness: return "NonMonotoneMissingness";
    case ErrorCode::mixed_arm_subject: return "MixedArmSubject";
    case ErrorCode::rank_deficient_design: return "RankDeficientDesign";
    case ErrorCode::singular_system: return "SingularSystem";
    case ErrorCode::separation_detected: return "SeparationDetected";
    case ErrorCode::not_converged: return "NotConverged";
    case ErrorCode::empty_arm: return "EmptyArm";
    case ErrorCode::all_structures_failed: return "AllStructuresFailed";
    case ErrorCode::insufficient_risk_set: return "InsufficientRiskSet";
    case ErrorCode::too_many_failures: return "TooManyFailures";
    case ErrorCode::degenerate_replicates: return "DegenerateReplicates";
    case ErrorCode::invalid_params: return "InvalidParams";
    case ErrorCode::calibration_out_of_range: return "CalibrationOutOfRange";
    case ErrorCode::schema_mismatch: return "SchemaMismatch";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::incompatible_outcome: return "IncompatibleOutcome";
  }
  return "Unknown";
}

/// True for errors caused by bad input (files, flags, configs) rather than
/// by a numerical failure inside a fit.
inline bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_file:
    case ErrorCode::non_monotone_missingness:
    case ErrorCode::mixed_arm_subject:
    case ErrorCode::invalid_params:
    case ErrorCode::schema_mismatch:
    case ErrorCode::config_error:
    case ErrorCode::incompatible_outcome:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the error-code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace trialeff
