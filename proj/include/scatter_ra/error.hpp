#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scatter_ra {

enum class ErrorCode {
  invalid_argument,
  io_failure,
  bad_magic,
  unsupported_version,
  truncated_payload,
  dimension_out_of_range,
  value_out_of_range,
  missing_manifest,
  manifest_mismatch,
  duplicate_sample_id,
  missing_file,
  empty_input,
  length_mismatch,
  no_valid_gradient,
  singular_gradient,
  degenerate_fit,
  undefined_correlation,
  unknown_sample,
  infeasible_band,
  input_too_short,
  non_finite,
  plan_mismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io_failure: return "io_failure";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::truncated_payload: return "truncated_payload";
    case ErrorCode::dimension_out_of_range: return "dimension_out_of_range";
    case ErrorCode::value_out_of_range: return "value_out_of_range";
    case ErrorCode::missing_manifest: return "missing_manifest";
    case ErrorCode::manifest_mismatch: return "manifest_mismatch";
    case ErrorCode::duplicate_sample_id: return "duplicate_sample_id";
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::no_valid_gradient: return "no_valid_gradient";
    case ErrorCode::singular_gradient: return "singular_gradient";
    case ErrorCode::degenerate_fit: return "degenerate_fit";
    case ErrorCode::undefined_correlation: return "undefined_correlation";
    case ErrorCode::unknown_sample: return "unknown_sample";
    case ErrorCode::infeasible_band: return "infeasible_band";
    case ErrorCode::input_too_short: return "input_too_short";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::plan_mismatch: return "plan_mismatch";
  }
  return "unknown";
}

/// Exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace scatter_ra
