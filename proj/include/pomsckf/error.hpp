#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pomsckf {

enum class ErrorCode {
  DegenerateParallax,
  NonPositiveDepth,
  TimestampOrder,
  CovarianceCorrupt,
  WindowFull,
  NoSuchClone,
  NoMeasurements,
  IllConditioned,
  EmptyStream,
  ParseError,
  DuplicateObservation,
  AlignmentUnderdetermined,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateParallax: return "degenerate_parallax";
    case ErrorCode::NonPositiveDepth: return "non_positive_depth";
    case ErrorCode::TimestampOrder: return "timestamp_order";
    case ErrorCode::CovarianceCorrupt: return "covariance_corrupt";
    case ErrorCode::WindowFull: return "window_full";
    case ErrorCode::NoSuchClone: return "no_such_clone";
    case ErrorCode::NoMeasurements: return "no_measurements";
    case ErrorCode::IllConditioned: return "ill_conditioned";
    case ErrorCode::EmptyStream: return "empty_stream";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::DuplicateObservation: return "duplicate_observation";
    case ErrorCode::AlignmentUnderdetermined: return "alignment_underdetermined";
    case ErrorCode::ConfigError: return "config_error";
    case ErrorCode::IoError: return "io_error";
  }
  return "unknown";
}

/// Numerical failures map to exit code 3, everything data-related to 2.
constexpr bool is_numerical(ErrorCode code) {
  return code == ErrorCode::CovarianceCorrupt || code == ErrorCode::IllConditioned;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pomsckf
