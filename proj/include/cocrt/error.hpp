#pragma once

#include <stdexcept>
#include <string>

namespace cocrt {

enum class ErrorCode {
  InvalidArgument,
  NotPositiveDefinite,
  InsufficientDf,
  InfeasibleAllocation,
  DegenerateCorrection,
  NonConvergence,
  AccuracyNotReached,
  Unattainable,
  SingularInformation,
  Internal,
};

const char* to_string(ErrorCode code);

// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
inline bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence:
    case ErrorCode::AccuracyNotReached:
    case ErrorCode::Unattainable:
    case ErrorCode::SingularInformation:
    case ErrorCode::Internal:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::InsufficientDf: return "InsufficientDf";
    case ErrorCode::InfeasibleAllocation: return "InfeasibleAllocation";
    case ErrorCode::DegenerateCorrection: return "DegenerateCorrection";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::AccuracyNotReached: return "AccuracyNotReached";
    case ErrorCode::Unattainable: return "Unattainable";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

inline void require(bool cond, const std::string& what,
                    ErrorCode code = ErrorCode::InvalidArgument) {
  if (!cond) throw Error(code, what);
}

}  // namespace cocrt
