#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace filippov {

enum class ErrorKind {
  // Input errors.
  DimensionMismatch,
  ZeroNormal,
  NonFiniteEntry,
  UnknownFixture,
  MalformedInput,
  InvalidOptions,
  NotFullRowRank,
  // Numerical failures.
  RankDeficiencyUnsupported,
  ResidualTooLarge,
  EventNotBracketed,
  StepSizeUnderflow,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroNormal: return "ZeroNormal";
    case ErrorKind::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorKind::UnknownFixture: return "UnknownFixture";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::InvalidOptions: return "InvalidOptions";
    case ErrorKind::NotFullRowRank: return "NotFullRowRank";
    case ErrorKind::RankDeficiencyUnsupported: return "RankDeficiencyUnsupported";
    case ErrorKind::ResidualTooLarge: return "ResidualTooLarge";
    case ErrorKind::EventNotBracketed: return "EventNotBracketed";
    case ErrorKind::StepSizeUnderflow: return "StepSizeUnderflow";
  }
  return "Unknown";
}

/// True for errors caused by the caller's data rather than by numerics.
constexpr bool is_input_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RankDeficiencyUnsupported:
    case ErrorKind::ResidualTooLarge:
    case ErrorKind::EventNotBracketed:
    case ErrorKind::StepSizeUnderflow:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace filippov
