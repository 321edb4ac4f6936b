#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chipledger {

enum class ErrorCode {
  GeometryInvalid,
  CapacityExceeded,
  ColumnOutOfRange,
  PreprocessMissing,
  KExceedsN,
  UnknownGeneration,
  PrimeSearchExhausted,
  SignatureMalformed,
  StateMismatch,
  StateUnchanged,
  CycleDetected,
  MultipleSinks,
  NonceExhausted,
  UnknownChip,
  ConfigInvalid,
  Malformed,
  InvalidArgument,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::GeometryInvalid: return "GeometryInvalid";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::ColumnOutOfRange: return "ColumnOutOfRange";
    case ErrorCode::PreprocessMissing: return "PreprocessMissing";
    case ErrorCode::KExceedsN: return "KExceedsN";
    case ErrorCode::UnknownGeneration: return "UnknownGeneration";
    case ErrorCode::PrimeSearchExhausted: return "PrimeSearchExhausted";
    case ErrorCode::SignatureMalformed: return "SignatureMalformed";
    case ErrorCode::StateMismatch: return "StateMismatch";
    case ErrorCode::StateUnchanged: return "StateUnchanged";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::MultipleSinks: return "MultipleSinks";
    case ErrorCode::NonceExhausted: return "NonceExhausted";
    case ErrorCode::UnknownChip: return "UnknownChip";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can report it by name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace chipledger
