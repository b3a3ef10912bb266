#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace varphase {

enum class ErrorCode {
  NonFiniteInput,
  InvalidArgument,
  UnknownModel,
  MissingParam,
  NonPositiveParam,
  UnknownParam,
  NoCycleFound,
  UnstableCycle,
  BadOrder,
  IntegrationFailure,
  ComplexMultipliers,
  DegenerateEigenbasis,
  NewtonDivergence,
  DegenerateMinimum,
  BadCovariance,
  BlowUp,
  BadDecay,
  InsufficientSamples,
  ConfigParse,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::MissingParam: return "MissingParam";
    case ErrorCode::NonPositiveParam: return "NonPositiveParam";
    case ErrorCode::UnknownParam: return "UnknownParam";
    case ErrorCode::NoCycleFound: return "NoCycleFound";
    case ErrorCode::UnstableCycle: return "UnstableCycle";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::IntegrationFailure: return "IntegrationFailure";
    case ErrorCode::ComplexMultipliers: return "ComplexMultipliers";
    case ErrorCode::DegenerateEigenbasis: return "DegenerateEigenbasis";
    case ErrorCode::NewtonDivergence: return "NewtonDivergence";
    case ErrorCode::DegenerateMinimum: return "DegenerateMinimum";
    case ErrorCode::BadCovariance: return "BadCovariance";
    case ErrorCode::BlowUp: return "BlowUp";
    case ErrorCode::BadDecay: return "BadDecay";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::ConfigParse: return "ConfigParse";
  }
  return "Unknown";
}

/// Domain error carrying the originating module's error name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace varphase
