#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace soilfusion {

enum class ErrorKind {
  DegenerateImage,
  EmptyInput,
  MixedSampleIds,
  NonPositiveCertified,
  UnknownElement,
  UnknownCategory,
  MissingBlock,
  TooFewSamples,
  NonFiniteInput,
  DimensionMismatch,
  NoOobRows,
  LengthMismatch,
  ConstantTruth,
  ZeroVariance,
  ZeroMean,
  ZeroBaseline,
  ZeroVarianceColumn,
  DegenerateInput,
  InvalidSpec,
  SchemaError,
  NoImagesFound,
  DecodeError,
  IoError,
  ConfigError,
  UnmatchedIds,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateImage: return "DegenerateImage";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::MixedSampleIds: return "MixedSampleIds";
    case ErrorKind::NonPositiveCertified: return "NonPositiveCertified";
    case ErrorKind::UnknownElement: return "UnknownElement";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::MissingBlock: return "MissingBlock";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NoOobRows: return "NoOobRows";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConstantTruth: return "ConstantTruth";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::ZeroMean: return "ZeroMean";
    case ErrorKind::ZeroBaseline: return "ZeroBaseline";
    case ErrorKind::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::NoImagesFound: return "NoImagesFound";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::UnmatchedIds: return "UnmatchedIds";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace soilfusion
