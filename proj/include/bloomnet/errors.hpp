#pragma once

#include <stdexcept>
#include <string>

namespace bloomnet {

enum class ErrorCode {
  // signal_metrics
  ZeroVarianceSignal,
  LengthMismatch,
  ZeroTarget,
  // model_core
  InputTooShort,
  ShapeMismatch,
  DepthOutOfRange,
  InvalidConfig,
  CorruptCheckpoint,
  // training
  DataEmpty,
  DivergenceDetected,
  StageOrderViolation,
  NotFullyTrained,
  // data
  EmptyCorpus,
  UnreadableFile,
  SampleRateMismatch,
  UnsupportedFormat,
  // evaluation
  DepthExceedsTrained,
  ManifestMismatch,
};

const char* to_string(ErrorCode code);

/// Every library failure is reported as an Error carrying one of the codes
/// above; the CLI maps codes onto process exit statuses.
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
    case ErrorCode::ZeroVarianceSignal: return "ZeroVarianceSignal";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroTarget: return "ZeroTarget";
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DepthOutOfRange: return "DepthOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::DataEmpty: return "DataEmpty";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::StageOrderViolation: return "StageOrderViolation";
    case ErrorCode::NotFullyTrained: return "NotFullyTrained";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnreadableFile: return "UnreadableFile";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DepthExceedsTrained: return "DepthExceedsTrained";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
  }
  return "Unknown";
}

}  // namespace bloomnet
