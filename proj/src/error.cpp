#include "psynth/error.hpp"

namespace psynth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NoSignal: return "NoSignal";
    case ErrorCode::SilentInput: return "SilentInput";
    case ErrorCode::SilentOutput: return "SilentOutput";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteParameters: return "NonFiniteParameters";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace psynth
