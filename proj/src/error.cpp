#include "mars/error.hpp"

namespace mars {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidMarginal: return "InvalidMarginal";
    case ErrorCode::InvalidCost: return "InvalidCost";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::ZeroSourceClass: return "ZeroSourceClass";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::InvalidProportions: return "InvalidProportions";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

}  // namespace mars
