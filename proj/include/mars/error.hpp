#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mars {

enum class ErrorCode {
  DimensionMismatch,
  InvalidMarginal,
  InvalidCost,
  NonSquare,
  TooLarge,
  DegenerateInput,
  EmptyInput,
  EmptyCluster,
  MissingClass,
  ZeroSourceClass,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyTestSet,
  InvalidProportions,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; code() identifies the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mars
