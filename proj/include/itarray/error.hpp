#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace itarray {

enum class ErrorCode {
  InvalidSchema,
  OutOfDomain,
  ArityMismatch,
  SchemaMismatch,
  UnknownArray,
  UnknownVersion,
  UnknownDimension,
  EmptyAggList,
  BadOffsets,
  ExpressionTypeError,
  ExpressionSyntaxError,
  NoCommonDims,
  NotASubsetOfDims,
  BadBlock,
  UnsupportedAssignment,
  NonConvergence,
  NotIncrementalizable,
  OverlapTooSmall,
  OverlapTooLarge,
  BadPyramidSpec,
  SeedInvalid,
  NoPriorState,
  TooFewPoints,
  BadParams,
  StrategyUnavailable,
  ParseError,
  IoError,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// All engine failures surface as this exception; `code()` identifies the
// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace itarray
