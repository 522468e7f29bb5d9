#include "itarray/scalar.hpp"

#include <charconv>
#include <cmath>

#include "itarray/error.hpp"

namespace itarray {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnknownArray: return "UnknownArray";
    case ErrorCode::UnknownVersion: return "UnknownVersion";
    case ErrorCode::UnknownDimension: return "UnknownDimension";
    case ErrorCode::EmptyAggList: return "EmptyAggList";
    case ErrorCode::BadOffsets: return "BadOffsets";
    case ErrorCode::ExpressionTypeError: return "ExpressionTypeError";
    case ErrorCode::ExpressionSyntaxError: return "ExpressionSyntaxError";
    case ErrorCode::NoCommonDims: return "NoCommonDims";
    case ErrorCode::NotASubsetOfDims: return "NotASubsetOfDims";
    case ErrorCode::BadBlock: return "BadBlock";
    case ErrorCode::UnsupportedAssignment: return "UnsupportedAssignment";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NotIncrementalizable: return "NotIncrementalizable";
    case ErrorCode::OverlapTooSmall: return "OverlapTooSmall";
    case ErrorCode::OverlapTooLarge: return "OverlapTooLarge";
    case ErrorCode::BadPyramidSpec: return "BadPyramidSpec";
    case ErrorCode::SeedInvalid: return "SeedInvalid";
    case ErrorCode::NoPriorState: return "NoPriorState";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::StrategyUnavailable: return "StrategyUnavailable";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view scalar_kind_name(ScalarKind kind) noexcept {
  return kind == ScalarKind::Float64 ? "float64" : "int64";
}

ScalarKind parse_scalar_kind(std::string_view text) {
  if (text == "float64" || text == "float" || text == "double") return ScalarKind::Float64;
  if (text == "int64" || text == "int") return ScalarKind::Int64;
  throw Error(ErrorCode::ParseError, "unknown scalar kind '" + std::string(text) + "'");
}

std::string format_scalar(const Scalar& s) {
  if (s.is_null()) return "_";
  char buf[64];
  std::to_chars_result r;
  if (s.is_int()) {
    r = std::to_chars(buf, buf + sizeof buf, s.as_int());
  } else {
    double d = s.as_double();
    if (std::isnan(d)) return "nan";
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
    r = std::to_chars(buf, buf + sizeof buf, d);
  }
  return std::string(buf, r.ptr);
}

Scalar parse_scalar(std::string_view text, ScalarKind kind) {
  if (text == "_") return Scalar::null();
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (kind == ScalarKind::Int64) {
    std::int64_t v = 0;
    auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc() || r.ptr != last)
      throw Error(ErrorCode::ParseError, "bad int64 '" + std::string(text) + "'");
    return Scalar(v);
  }
  if (text == "nan") return Scalar(std::nan(""));
  if (text == "inf") return Scalar(HUGE_VAL);
  if (text == "-inf") return Scalar(-HUGE_VAL);
  double v = 0;
  auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc() || r.ptr != last)
    throw Error(ErrorCode::ParseError, "bad float64 '" + std::string(text) + "'");
  return Scalar(v);
}

}  // namespace itarray
