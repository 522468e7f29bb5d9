#include "itarray/aggregate.hpp"

#include <cctype>
#include <cmath>

namespace itarray {

std::string_view agg_kind_name(AggKind kind) noexcept {
  switch (kind) {
    case AggKind::Min: return "min";
    case AggKind::Max: return "max";
    case AggKind::Count: return "count";
    case AggKind::Sum: return "sum";
    case AggKind::SumSq: return "sum_sq";
    case AggKind::Avg: return "avg";
    case AggKind::Stdv: return "stdv";
  }
  return "?";
}

AggKind parse_agg_kind(std::string_view text) {
  for (AggKind k : {AggKind::Min, AggKind::Max, AggKind::Count, AggKind::Sum, AggKind::SumSq, AggKind::Avg,
                    AggKind::Stdv})
    if (agg_kind_name(k) == text) return k;
  if (text == "stddev") return AggKind::Stdv;
  throw Error(ErrorCode::ParseError, "unknown aggregate '" + std::string(text) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

AggregateSpec parse_aggregate(std::string_view text) {
  text = trim(text);
  auto open = text.find('(');
  auto close = text.find(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw Error(ErrorCode::ParseError, "aggregate must look like 'kind(input) as name': " + std::string(text));
  AggregateSpec spec;
  spec.kind = parse_agg_kind(trim(text.substr(0, open)));
  spec.input = std::string(trim(text.substr(open + 1, close - open - 1)));
  std::string_view rest = trim(text.substr(close + 1));
  if (rest.empty()) {
    spec.output = std::string(agg_kind_name(spec.kind)) + "_" + spec.input;
  } else {
    if (rest.substr(0, 2) != "as") throw Error(ErrorCode::ParseError, "expected 'as' in " + std::string(text));
    spec.output = std::string(trim(rest.substr(2)));
  }
  if (spec.input.empty() || spec.output.empty())
    throw Error(ErrorCode::ParseError, "incomplete aggregate '" + std::string(text) + "'");
  return spec;
}

std::string format_aggregate(const AggregateSpec& spec) {
  return std::string(agg_kind_name(spec.kind)) + "(" + spec.input + ") as " + spec.output;
}

ScalarKind aggregate_result_kind(AggKind kind, ScalarKind input_kind) noexcept {
  switch (kind) {
    case AggKind::Count: return ScalarKind::Int64;
    case AggKind::Min:
    case AggKind::Max:
    case AggKind::Sum: return input_kind;
    case AggKind::SumSq:
    case AggKind::Avg:
    case AggKind::Stdv: return ScalarKind::Float64;
  }
  return ScalarKind::Float64;
}

AggregateSource resolve_aggregate_input(const ArraySchema& schema, const AggregateSpec& spec) {
  if (auto a = schema.attr_index(spec.input))
    return {AggregateSource::From::Attr, *a, schema.attrs()[*a].kind};
  if (auto d = schema.dim_index(spec.input)) return {AggregateSource::From::Dim, *d, ScalarKind::Int64};
  throw Error(ErrorCode::UnknownDimension, "aggregate input '" + spec.input + "' is not an attribute or dimension");
}

void Accumulator::add(const Scalar& v) {
  if (v.is_null()) return;
  ++count_;
  switch (kind_) {
    case AggKind::Count: break;
    case AggKind::Min:
    case AggKind::Max: {
      if (count_ == 1) {
        best_ = v;
        break;
      }
      bool better;
      if (input_kind_ == ScalarKind::Int64)
        better = kind_ == AggKind::Min ? v.as_int() < best_.as_int() : v.as_int() > best_.as_int();
      else
        better = kind_ == AggKind::Min ? v.as_double() < best_.as_double() : v.as_double() > best_.as_double();
      if (better) best_ = v;
      break;
    }
    case AggKind::Sum:
      if (input_kind_ == ScalarKind::Int64)
        isum_ += v.as_int();
      else
        sum_ += v.as_double();
      break;
    case AggKind::SumSq: {
      double x = v.as_double();
      sum_sq_ += x * x;
      break;
    }
    case AggKind::Avg:
      sum_ += v.as_double();
      break;
    case AggKind::Stdv: {
      double x = v.as_double();
      sum_ += x;
      sum_sq_ += x * x;
      break;
    }
  }
}

Scalar Accumulator::result() const {
  if (count_ == 0) return kind_ == AggKind::Count ? Scalar(std::int64_t{0}) : Scalar::null();
  switch (kind_) {
    case AggKind::Count: return Scalar(count_);
    case AggKind::Min:
    case AggKind::Max: return best_;
    case AggKind::Sum: return input_kind_ == ScalarKind::Int64 ? Scalar(isum_) : Scalar(sum_);
    case AggKind::SumSq: return Scalar(sum_sq_);
    case AggKind::Avg: return Scalar(finalize_avg(count_, sum_));
    case AggKind::Stdv: return Scalar(finalize_stdv(count_, sum_, sum_sq_));
  }
  return Scalar::null();
}

double finalize_avg(std::int64_t count, double sum) noexcept { return sum / static_cast<double>(count); }

double finalize_stdv(std::int64_t count, double sum, double sum_sq) noexcept {
  double c = static_cast<double>(count);
  double mean = sum / c;
  double var = sum_sq / c - mean * mean;
  return std::sqrt(var > 0.0 ? var : 0.0);
}

}  // namespace itarray
