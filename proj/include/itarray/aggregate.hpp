#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "itarray/array.hpp"

namespace itarray {

enum class AggKind { Min, Max, Count, Sum, SumSq, Avg, Stdv };

std::string_view agg_kind_name(AggKind kind) noexcept;
AggKind parse_agg_kind(std::string_view text);

// `kind(input) as output`. The input names an attribute or a dimension of
// the aggregated array; null scalars and empty cells never contribute.
struct AggregateSpec {
  std::string output;
  AggKind kind = AggKind::Count;
  std::string input;

  friend bool operator==(const AggregateSpec&, const AggregateSpec&) = default;
};

// Text form: "avg(d) as mu".
AggregateSpec parse_aggregate(std::string_view text);
std::string format_aggregate(const AggregateSpec& spec);

// Result attribute kind of `spec` over an input of kind `input_kind`.
ScalarKind aggregate_result_kind(AggKind kind, ScalarKind input_kind) noexcept;

// Where an aggregate reads its value from.
struct AggregateSource {
  enum class From { Attr, Dim } from = From::Attr;
  std::size_t index = 0;
  ScalarKind kind = ScalarKind::Float64;
};

// Throws UnknownDimension when the input names neither an attribute nor a
// dimension of `schema`.
AggregateSource resolve_aggregate_input(const ArraySchema& schema, const AggregateSpec& spec);

// Running state of one aggregate over one group. Values must be fed in
// canonical cell order for float results to be reproducible.
class Accumulator {
 public:
  Accumulator() = default;
  Accumulator(AggKind kind, ScalarKind input_kind) : kind_(kind), input_kind_(input_kind) {}

  void add(const Scalar& v);
  bool empty() const noexcept { return count_ == 0; }
  std::int64_t count() const noexcept { return count_; }
  Scalar result() const;

 private:
  AggKind kind_ = AggKind::Count;
  ScalarKind input_kind_ = ScalarKind::Float64;
  std::int64_t count_ = 0;
  std::int64_t isum_ = 0;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
  Scalar best_;
};

// avg and stdv from their (count, sum, sum_sq) partials. stdv is the
// population deviation sqrt(s2/c - (s/c)^2), clamped at zero.
double finalize_avg(std::int64_t count, double sum) noexcept;
double finalize_stdv(std::int64_t count, double sum, double sum_sq) noexcept;

}  // namespace itarray
