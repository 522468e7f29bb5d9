#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace itarray {

enum class ScalarKind { Float64, Int64 };

std::string_view scalar_kind_name(ScalarKind kind) noexcept;
ScalarKind parse_scalar_kind(std::string_view text);

// A single attribute value: null, a 64-bit integer or a double.
// Equality is bit-exact (two doubles compare equal iff their bit patterns do).
class Scalar {
 public:
  Scalar() = default;
  Scalar(double v) : value_(v) {}
  Scalar(std::int64_t v) : value_(v) {}
  Scalar(int v) : value_(static_cast<std::int64_t>(v)) {}

  static Scalar null() { return Scalar(); }

  bool is_null() const noexcept { return std::holds_alternative<std::monostate>(value_); }
  bool is_int() const noexcept { return std::holds_alternative<std::int64_t>(value_); }
  bool is_float() const noexcept { return std::holds_alternative<double>(value_); }

  // Numeric view; null reads as 0.
  double as_double() const noexcept {
    if (auto* i = std::get_if<std::int64_t>(&value_)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&value_)) return *d;
    return 0.0;
  }
  std::int64_t as_int() const noexcept {
    if (auto* i = std::get_if<std::int64_t>(&value_)) return *i;
    if (auto* d = std::get_if<double>(&value_)) return static_cast<std::int64_t>(*d);
    return 0;
  }

  friend bool operator==(const Scalar& a, const Scalar& b) noexcept {
    if (a.value_.index() != b.value_.index()) return false;
    if (a.is_float())
      return std::bit_cast<std::uint64_t>(std::get<double>(a.value_)) ==
             std::bit_cast<std::uint64_t>(std::get<double>(b.value_));
    if (a.is_int()) return std::get<std::int64_t>(a.value_) == std::get<std::int64_t>(b.value_);
    return true;
  }

 private:
  std::variant<std::monostate, std::int64_t, double> value_;
};

using CellTuple = std::vector<Scalar>;

inline bool all_null(const CellTuple& t) noexcept {
  for (const auto& s : t)
    if (!s.is_null()) return false;
  return true;
}

inline CellTuple null_tuple(std::size_t arity) { return CellTuple(arity, Scalar::null()); }

// Shortest text that parses back to the identical bits ("_" for null).
std::string format_scalar(const Scalar& s);
Scalar parse_scalar(std::string_view text, ScalarKind kind);

}  // namespace itarray
