#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "itarray/aggregate.hpp"
#include "itarray/array.hpp"
#include "itarray/delta_store.hpp"
#include "itarray/expression.hpp"
#include "itarray/operators.hpp"

namespace itarray {

// How cells are grouped for the aggregates of one iteration.
//
//   window     every dimension maps to itself with a +-offset
//   groupby    a subset of the dimensions, no offsets
//   attribute  cells sharing the value of an int64 attribute
//   mapping    general form (dim, offset) per target; classify() turns it
//              into one of the above or rejects it
struct AssignmentFunction {
  enum class Kind { Window, GroupBy, Attribute, Mapping };
  struct Target {
    std::string dim;
    std::int64_t offset = 0;
    friend bool operator==(const Target&, const Target&) = default;
  };

  Kind kind = Kind::Mapping;
  std::vector<std::int64_t> offsets;  // Window
  std::vector<std::string> dims;      // GroupBy
  std::string attr;                   // Attribute
  std::vector<Target> targets;        // Mapping

  static AssignmentFunction window(std::vector<std::int64_t> offsets);
  static AssignmentFunction groupby(std::vector<std::string> dims);
  static AssignmentFunction attribute(std::string attr);
  static AssignmentFunction mapping(std::vector<Target> targets);

  // "window 1,1" | "groupby x,y" | "attribute label" | "map x+-1,y"
  static AssignmentFunction parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const AssignmentFunction&, const AssignmentFunction&) = default;
};

struct Classified {
  enum class Strategy { GroupBy, Window, Attribute } strategy = Strategy::GroupBy;
  std::vector<std::string> dims;
  std::vector<std::int64_t> offsets;
  std::string attr;
};

// Throws UnsupportedAssignment (mixed group-by and window), UnknownDimension,
// BadOffsets.
Classified classify(const AssignmentFunction& pi, const ArraySchema& schema);

// Cell update computed by code rather than an expression: receives the
// current array and the aggregate array and returns the next array.
struct NativeUpdate {
  std::string name;
  std::function<ChunkedArray(const ChunkedArray& a, const ChunkedArray& aggregates, const ExecContext& ctx)> fn;
};

struct Termination {
  enum class Kind { DiffCount, SumAbsChange, MaxAbsChange } kind = Kind::DiffCount;
  std::string attr;  // for the change aggregates

  static Termination parse(std::string_view text);
  std::string to_string() const;
};

// Cellwise comparison aggregate between consecutive states. Appearing or
// vanishing cells count as a change of |value| for the change aggregates.
double termination_value(const Termination& t, const ChunkedArray& before, const ChunkedArray& after);

struct FixPointSpec {
  std::string array;
  AssignmentFunction pi;
  std::vector<AggregateSpec> f;
  std::variant<Expression, NativeUpdate> delta;
  Termination termination;
  double epsilon = 0.0;
  std::int64_t max_iterations = 10000;
};

// Key-value text form, one `key = value` per line, `#` comments:
//   array, pi, f (aggregates separated by ';'), delta, termination,
//   epsilon, max_iterations. A native delta is written as `native:<name>`
//   and resolved through `natives` when parsing. Throws ParseError.
std::string format_spec(const FixPointSpec& spec);
FixPointSpec parse_spec(std::string_view text,
                        const std::function<std::optional<NativeUpdate>(const std::string&)>& natives = {});

struct IterationRecord {
  std::int64_t iteration = 0;
  std::int64_t changed_cells = 0;
  double termination_value = 0.0;
  std::int64_t cells_touched = 0;
  std::int64_t groups_updated = 0;  // aggregate cells handed to the update
  bool shuffle_performed = false;
  std::int64_t mini_index = 0;
  std::int64_t major_index = 0;
  std::int64_t shuffled_chunks = 0;
  std::int64_t shuffled_cells = 0;
  std::int64_t shuffled_bytes = 0;
  double wall_time = 0.0;  // seconds
};

using IterationTrace = std::vector<IterationRecord>;

struct RunResult {
  ChunkedArray final;
  IterationTrace trace;
  bool converged = false;
};

// Raised when max_iterations is reached; still carries the last state.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(RunResult result)
      : Error(ErrorCode::NonConvergence,
              "no convergence after " + std::to_string(result.trace.size()) + " iterations"),
        result_(std::move(result)) {}
  const RunResult& result() const noexcept { return result_; }

 private:
  RunResult result_;
};

// The rewritten naive loop: aggregate by pi, pair with A, apply delta,
// compare.
class Plan {
 public:
  static Plan rewrite_naive(const FixPointSpec& spec, const ArraySchema& schema);

  const FixPointSpec& spec() const noexcept { return spec_; }
  const Classified& pi() const noexcept { return pi_; }
  // One line per plan step.
  std::vector<std::string> describe() const;

  ChunkedArray aggregate(const ChunkedArray& a, const ExecContext& ctx) const;
  // Applies the update to the cells that have a partner in `aggregates`.
  MergeResult update(const ChunkedArray& a, const ChunkedArray& aggregates, const MergeOptions& options,
                     const ExecContext& ctx) const;

 private:
  FixPointSpec spec_;
  Classified pi_;
};

struct ExecOptions {
  std::size_t workers = 1;
};

// Iterates the naive plan on the latest version of spec.array in `store`
// until the termination value drops to epsilon. Every state is stored as a
// new version. Throws NonConvergenceError, UnknownArray.
RunResult run(const FixPointSpec& spec, VersionedStore& store, const ExecOptions& exec = {});

// Same loop on an in-memory array without storing versions.
RunResult run_array(const FixPointSpec& spec, const ChunkedArray& a, const ExecOptions& exec = {});

}  // namespace itarray
