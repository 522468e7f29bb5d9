#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "itarray/fixpoint.hpp"

namespace itarray {

enum class Strategy { Naive, ManualIncr, EfficientIncr, EfficientIncrStorage };

std::string_view strategy_name(Strategy s) noexcept;
// "naive", "manual-incr", "efficient-incr", "efficient-incr+storage".
Strategy parse_strategy(std::string_view text);

// What the cell update is allowed to do to the iterative array. Delete-only
// and insert-only workloads let a single delta side drive the aggregates.
enum class Workload { General, DeleteOnly, InsertOnly };

// How a partial aggregate absorbs the partial of a delta.
enum class CombineOp { Sum, Min, Max };

struct AlgebraicEntry {
  AggKind kind;
  std::vector<AggKind> partials;
  bool subtractable = true;
  std::string finalize;  // documentation form, e.g. "s / c"
};

class AlgebraicRegistry {
 public:
  // avg, stdv, sum, count, sum_sq (subtractable); min, max (not).
  static const AlgebraicRegistry& defaults();

  void add(AlgebraicEntry e) { entries_[e.kind] = std::move(e); }
  const AlgebraicEntry* find(AggKind kind) const;

 private:
  std::map<AggKind, AlgebraicEntry> entries_;
};

CombineOp combine_op(AggKind partial) noexcept;

// Per iteration:
//   T- <- partials over the previous step's negative delta
//   T+ <- partials over its positive delta (deletion markers skipped)
//   C  <- T+ on the first iteration, else (C - T-) + T+
//   F  <- finalize(C) on the groups that changed
//   A  <- merge(A, F, delta), recording the next deltas
class IncrementalPlan {
 public:
  // Throws NotIncrementalizable and anything Plan::rewrite_naive throws.
  static IncrementalPlan rewrite(const FixPointSpec& spec, const ArraySchema& schema,
                                 const AlgebraicRegistry& registry = AlgebraicRegistry::defaults(),
                                 Workload workload = Workload::General);

  const Plan& naive() const noexcept { return naive_; }
  Workload workload() const noexcept { return workload_; }
  // Partial aggregates kept in the carried state, including the cell count
  // `_n` that decides when a group disappears.
  const std::vector<AggregateSpec>& partials() const noexcept { return partials_; }
  std::vector<std::string> describe() const;

  ChunkedArray partial_aggregate(const ChunkedArray& cells, const ExecContext& ctx) const;
  // C op T cellwise; groups whose `_n` drops to zero vanish.
  ChunkedArray combine(const ChunkedArray& c, const ChunkedArray& t, MergeMode mode) const;
  // Finalized aggregates (the f outputs of the fixpoint spec) for the cells of `c`.
  ChunkedArray finalize(const ChunkedArray& c) const;
  bool needs_min_max() const noexcept { return has_min_max_; }

 private:
  Plan naive_;
  Workload workload_ = Workload::General;
  std::vector<AggregateSpec> partials_;
  bool has_min_max_ = false;
};

inline IncrementalPlan rewrite_incremental(const FixPointSpec& spec, const ArraySchema& schema,
                                           const AlgebraicRegistry& registry = AlgebraicRegistry::defaults(),
                                           Workload workload = Workload::General) {
  return IncrementalPlan::rewrite(spec, schema, registry, workload);
}

// In-memory variant: deltas come from the merge itself.
RunResult run_incremental_array(const IncrementalPlan& plan, const ChunkedArray& a, const ExecOptions& exec = {});

// Store-backed variant. The iterative array is read from and written to
// `store` under spec.array; with `storage_deltas` the deltas are scanned
// from the store and the carried state lives there too (as
// "<array>.partials"), updated through subtract/add annotated stores.
RunResult run_incremental(const IncrementalPlan& plan, VersionedStore& store, bool storage_deltas = true,
                          const ExecOptions& exec = {});

}  // namespace itarray
