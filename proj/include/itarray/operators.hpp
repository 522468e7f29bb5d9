#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "itarray/aggregate.hpp"
#include "itarray/array.hpp"
#include "itarray/delta_store.hpp"
#include "itarray/expression.hpp"
#include "itarray/worker_pool.hpp"

namespace itarray {

// Optional execution resources for operators. `work` accumulates the number
// of input cells each operator reads.
struct ExecContext {
  WorkerPool* pool = nullptr;
  std::atomic<std::int64_t>* work = nullptr;

  void count(std::int64_t n) const noexcept {
    if (work) work->fetch_add(n, std::memory_order_relaxed);
  }
};

// Group by a subset of dimensions (output dimension order follows `dims`).
// Throws UnknownDimension, EmptyAggList.
ChunkedArray groupby_aggregate(const ChunkedArray& a, const std::vector<std::string>& dims,
                               const std::vector<AggregateSpec>& aggs, const ExecContext& ctx = {});

// Group by the value of an int64 attribute. The output has one dimension,
// named after the attribute, spanning the observed [min, max] values; cells
// where the attribute is null are skipped. Throws UnknownDimension,
// EmptyAggList, ExpressionTypeError (attribute not int64).
ChunkedArray groupby_attribute(const ChunkedArray& a, const std::string& attr,
                               const std::vector<AggregateSpec>& aggs, const ExecContext& ctx = {});

// Aggregate over the non-empty cells in the box [c - offsets, c + offsets]
// around every non-empty cell c, clipped to the domain. Halo cells are read
// when present, so a chunk can be evaluated on its own.
// Throws BadOffsets, EmptyAggList.
ChunkedArray window_aggregate(const ChunkedArray& a, const std::vector<std::int64_t>& offsets,
                              const std::vector<AggregateSpec>& aggs, const ExecContext& ctx = {});

// Window aggregate for the core cells of a single chunk, reading the chunk's
// core and halo only. Returns linear index -> aggregate tuple.
std::map<std::int64_t, CellTuple> window_aggregate_chunk(const ArraySchema& schema, const Chunk& chunk,
                                                         const std::vector<std::int64_t>& offsets,
                                                         const std::vector<AggregateSpec>& aggs,
                                                         std::int64_t* work = nullptr);

// Keeps cells where `predicate` holds. Throws ExpressionTypeError.
ChunkedArray filter(const ChunkedArray& a, const Expression& predicate, const ExecContext& ctx = {});

// Equi-join on shared dimension names. Output has a's dimensions and a's
// attributes followed by b's; b's names colliding with a's get suffix "_r".
// Throws NoCommonDims.
ChunkedArray dim_join(const ChunkedArray& a, const ChunkedArray& b, const ExecContext& ctx = {});

struct MergeOptions {
  // Record old/new values of changed cells (Δ⁻ / Δ⁺, all-null marks deletion).
  bool record_delta = false;
};

struct MergeResult {
  ChunkedArray array;
  DeltaPair delta;
  std::int64_t changed = 0;
};

// Each source cell is paired with the extrusion cell at its coordinates
// projected onto the extrusion's dimensions, and replaced by `exp`
// evaluated over (src, ext). An all-null result empties the cell. Source
// cells without an extrusion partner are kept as they are.
// Throws NotASubsetOfDims, ExpressionTypeError.
ChunkedArray merge(const ChunkedArray& source, const ChunkedArray& extrusion, const Expression& exp,
                   const ExecContext& ctx = {});
MergeResult merge_ex(const ChunkedArray& source, const ChunkedArray& extrusion, const Expression& exp,
                     const MergeOptions& options, const ExecContext& ctx = {});

// Like merge, but the extrusion has a single dimension indexed by the value
// of the source's int64 attribute `key`.
MergeResult merge_by_attribute(const ChunkedArray& source, const ChunkedArray& extrusion, const std::string& key,
                               const Expression& exp, const MergeOptions& options, const ExecContext& ctx = {});

// Block aggregation: output coordinate floor((c - 0) / block) per dimension,
// with domain bounds floor-divided the same way (partial edge blocks are
// kept, the missing cells count as empty). Throws BadBlock.
ChunkedArray grid(const ChunkedArray& a, const std::vector<std::int64_t>& block,
                  const std::vector<AggregateSpec>& aggs, const ExecContext& ctx = {});

// Replicates every cell across a block of the scaled-up domain.
// Throws BadBlock.
ChunkedArray xgrid(const ChunkedArray& a, const std::vector<std::int64_t>& block, const ExecContext& ctx = {});

// Keeps the named attributes in the given order. Throws UnknownDimension.
ChunkedArray project(const ChunkedArray& a, const std::vector<std::string>& attrs);

// Rebuilds `a` with the attributes of `attrs` computed by `exps` (one per
// attribute) over each cell. Cells whose result is all-null are dropped.
ChunkedArray apply(const ChunkedArray& a, const std::vector<Attribute>& attrs, const std::vector<Expression>& exps);

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept;

}  // namespace itarray
