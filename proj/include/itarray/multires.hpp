#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "itarray/fixpoint.hpp"

namespace itarray {

// Coarse-to-fine cascade.
//
// Level i+1 is grid(level i, block, grid_aggs), filtered by `keep` and
// mapped back to the base attributes by `project` (one expression per base
// attribute, evaluated over the grid output). Each finer level is seeded by
// merging the upsampled converged result of the level above into it with
// `seed_merge` (src = the level's own cells, ext = the upsampled cells).
struct PyramidSpec {
  int levels = 1;
  std::vector<std::int64_t> block;  // empty: 2 per dimension
  std::vector<AggregateSpec> grid_aggs;
  Expression keep;
  std::vector<Expression> project;
  Expression seed_merge;
  // Adjusts the fixpoint spec for a coarser level (e.g. a smaller window).
  std::function<FixPointSpec(const FixPointSpec& base, int level)> level_spec;
};

struct PyramidState {
  std::vector<ChunkedArray> inputs;   // pixelated input per level; 0 = original
  std::vector<ChunkedArray> seeded;   // what the fixpoint started from
  std::vector<ChunkedArray> outputs;  // converged result per level
  std::vector<IterationTrace> traces;
  bool materialized = false;
};

// Runs one fixpoint to convergence.
using LevelRunner = std::function<RunResult(const FixPointSpec& spec, const ChunkedArray& a)>;

// Throws BadPyramidSpec.
PyramidState build_pyramid(const ChunkedArray& a, const PyramidSpec& p);

struct MultiresResult {
  ChunkedArray final;
  std::vector<IterationTrace> traces;  // index = level
};

// Solves the coarsest level first and seeds every finer one. `runner`
// defaults to run_array. When `store` is given, every level's result is
// stored as "<spec.array>@L<i>". Throws SeedInvalid when a seeded level no
// longer has its input's cells.
MultiresResult run_multires(PyramidState& state, const FixPointSpec& spec, const PyramidSpec& p,
                            const LevelRunner& runner = {}, VersionedStore* store = nullptr);

struct RerunResult {
  ChunkedArray final;
  int levels_recomputed = 0;
};

// Rebuilds the pyramid from `changed` and recomputes from the coarsest level
// whose input differs from the previous run downward, reusing the stored
// results above it. Throws NoPriorState.
RerunResult rerun_on_change(PyramidState& state, const ChunkedArray& changed, const FixPointSpec& spec,
                            const PyramidSpec& p, const LevelRunner& runner = {}, VersionedStore* store = nullptr);

// Radius a coarse level needs so that blocks joined there are joined at the
// finer level too: floor((r - 1) / b) + 1 (0 stays 0).
std::int64_t coarse_radius(std::int64_t r, std::int64_t b) noexcept;

}  // namespace itarray
