#include "itarray/multires.hpp"

namespace itarray {

std::int64_t coarse_radius(std::int64_t r, std::int64_t b) noexcept {
  if (r <= 0) return 0;
  return floor_div(r - 1, b) + 1;
}

namespace {

std::vector<std::int64_t> block_of(const PyramidSpec& p, const ArraySchema& s) {
  if (p.block.empty()) return std::vector<std::int64_t>(s.rank(), 2);
  if (p.block.size() != s.rank()) throw Error(ErrorCode::BadPyramidSpec, "block needs one extent per dimension");
  for (auto b : p.block)
    if (b < 1) throw Error(ErrorCode::BadPyramidSpec, "block extents must be positive");
  return p.block;
}

FixPointSpec spec_for(const FixPointSpec& spec, const PyramidSpec& p, int level) {
  return level > 0 && p.level_spec ? p.level_spec(spec, level) : spec;
}

RunResult run_level(const LevelRunner& runner, const FixPointSpec& spec, const ChunkedArray& a) {
  return runner ? runner(spec, a) : run_array(spec, a);
}

// Upsamples the converged coarse level and merges it into the finer input.
ChunkedArray seed(const ChunkedArray& fine, const ChunkedArray& coarse_out, const PyramidSpec& p) {
  auto block = block_of(p, fine.schema());
  ChunkedArray up = xgrid(coarse_out, block);
  ChunkedArray seeded = merge(fine, up, p.seed_merge);
  if (seeded.size() != fine.size())
    throw Error(ErrorCode::SeedInvalid, "seeding removed cells from the finer level");
  for (const auto& [key, ch] : fine.chunks())
    for (const auto& [lin, t] : ch->core)
      if (!seeded.find_linear(lin)) throw Error(ErrorCode::SeedInvalid, "seeding changed the cell set");
  return seeded;
}

void materialize(VersionedStore* store, const FixPointSpec& spec, int level, const ChunkedArray& out) {
  if (store) store->store(spec.array + "@L" + std::to_string(level), out);
}

// Solves levels [0, from] top-down; level `from` is seeded from
// state.outputs[from + 1] when it exists.
void solve_from(PyramidState& state, int from, const FixPointSpec& spec, const PyramidSpec& p,
                const LevelRunner& runner, VersionedStore* store) {
  for (int level = from; level >= 0; --level) {
    const ChunkedArray& in = state.inputs[level];
    ChunkedArray start = level + 1 < static_cast<int>(state.inputs.size())
                             ? seed(in, state.outputs[level + 1], p)
                             : in;
    RunResult r = run_level(runner, spec_for(spec, p, level), start);
    state.seeded[level] = std::move(start);
    state.outputs[level] = std::move(r.final);
    state.traces[level] = std::move(r.trace);
    materialize(store, spec, level, state.outputs[level]);
  }
  state.materialized = true;
}

}  // namespace

PyramidState build_pyramid(const ChunkedArray& a, const PyramidSpec& p) {
  if (p.levels < 1) throw Error(ErrorCode::BadPyramidSpec, "a pyramid needs at least one level");
  const ArraySchema& s = a.schema();
  auto block = block_of(p, s);
  if (p.levels > 1) {
    if (p.grid_aggs.empty()) throw Error(ErrorCode::BadPyramidSpec, "no grid aggregates");
    if (p.project.size() != s.arity())
      throw Error(ErrorCode::BadPyramidSpec, "projection needs one expression per attribute");
    if (!p.seed_merge.valid()) throw Error(ErrorCode::BadPyramidSpec, "no seed merge expression");
  }
  PyramidState st;
  st.inputs.push_back(a);
  for (int level = 1; level < p.levels; ++level) {
    ChunkedArray g = grid(st.inputs.back(), block, p.grid_aggs);
    if (p.keep.valid()) g = filter(g, p.keep);
    st.inputs.push_back(apply(g, s.attrs(), p.project));
  }
  st.seeded.resize(p.levels);
  st.outputs.resize(p.levels);
  st.traces.resize(p.levels);
  return st;
}

MultiresResult run_multires(PyramidState& state, const FixPointSpec& spec, const PyramidSpec& p,
                            const LevelRunner& runner, VersionedStore* store) {
  if (state.inputs.empty()) throw Error(ErrorCode::BadPyramidSpec, "empty pyramid");
  solve_from(state, static_cast<int>(state.inputs.size()) - 1, spec, p, runner, store);
  return {state.outputs[0], state.traces};
}

RerunResult rerun_on_change(PyramidState& state, const ChunkedArray& changed, const FixPointSpec& spec,
                            const PyramidSpec& p, const LevelRunner& runner, VersionedStore* store) {
  if (!state.materialized) throw Error(ErrorCode::NoPriorState, "no previous multi-resolution run");
  PyramidState fresh = build_pyramid(changed, p);
  if (fresh.inputs.size() != state.inputs.size())
    throw Error(ErrorCode::BadPyramidSpec, "pyramid depth changed between runs");
  int coarsest = -1;
  for (int level = static_cast<int>(fresh.inputs.size()) - 1; level >= 0; --level)
    if (!fresh.inputs[level].schema().same_shape(state.inputs[level].schema()) ||
        !same_cells(fresh.inputs[level], state.inputs[level])) {
      coarsest = level;
      break;
    }
  if (coarsest < 0) return {state.outputs[0], 0};
  for (int level = 0; level <= coarsest; ++level) state.inputs[level] = std::move(fresh.inputs[level]);
  solve_from(state, coarsest, spec, p, runner, store);
  return {state.outputs[0], coarsest + 1};
}

}  // namespace itarray
