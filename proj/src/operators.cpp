#include "itarray/operators.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace itarray {

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

namespace {

struct BoundAgg {
  AggregateSpec spec;
  AggregateSource src;
};

std::vector<BoundAgg> bind_aggs(const ArraySchema& schema, const std::vector<AggregateSpec>& aggs) {
  if (aggs.empty()) throw Error(ErrorCode::EmptyAggList, "no aggregates given");
  std::vector<BoundAgg> out;
  for (const auto& a : aggs) out.push_back({a, resolve_aggregate_input(schema, a)});
  return out;
}

std::vector<Attribute> agg_attrs(const std::vector<BoundAgg>& aggs) {
  std::vector<Attribute> out;
  for (const auto& a : aggs) out.push_back({a.spec.output, aggregate_result_kind(a.spec.kind, a.src.kind)});
  return out;
}

std::vector<Accumulator> fresh(const std::vector<BoundAgg>& aggs) {
  std::vector<Accumulator> acc;
  acc.reserve(aggs.size());
  for (const auto& a : aggs) acc.emplace_back(a.spec.kind, a.src.kind);
  return acc;
}

void feed(std::vector<Accumulator>& acc, const std::vector<BoundAgg>& aggs, const CellTuple& t,
          std::span<const std::int64_t> coord) {
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    const auto& s = aggs[i].src;
    if (s.from == AggregateSource::From::Attr)
      acc[i].add(t[s.index]);
    else
      acc[i].add(Scalar(coord[s.index]));
  }
}

CellTuple results(const std::vector<Accumulator>& acc) {
  CellTuple t;
  t.reserve(acc.size());
  for (const auto& a : acc) t.push_back(a.result());
  return t;
}

std::size_t require_dim(const ArraySchema& schema, const std::string& name) {
  auto d = schema.dim_index(name);
  if (!d) throw Error(ErrorCode::UnknownDimension, "no dimension '" + name + "'");
  return *d;
}

// Runs fn(chunk) for every chunk of `a`, in parallel when a pool is given.
template <class Fn>
void for_chunks(const ChunkedArray& a, const ExecContext& ctx, Fn&& fn) {
  std::vector<const Chunk*> list;
  for (const auto& [key, ch] : a.chunks()) list.push_back(ch.get());
  if (ctx.pool && ctx.pool->size() > 1 && list.size() > 1)
    ctx.pool->parallel_for(list.size(), [&](std::size_t i) { fn(i, *list[i]); });
  else
    for (std::size_t i = 0; i < list.size(); ++i) fn(i, *list[i]);
}

// Visits the in-domain box [c - r, c + r] in row-major order.
template <class Fn>
void for_box(const ArraySchema& schema, std::span<const std::int64_t> c, const std::vector<std::int64_t>& r,
             Coordinate& scratch, Fn&& fn) {
  const std::size_t d = schema.rank();
  Coordinate lo(d), hi(d);
  for (std::size_t i = 0; i < d; ++i) {
    lo[i] = std::max(c[i] - r[i], schema.dims()[i].lower);
    hi[i] = std::min(c[i] + r[i], schema.dims()[i].upper);
  }
  scratch = lo;
  for (;;) {
    fn(scratch);
    std::size_t i = d;
    while (i > 0) {
      --i;
      if (scratch[i] < hi[i]) {
        ++scratch[i];
        break;
      }
      scratch[i] = lo[i];
      if (i == 0) return;
    }
    if (d == 0) return;
  }
}

}  // namespace

ChunkedArray groupby_aggregate(const ChunkedArray& a, const std::vector<std::string>& dims,
                               const std::vector<AggregateSpec>& aggs, const ExecContext& ctx) {
  const ArraySchema& s = a.schema();
  if (dims.empty()) throw Error(ErrorCode::UnknownDimension, "group-by needs at least one dimension");
  std::vector<std::size_t> idx;
  std::vector<Dimension> out_dims;
  std::vector<std::int64_t> out_chunks;
  for (const auto& n : dims) {
    idx.push_back(require_dim(s, n));
    out_dims.push_back(s.dims()[idx.back()]);
    out_chunks.push_back(s.chunk_extents()[idx.back()]);
  }
  auto bound = bind_aggs(s, aggs);
  ArraySchema out_schema(out_dims, agg_attrs(bound), out_chunks);

  std::map<std::int64_t, std::vector<Accumulator>> groups;
  Coordinate c(s.rank()), g(idx.size());
  for (const auto& cell : a.cells()) {
    s.coordinate_into(cell.index, c);
    for (std::size_t j = 0; j < idx.size(); ++j) g[j] = c[idx[j]];
    auto [it, fresh_group] = groups.try_emplace(out_schema.linear(g));
    if (fresh_group) it->second = fresh(bound);
    feed(it->second, bound, *cell.tuple, c);
  }
  ctx.count(static_cast<std::int64_t>(a.size()));

  ChunkedArray out(out_schema);
  for (const auto& [lin, acc] : groups) out.set_linear(lin, results(acc));
  return out;
}

ChunkedArray groupby_attribute(const ChunkedArray& a, const std::string& attr,
                               const std::vector<AggregateSpec>& aggs, const ExecContext& ctx) {
  const ArraySchema& s = a.schema();
  auto ai = s.attr_index(attr);
  if (!ai) throw Error(ErrorCode::UnknownDimension, "no attribute '" + attr + "'");
  if (s.attrs()[*ai].kind != ScalarKind::Int64)
    throw Error(ErrorCode::ExpressionTypeError, "group key '" + attr + "' must be int64");
  auto bound = bind_aggs(s, aggs);

  std::map<std::int64_t, std::vector<Accumulator>> groups;
  Coordinate c(s.rank());
  for (const auto& cell : a.cells()) {
    const Scalar& key = (*cell.tuple)[*ai];
    if (key.is_null()) continue;
    s.coordinate_into(cell.index, c);
    auto [it, fresh_group] = groups.try_emplace(key.as_int());
    if (fresh_group) it->second = fresh(bound);
    feed(it->second, bound, *cell.tuple, c);
  }
  ctx.count(static_cast<std::int64_t>(a.size()));

  std::int64_t lo = groups.empty() ? 0 : groups.begin()->first;
  std::int64_t hi = groups.empty() ? 0 : groups.rbegin()->first;
  ChunkedArray out(ArraySchema({{attr, lo, hi}}, agg_attrs(bound)));
  for (const auto& [key, acc] : groups) out.set_linear(key - lo, results(acc));
  return out;
}

namespace {

void check_offsets(const ArraySchema& s, const std::vector<std::int64_t>& offsets) {
  if (offsets.size() != s.rank())
    throw Error(ErrorCode::BadOffsets, "window needs one offset per dimension");
  for (auto o : offsets)
    if (o < 0) throw Error(ErrorCode::BadOffsets, "window offsets must be non-negative");
}

template <class Lookup>
std::map<std::int64_t, CellTuple> window_over(const ArraySchema& s, const std::map<std::int64_t, CellTuple>& core,
                                              const std::vector<std::int64_t>& offsets,
                                              const std::vector<BoundAgg>& bound, Lookup&& lookup) {
  std::map<std::int64_t, CellTuple> out;
  Coordinate c(s.rank()), scratch;
  for (const auto& [lin, t] : core) {
    s.coordinate_into(lin, c);
    auto acc = fresh(bound);
    for_box(s, c, offsets, scratch, [&](const Coordinate& nb) {
      if (const CellTuple* v = lookup(s.linear(nb))) feed(acc, bound, *v, nb);
    });
    out.emplace_hint(out.end(), lin, results(acc));
  }
  return out;
}

}  // namespace

std::map<std::int64_t, CellTuple> window_aggregate_chunk(const ArraySchema& schema, const Chunk& chunk,
                                                         const std::vector<std::int64_t>& offsets,
                                                         const std::vector<AggregateSpec>& aggs,
                                                         std::int64_t* work) {
  check_offsets(schema, offsets);
  auto bound = bind_aggs(schema, aggs);
  if (work) *work += static_cast<std::int64_t>(chunk.core.size());
  return window_over(schema, chunk.core, offsets, bound, [&](std::int64_t lin) -> const CellTuple* {
    auto it = chunk.core.find(lin);
    if (it != chunk.core.end()) return &it->second;
    auto h = chunk.halo.find(lin);
    return h != chunk.halo.end() ? &h->second : nullptr;
  });
}

ChunkedArray window_aggregate(const ChunkedArray& a, const std::vector<std::int64_t>& offsets,
                              const std::vector<AggregateSpec>& aggs, const ExecContext& ctx) {
  const ArraySchema& s = a.schema();
  check_offsets(s, offsets);
  auto bound = bind_aggs(s, aggs);
  ArraySchema out_schema = s.with_attrs(agg_attrs(bound));

  std::vector<std::shared_ptr<Chunk>> built(a.chunks().size());
  for_chunks(a, ctx, [&](std::size_t i, const Chunk& ch) {
    auto out = std::make_shared<Chunk>();
    out->key = ch.key;
    out->core = window_over(s, ch.core, offsets, bound, [&](std::int64_t lin) { return a.find_linear(lin); });
    built[i] = std::move(out);
  });
  ctx.count(static_cast<std::int64_t>(a.size()));

  ChunkedArray result(out_schema);
  for (auto& ch : built) result.put_chunk(std::move(ch));
  return result;
}

ChunkedArray filter(const ChunkedArray& a, const Expression& predicate, const ExecContext& ctx) {
  const ArraySchema& s = a.schema();
  BoundExpression p = BoundExpression::bind(predicate, s);
  ChunkedArray out(s);
  Coordinate c(s.rank());
  for (const auto& [key, ch] : a.chunks()) {
    auto kept = std::make_shared<Chunk>();
    kept->key = key;
    for (const auto& [lin, t] : ch->core) {
      s.coordinate_into(lin, c);
      if (p.eval_predicate({&t, nullptr, c})) kept->core.emplace_hint(kept->core.end(), lin, t);
    }
    out.put_chunk(std::move(kept));
  }
  ctx.count(static_cast<std::int64_t>(a.size()));
  return out;
}

namespace {

// Index in `src` of each dimension of `sub`. Throws NotASubsetOfDims.
std::vector<std::size_t> project_dims(const ArraySchema& src, const ArraySchema& sub) {
  std::vector<std::size_t> idx;
  for (const auto& d : sub.dims()) {
    auto i = src.dim_index(d.name);
    if (!i) throw Error(ErrorCode::NotASubsetOfDims, "dimension '" + d.name + "' is not a source dimension");
    idx.push_back(*i);
  }
  return idx;
}

// Linear index in `sub` of the projection of `c`, or -1 when it falls
// outside sub's domain.
std::int64_t projected(const ArraySchema& sub, const std::vector<std::size_t>& idx,
                       std::span<const std::int64_t> c, Coordinate& scratch) {
  for (std::size_t j = 0; j < idx.size(); ++j) scratch[j] = c[idx[j]];
  if (!sub.contains(scratch)) return -1;
  return sub.linear(scratch);
}

}  // namespace

ChunkedArray dim_join(const ChunkedArray& a, const ChunkedArray& b, const ExecContext& ctx) {
  const ArraySchema& sa = a.schema();
  const ArraySchema& sb = b.schema();
  bool common = false;
  for (const auto& d : sb.dims()) common = common || sa.dim_index(d.name).has_value();
  if (!common) throw Error(ErrorCode::NoCommonDims, "arrays share no dimension");
  auto idx = project_dims(sa, sb);

  std::vector<Attribute> attrs = sa.attrs();
  for (auto at : sb.attrs()) {
    while (sa.attr_index(at.name) || sa.dim_index(at.name)) at.name += "_r";
    attrs.push_back(at);
  }
  ChunkedArray out(sa.with_attrs(attrs));
  Coordinate c(sa.rank()), p(sb.rank());
  for (const auto& [key, ch] : a.chunks()) {
    auto joined = std::make_shared<Chunk>();
    joined->key = key;
    for (const auto& [lin, t] : ch->core) {
      sa.coordinate_into(lin, c);
      std::int64_t pl = projected(sb, idx, c, p);
      const CellTuple* other = pl < 0 ? nullptr : b.find_linear(pl);
      if (!other) continue;
      CellTuple row = t;
      row.insert(row.end(), other->begin(), other->end());
      joined->core.emplace_hint(joined->core.end(), lin, std::move(row));
    }
    out.put_chunk(std::move(joined));
  }
  ctx.count(static_cast<std::int64_t>(a.size()));
  return out;
}

namespace {

struct Change {
  std::int64_t lin;
  CellTuple old_value;
  CellTuple new_value;  // all-null: delete
};

MergeResult apply_changes(const ChunkedArray& source, std::vector<Change>& changes, const MergeOptions& options) {
  MergeResult r;
  r.array = source;
  if (options.record_delta) {
    r.delta.plus = ChunkedArray(source.schema());
    r.delta.minus = ChunkedArray(source.schema());
  }
  for (auto& ch : changes) {
    if (options.record_delta) {
      r.delta.minus.set_linear(ch.lin, ch.old_value);
      r.delta.plus.set_linear(ch.lin, ch.new_value);
    }
    if (all_null(ch.new_value))
      r.array.erase_linear(ch.lin);
    else
      r.array.set_linear(ch.lin, std::move(ch.new_value));
  }
  r.changed = static_cast<std::int64_t>(changes.size());
  return r;
}

// Result of evaluating the merge expression on one cell; nullopt when the
// cell keeps its value.
std::optional<CellTuple> merged_value(const BoundExpression& e, const CellTuple& src, const CellTuple& ext,
                                      std::span<const std::int64_t> c) {
  CellTuple v = e.eval_tuple({&src, &ext, c});
  if (all_null(v)) return v;
  if (v == src) return std::nullopt;
  return v;
}

}  // namespace

MergeResult merge_ex(const ChunkedArray& source, const ChunkedArray& extrusion, const Expression& exp,
                     const MergeOptions& options, const ExecContext& ctx) {
  const ArraySchema& ss = source.schema();
  const ArraySchema& se = extrusion.schema();
  auto idx = project_dims(ss, se);
  BoundExpression e = BoundExpression::bind(exp, ss, &se);
  e.check_assignable(ss.attrs());

  // Cells of the source a single extrusion cell reaches.
  std::int64_t fanout = 1;
  std::vector<bool> shared(ss.rank(), false);
  for (auto i : idx) shared[i] = true;
  for (std::size_t i = 0; i < ss.rank(); ++i)
    if (!shared[i]) fanout = fanout > std::numeric_limits<std::int64_t>::max() / ss.dims()[i].extent()
                                 ? std::numeric_limits<std::int64_t>::max()
                                 : fanout * ss.dims()[i].extent();
  const bool extrusion_driven =
      static_cast<double>(extrusion.size()) * static_cast<double>(fanout) < static_cast<double>(source.size());

  std::vector<Change> changes;
  if (extrusion_driven) {
    // Walk each extrusion cell's slab of the source.
    std::int64_t visited = 0;
    Coordinate ec(se.rank());
    for (const auto& cell : extrusion.cells()) {
      ++visited;
      se.coordinate_into(cell.index, ec);
      Coordinate centre(ss.rank());
      bool inside = true;
      for (std::size_t i = 0; i < ss.rank(); ++i) {
        if (shared[i]) continue;
        centre[i] = ss.dims()[i].lower;
      }
      for (std::size_t j = 0; j < idx.size(); ++j) {
        centre[idx[j]] = ec[j];
        if (ec[j] < ss.dims()[idx[j]].lower || ec[j] > ss.dims()[idx[j]].upper) inside = false;
      }
      if (!inside) continue;
      Coordinate cur = centre;
      for (;;) {
        std::int64_t lin = ss.linear(cur);
        if (const CellTuple* t = source.find_linear(lin)) {
          ++visited;
          if (auto v = merged_value(e, *t, *cell.tuple, cur)) changes.push_back({lin, *t, std::move(*v)});
        }
        std::size_t i = ss.rank();
        bool done = true;
        while (i > 0) {
          --i;
          if (shared[i]) continue;
          if (cur[i] < ss.dims()[i].upper) {
            ++cur[i];
            done = false;
            break;
          }
          cur[i] = ss.dims()[i].lower;
        }
        if (done) break;
      }
    }
    std::sort(changes.begin(), changes.end(), [](const Change& a, const Change& b) { return a.lin < b.lin; });
    ctx.count(visited);
  } else {
    std::vector<std::vector<Change>> per_chunk(source.chunks().size());
    for_chunks(source, ctx, [&](std::size_t i, const Chunk& ch) {
      Coordinate c(ss.rank()), p(se.rank());
      for (const auto& [lin, t] : ch.core) {
        ss.coordinate_into(lin, c);
        std::int64_t pl = projected(se, idx, c, p);
        const CellTuple* ext = pl < 0 ? nullptr : extrusion.find_linear(pl);
        if (!ext) continue;
        if (auto v = merged_value(e, t, *ext, c)) per_chunk[i].push_back({lin, t, std::move(*v)});
      }
    });
    for (auto& v : per_chunk)
      for (auto& ch : v) changes.push_back(std::move(ch));
    ctx.count(static_cast<std::int64_t>(source.size()));
  }
  return apply_changes(source, changes, options);
}

ChunkedArray merge(const ChunkedArray& source, const ChunkedArray& extrusion, const Expression& exp,
                   const ExecContext& ctx) {
  return merge_ex(source, extrusion, exp, {}, ctx).array;
}

MergeResult merge_by_attribute(const ChunkedArray& source, const ChunkedArray& extrusion, const std::string& key,
                               const Expression& exp, const MergeOptions& options, const ExecContext& ctx) {
  const ArraySchema& ss = source.schema();
  const ArraySchema& se = extrusion.schema();
  auto ki = ss.attr_index(key);
  if (!ki) throw Error(ErrorCode::UnknownDimension, "no attribute '" + key + "'");
  if (ss.attrs()[*ki].kind != ScalarKind::Int64 || se.rank() != 1)
    throw Error(ErrorCode::ExpressionTypeError, "attribute merge needs an int64 key and a 1-d extrusion");
  BoundExpression e = BoundExpression::bind(exp, ss, &se);
  e.check_assignable(ss.attrs());

  std::vector<std::vector<Change>> per_chunk(source.chunks().size());
  for_chunks(source, ctx, [&](std::size_t i, const Chunk& ch) {
    Coordinate c(ss.rank());
    for (const auto& [lin, t] : ch.core) {
      const Scalar& k = t[*ki];
      if (k.is_null()) continue;
      std::int64_t kv = k.as_int();
      if (!se.contains(std::span<const std::int64_t>(&kv, 1))) continue;
      const CellTuple* ext = extrusion.find_linear(kv - se.dims()[0].lower);
      if (!ext) continue;
      ss.coordinate_into(lin, c);
      if (auto v = merged_value(e, t, *ext, c)) per_chunk[i].push_back({lin, t, std::move(*v)});
    }
  });
  std::vector<Change> changes;
  for (auto& v : per_chunk)
    for (auto& ch : v) changes.push_back(std::move(ch));
  ctx.count(static_cast<std::int64_t>(source.size()));
  return apply_changes(source, changes, options);
}

namespace {

void check_block(const ArraySchema& s, const std::vector<std::int64_t>& block) {
  if (block.size() != s.rank()) throw Error(ErrorCode::BadBlock, "block needs one extent per dimension");
  for (auto b : block)
    if (b < 1) throw Error(ErrorCode::BadBlock, "block extents must be positive");
}

}  // namespace

ChunkedArray grid(const ChunkedArray& a, const std::vector<std::int64_t>& block,
                  const std::vector<AggregateSpec>& aggs, const ExecContext& ctx) {
  const ArraySchema& s = a.schema();
  check_block(s, block);
  auto bound = bind_aggs(s, aggs);
  std::vector<Dimension> dims;
  std::vector<std::int64_t> chunks;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    const auto& d = s.dims()[i];
    Dimension nd{d.name, floor_div(d.lower, block[i]), floor_div(d.upper, block[i])};
    chunks.push_back(std::clamp<std::int64_t>(s.chunk_extents()[i] / block[i], 1, nd.extent()));
    dims.push_back(nd);
  }
  ArraySchema out_schema(dims, agg_attrs(bound), chunks);

  std::map<std::int64_t, std::vector<Accumulator>> groups;
  Coordinate c(s.rank()), g(s.rank());
  for (const auto& cell : a.cells()) {
    s.coordinate_into(cell.index, c);
    for (std::size_t i = 0; i < s.rank(); ++i) g[i] = floor_div(c[i], block[i]);
    auto [it, fresh_group] = groups.try_emplace(out_schema.linear(g));
    if (fresh_group) it->second = fresh(bound);
    feed(it->second, bound, *cell.tuple, c);
  }
  ctx.count(static_cast<std::int64_t>(a.size()));
  ChunkedArray out(out_schema);
  for (const auto& [lin, acc] : groups) out.set_linear(lin, results(acc));
  return out;
}

ChunkedArray xgrid(const ChunkedArray& a, const std::vector<std::int64_t>& block, const ExecContext& ctx) {
  const ArraySchema& s = a.schema();
  check_block(s, block);
  std::vector<Dimension> dims;
  std::vector<std::int64_t> chunks;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    const auto& d = s.dims()[i];
    Dimension nd{d.name, d.lower * block[i], d.upper * block[i] + block[i] - 1};
    chunks.push_back(std::min(s.chunk_extents()[i] * block[i], nd.extent()));
    dims.push_back(nd);
  }
  ArraySchema out_schema(dims, s.attrs(), chunks);
  ChunkedArray out(out_schema);
  Coordinate c(s.rank()), base(s.rank()), scratch;
  std::vector<std::int64_t> span(s.rank());
  for (std::size_t i = 0; i < s.rank(); ++i) span[i] = block[i] - 1;
  for (const auto& cell : a.cells()) {
    s.coordinate_into(cell.index, c);
    for (std::size_t i = 0; i < s.rank(); ++i) base[i] = c[i] * block[i] + span[i];
    // Box [base - span, base] is exactly the cell's block.
    for_box(out_schema, base, span, scratch, [&](const Coordinate& fine) {
      bool in_block = true;
      for (std::size_t i = 0; i < s.rank(); ++i) in_block = in_block && fine[i] <= base[i];
      if (in_block) out.set_linear(out_schema.linear(fine), *cell.tuple);
    });
  }
  ctx.count(static_cast<std::int64_t>(a.size()));
  return out;
}

ChunkedArray project(const ChunkedArray& a, const std::vector<std::string>& attrs) {
  const ArraySchema& s = a.schema();
  std::vector<std::size_t> idx;
  std::vector<Attribute> out_attrs;
  for (const auto& n : attrs) {
    auto i = s.attr_index(n);
    if (!i) throw Error(ErrorCode::UnknownDimension, "no attribute '" + n + "'");
    idx.push_back(*i);
    out_attrs.push_back(s.attrs()[*i]);
  }
  ChunkedArray out(s.with_attrs(out_attrs));
  for (const auto& [key, ch] : a.chunks()) {
    auto p = std::make_shared<Chunk>();
    p->key = key;
    for (const auto& [lin, t] : ch->core) {
      CellTuple row;
      row.reserve(idx.size());
      for (auto i : idx) row.push_back(t[i]);
      p->core.emplace_hint(p->core.end(), lin, std::move(row));
    }
    out.put_chunk(std::move(p));
  }
  return out;
}

ChunkedArray apply(const ChunkedArray& a, const std::vector<Attribute>& attrs, const std::vector<Expression>& exps) {
  const ArraySchema& s = a.schema();
  if (attrs.size() != exps.size())
    throw Error(ErrorCode::ArityMismatch, "apply needs one expression per attribute");
  std::vector<BoundExpression> bound;
  for (std::size_t i = 0; i < exps.size(); ++i) {
    bound.push_back(BoundExpression::bind(exps[i], s));
    bound.back().check_assignable({attrs[i]});
  }
  ChunkedArray out(s.with_attrs(attrs));
  Coordinate c(s.rank());
  for (const auto& cell : a.cells()) {
    s.coordinate_into(cell.index, c);
    CellTuple row;
    for (const auto& b : bound) row.push_back(b.eval_tuple({cell.tuple, nullptr, c})[0]);
    if (!all_null(row)) out.set_linear(cell.index, std::move(row));
  }
  return out;
}

}  // namespace itarray
