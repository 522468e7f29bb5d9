#include "itarray/incremental.hpp"

#include <atomic>
#include <chrono>
#include <set>

namespace itarray {

std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::Naive: return "naive";
    case Strategy::ManualIncr: return "manual-incr";
    case Strategy::EfficientIncr: return "efficient-incr";
    case Strategy::EfficientIncrStorage: return "efficient-incr+storage";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  for (Strategy s : {Strategy::Naive, Strategy::ManualIncr, Strategy::EfficientIncr, Strategy::EfficientIncrStorage})
    if (strategy_name(s) == text) return s;
  throw Error(ErrorCode::ParseError, "unknown strategy '" + std::string(text) + "'");
}

const AlgebraicRegistry& AlgebraicRegistry::defaults() {
  static const AlgebraicRegistry reg = [] {
    AlgebraicRegistry r;
    r.add({AggKind::Count, {AggKind::Count}, true, "c"});
    r.add({AggKind::Sum, {AggKind::Count, AggKind::Sum}, true, "s"});
    r.add({AggKind::SumSq, {AggKind::Count, AggKind::SumSq}, true, "s2"});
    r.add({AggKind::Avg, {AggKind::Count, AggKind::Sum}, true, "s / c"});
    r.add({AggKind::Stdv, {AggKind::Count, AggKind::Sum, AggKind::SumSq}, true, "sqrt(s2 / c - (s / c)^2)"});
    r.add({AggKind::Min, {AggKind::Min}, false, "m"});
    r.add({AggKind::Max, {AggKind::Max}, false, "m"});
    return r;
  }();
  return reg;
}

const AlgebraicEntry* AlgebraicRegistry::find(AggKind kind) const {
  auto it = entries_.find(kind);
  return it == entries_.end() ? nullptr : &it->second;
}

CombineOp combine_op(AggKind partial) noexcept {
  if (partial == AggKind::Min) return CombineOp::Min;
  if (partial == AggKind::Max) return CombineOp::Max;
  return CombineOp::Sum;
}

namespace {

std::string partial_name(AggKind kind, const std::string& input) {
  return "_" + std::string(agg_kind_name(kind)) + "_" + input;
}

}  // namespace

IncrementalPlan IncrementalPlan::rewrite(const FixPointSpec& spec, const ArraySchema& schema,
                                         const AlgebraicRegistry& registry, Workload workload) {
  IncrementalPlan p;
  p.naive_ = Plan::rewrite_naive(spec, schema);
  p.workload_ = workload;
  if (p.naive_.pi().strategy != Classified::Strategy::GroupBy)
    throw Error(ErrorCode::NotIncrementalizable, "only group-by assignment functions are rewritten incrementally");
  if (std::holds_alternative<NativeUpdate>(spec.delta))
    throw Error(ErrorCode::NotIncrementalizable, "a native update sees every group and cannot be restricted");

  p.partials_.push_back({"_n", AggKind::Count, schema.dims()[0].name});
  std::set<std::string> seen{"_n"};
  for (const auto& f : spec.f) {
    const AlgebraicEntry* e = registry.find(f.kind);
    if (!e) throw Error(ErrorCode::NotIncrementalizable, "no decomposition for " + format_aggregate(f));
    if (!e->subtractable && workload != Workload::InsertOnly)
      throw Error(ErrorCode::NotIncrementalizable,
                  std::string(agg_kind_name(f.kind)) + " cannot be maintained under deletions");
    resolve_aggregate_input(schema, f);
    for (AggKind k : e->partials) {
      std::string name = partial_name(k, f.input);
      if (seen.insert(name).second) p.partials_.push_back({name, k, f.input});
      if (combine_op(k) != CombineOp::Sum) p.has_min_max_ = true;
    }
  }
  return p;
}

std::vector<std::string> IncrementalPlan::describe() const {
  std::vector<std::string> aggs;
  for (const auto& a : partials_) aggs.push_back(format_aggregate(a));
  std::string list;
  for (std::size_t i = 0; i < aggs.size(); ++i) list += (i ? ", " : "") + aggs[i];
  std::string dims;
  for (std::size_t i = 0; i < naive_.pi().dims.size(); ++i) dims += (i ? "," : "") + naive_.pi().dims[i];
  std::vector<std::string> out;
  if (workload_ != Workload::InsertOnly)
    out.push_back("T- <- groupby_aggregate(dA-, [" + dims + "], {" + list + "})");
  if (workload_ != Workload::DeleteOnly)
    out.push_back("T+ <- groupby_aggregate(dA+, [" + dims + "], {" + list + "})");
  out.push_back("first iteration: C <- T+ over A");
  if (workload_ != Workload::InsertOnly) out.push_back("C <- merge(C, T-, subtract)");
  if (workload_ != Workload::DeleteOnly) out.push_back(has_min_max_ ? "C <- merge(C, T+, min/max)"
                                                                    : "C <- merge(C, T+, add)");
  std::vector<std::string> fin;
  for (const auto& f : naive_.spec().f) {
    const AlgebraicEntry* e = AlgebraicRegistry::defaults().find(f.kind);
    fin.push_back(f.output + " = " + (e ? e->finalize : std::string(agg_kind_name(f.kind))));
  }
  std::string fl;
  for (std::size_t i = 0; i < fin.size(); ++i) fl += (i ? ", " : "") + fin[i];
  out.push_back("F <- finalize(C on dC+): " + fl);
  auto naive = naive_.describe();
  out.push_back(naive[1].replace(naive[1].find("merge(A, G"), 10, "merge(A, F"));
  out.push_back(naive[2]);
  out.push_back(naive[3]);
  return out;
}

ChunkedArray IncrementalPlan::partial_aggregate(const ChunkedArray& cells, const ExecContext& ctx) const {
  return groupby_aggregate(cells, naive_.pi().dims, partials_, ctx);
}

ChunkedArray IncrementalPlan::combine(const ChunkedArray& c, const ChunkedArray& t, MergeMode mode) const {
  if (!has_min_max_) return merge_arithmetic(c, t, mode, std::string("_n"));
  if (mode == MergeMode::Subtract)
    throw Error(ErrorCode::NotIncrementalizable, "min/max partials cannot absorb deletions");
  const ArraySchema& s = c.schema();
  ChunkedArray out = c;
  for (const auto& ref : t.cells()) {
    const CellTuple* old = c.find_linear(ref.index);
    if (!old) {
      out.set_linear(ref.index, *ref.tuple);
      continue;
    }
    CellTuple row = *old;
    for (std::size_t i = 0; i < s.arity(); ++i) {
      const Scalar& v = (*ref.tuple)[i];
      if (v.is_null()) continue;
      if (row[i].is_null()) {
        row[i] = v;
        continue;
      }
      bool is_int = s.attrs()[i].kind == ScalarKind::Int64;
      switch (combine_op(partials_[i].kind)) {
        case CombineOp::Sum:
          row[i] = is_int ? Scalar(row[i].as_int() + v.as_int()) : Scalar(row[i].as_double() + v.as_double());
          break;
        case CombineOp::Min:
          if (is_int ? v.as_int() < row[i].as_int() : v.as_double() < row[i].as_double()) row[i] = v;
          break;
        case CombineOp::Max:
          if (is_int ? v.as_int() > row[i].as_int() : v.as_double() > row[i].as_double()) row[i] = v;
          break;
      }
    }
    out.set_linear(ref.index, std::move(row));
  }
  return out;
}

ChunkedArray IncrementalPlan::finalize(const ChunkedArray& c) const {
  const ArraySchema& cs = c.schema();
  const FixPointSpec& spec = naive_.spec();
  struct Slot {
    AggKind kind;
    ScalarKind input_kind;
    std::optional<std::size_t> count, sum, sum_sq, best;
  };
  std::vector<Slot> slots;
  std::vector<Attribute> attrs;
  // The input kind is recovered from the partial columns: a sum keeps it.
  for (const auto& f : spec.f) {
    Slot s{f.kind, ScalarKind::Float64, cs.attr_index(partial_name(AggKind::Count, f.input)),
           cs.attr_index(partial_name(AggKind::Sum, f.input)), cs.attr_index(partial_name(AggKind::SumSq, f.input)),
           std::nullopt};
    if (f.kind == AggKind::Min || f.kind == AggKind::Max) s.best = cs.attr_index(partial_name(f.kind, f.input));
    if (s.sum) s.input_kind = cs.attrs()[*s.sum].kind;
    if (s.best) s.input_kind = cs.attrs()[*s.best].kind;
    if (f.kind == AggKind::Sum && !s.sum) s.input_kind = ScalarKind::Float64;
    attrs.push_back({f.output, aggregate_result_kind(f.kind, s.input_kind)});
    slots.push_back(s);
  }
  ChunkedArray out(cs.with_attrs(attrs));
  for (const auto& ref : c.cells()) {
    const CellTuple& t = *ref.tuple;
    CellTuple row;
    for (const auto& s : slots) {
      std::int64_t n = s.count && !t[*s.count].is_null() ? t[*s.count].as_int() : 0;
      switch (s.kind) {
        case AggKind::Count: row.push_back(Scalar(n)); break;
        case AggKind::Sum: row.push_back(n == 0 ? Scalar::null() : t[*s.sum]); break;
        case AggKind::SumSq: row.push_back(n == 0 ? Scalar::null() : t[*s.sum_sq]); break;
        case AggKind::Avg:
          row.push_back(n == 0 ? Scalar::null() : Scalar(finalize_avg(n, t[*s.sum].as_double())));
          break;
        case AggKind::Stdv:
          row.push_back(n == 0 ? Scalar::null()
                               : Scalar(finalize_stdv(n, t[*s.sum].as_double(), t[*s.sum_sq].as_double())));
          break;
        case AggKind::Min:
        case AggKind::Max: row.push_back(t[*s.best]); break;
      }
    }
    out.set_linear(ref.index, std::move(row));
  }
  return out;
}

namespace {

ChunkedArray without_markers(const ChunkedArray& plus) {
  ChunkedArray out(plus.schema());
  for (const auto& ref : plus.cells())
    if (!all_null(*ref.tuple)) out.set_linear(ref.index, *ref.tuple);
  return out;
}

ChunkedArray restrict_to(const ChunkedArray& c, const std::set<std::int64_t>& keys) {
  ChunkedArray out(c.schema());
  for (auto k : keys)
    if (const CellTuple* t = c.find_linear(k)) out.set_linear(k, *t);
  return out;
}

void add_keys(std::set<std::int64_t>& keys, const ChunkedArray& a) {
  for (const auto& [key, ch] : a.chunks())
    for (const auto& [lin, t] : ch->core) keys.insert(lin);
}

RunResult incremental_loop(const IncrementalPlan& plan, const ChunkedArray& start, const ExecOptions& exec,
                           VersionedStore* store, bool storage_deltas) {
  const Plan& naive = plan.naive();
  const FixPointSpec& spec = naive.spec();
  if (storage_deltas && plan.needs_min_max())
    throw Error(ErrorCode::StrategyUnavailable, "the store only merges by add/subtract");
  const std::string cname = spec.array + ".partials";
  const AnnotatedStoreOptions vanish{std::string("_n")};

  WorkerPool pool(exec.workers);
  std::atomic<std::int64_t> work{0};
  ExecContext ctx{&pool, &work};

  RunResult result;
  ChunkedArray a = start;
  ChunkedArray c;
  DeltaPair last;
  for (std::int64_t i = 1; i <= spec.max_iterations; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    work = 0;
    ChunkedArray f;
    if (i == 1) {
      ChunkedArray t = plan.partial_aggregate(a, ctx);
      if (storage_deltas) {
        store->store(cname, t);
        c = store->scan(cname);
      } else {
        c = std::move(t);
      }
      f = plan.finalize(c);
    } else {
      DeltaPair d = storage_deltas ? DeltaPair{store->scan(spec.array, ScanKind::DeltaPlus),
                                               store->scan(spec.array, ScanKind::DeltaMinus)}
                                   : last;
      ChunkedArray plus = without_markers(d.plus);
      if (plan.workload() == Workload::DeleteOnly && !plus.empty())
        throw Error(ErrorCode::NotIncrementalizable, "update inserted cells in a delete-only workload");
      if (plan.workload() == Workload::InsertOnly && !d.minus.empty())
        throw Error(ErrorCode::NotIncrementalizable, "update removed cells in an insert-only workload");
      std::set<std::int64_t> changed;
      std::optional<ChunkedArray> tm, tp;
      if (!d.minus.empty()) tm = plan.partial_aggregate(d.minus, ctx);
      if (!plus.empty()) tp = plan.partial_aggregate(plus, ctx);
      if (storage_deltas) {
        std::uint64_t before = store->latest_version(cname);
        if (tm) store->store_annotated(cname, *tm, MergeMode::Subtract, vanish);
        if (tp) store->store_annotated(cname, *tp, MergeMode::Add, vanish);
        c = store->scan(cname);
        for (std::uint64_t v = before + 1; v <= store->latest_version(cname); ++v)
          add_keys(changed, without_markers(store->delta(cname, v).plus));
      } else {
        if (tm) {
          c = plan.combine(c, *tm, MergeMode::Subtract);
          add_keys(changed, *tm);
        }
        if (tp) {
          c = plan.combine(c, *tp, MergeMode::Add);
          add_keys(changed, *tp);
        }
      }
      f = plan.finalize(restrict_to(c, changed));
    }

    MergeOptions mo;
    mo.record_delta = !storage_deltas;
    MergeResult r = naive.update(a, f, mo, ctx);
    double t = spec.termination.kind == Termination::Kind::DiffCount
                   ? static_cast<double>(r.changed)
                   : termination_value(spec.termination, a, r.array);

    IterationRecord rec;
    rec.iteration = i;
    rec.changed_cells = r.changed;
    rec.termination_value = t;
    rec.groups_updated = static_cast<std::int64_t>(f.size());
    rec.mini_index = i;
    rec.major_index = i;
    a = std::move(r.array);
    a.set_version(store ? store->store(spec.array, a) : static_cast<std::uint64_t>(i));
    last = std::move(r.delta);
    rec.cells_touched = work.load();
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(rec);
    if (t <= spec.epsilon) {
      result.converged = true;
      result.final = std::move(a);
      return result;
    }
  }
  result.final = std::move(a);
  throw NonConvergenceError(std::move(result));
}

}  // namespace

RunResult run_incremental_array(const IncrementalPlan& plan, const ChunkedArray& a, const ExecOptions& exec) {
  return incremental_loop(plan, a, exec, nullptr, false);
}

RunResult run_incremental(const IncrementalPlan& plan, VersionedStore& store, bool storage_deltas,
                          const ExecOptions& exec) {
  ChunkedArray start = store.scan(plan.naive().spec().array);
  return incremental_loop(plan, start, exec, &store, storage_deltas);
}

}  // namespace itarray
