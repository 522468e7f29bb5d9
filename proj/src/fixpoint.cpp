#include "itarray/fixpoint.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

namespace itarray {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::int64_t parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(ErrorCode::ParseError, "expected an integer, got '" + std::string(s) + "'");
  return v;
}

template <class T>
std::string join(const std::vector<T>& v, std::string_view sep) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? sep : "") << v[i];
  return out.str();
}

}  // namespace

AssignmentFunction AssignmentFunction::window(std::vector<std::int64_t> offsets) {
  AssignmentFunction a;
  a.kind = Kind::Window;
  a.offsets = std::move(offsets);
  return a;
}

AssignmentFunction AssignmentFunction::groupby(std::vector<std::string> dims) {
  AssignmentFunction a;
  a.kind = Kind::GroupBy;
  a.dims = std::move(dims);
  return a;
}

AssignmentFunction AssignmentFunction::attribute(std::string attr) {
  AssignmentFunction a;
  a.kind = Kind::Attribute;
  a.attr = std::move(attr);
  return a;
}

AssignmentFunction AssignmentFunction::mapping(std::vector<Target> targets) {
  AssignmentFunction a;
  a.kind = Kind::Mapping;
  a.targets = std::move(targets);
  return a;
}

AssignmentFunction AssignmentFunction::parse(std::string_view text) {
  text = trim(text);
  auto sp = text.find(' ');
  std::string_view head = text.substr(0, sp);
  std::string_view rest = sp == std::string_view::npos ? std::string_view{} : trim(text.substr(sp + 1));
  if (head == "window") {
    std::vector<std::int64_t> offs;
    for (const auto& p : split(rest, ',')) offs.push_back(parse_int(p));
    return window(std::move(offs));
  }
  if (head == "groupby") return groupby(split(rest, ','));
  if (head == "attribute") {
    if (rest.empty()) throw Error(ErrorCode::ParseError, "attribute assignment needs a name");
    return attribute(std::string(rest));
  }
  if (head == "map") {
    std::vector<Target> ts;
    for (const auto& p : split(rest, ',')) {
      auto pm = p.find("+-");
      if (pm == std::string::npos)
        ts.push_back({p, 0});
      else
        ts.push_back({std::string(trim(std::string_view(p).substr(0, pm))), parse_int(p.substr(pm + 2))});
    }
    return mapping(std::move(ts));
  }
  throw Error(ErrorCode::ParseError, "unknown assignment function '" + std::string(text) + "'");
}

std::string AssignmentFunction::to_string() const {
  switch (kind) {
    case Kind::Window: return "window " + join(offsets, ",");
    case Kind::GroupBy: return "groupby " + join(dims, ",");
    case Kind::Attribute: return "attribute " + attr;
    case Kind::Mapping: {
      std::vector<std::string> parts;
      for (const auto& t : targets) parts.push_back(t.offset ? t.dim + "+-" + std::to_string(t.offset) : t.dim);
      return "map " + join(parts, ",");
    }
  }
  return {};
}

Classified classify(const AssignmentFunction& pi, const ArraySchema& schema) {
  Classified c;
  auto need_dim = [&](const std::string& n) {
    auto d = schema.dim_index(n);
    if (!d) throw Error(ErrorCode::UnknownDimension, "no dimension '" + n + "'");
    return *d;
  };
  switch (pi.kind) {
    case AssignmentFunction::Kind::Window:
      if (pi.offsets.size() != schema.rank())
        throw Error(ErrorCode::BadOffsets, "window needs one offset per dimension");
      for (auto o : pi.offsets)
        if (o < 0) throw Error(ErrorCode::BadOffsets, "window offsets must be non-negative");
      c.strategy = Classified::Strategy::Window;
      c.offsets = pi.offsets;
      return c;
    case AssignmentFunction::Kind::GroupBy: {
      if (pi.dims.empty()) throw Error(ErrorCode::UnknownDimension, "group-by needs at least one dimension");
      std::set<std::string> seen;
      for (const auto& d : pi.dims) {
        need_dim(d);
        if (!seen.insert(d).second) throw Error(ErrorCode::UnsupportedAssignment, "dimension '" + d + "' repeated");
      }
      c.strategy = Classified::Strategy::GroupBy;
      c.dims = pi.dims;
      return c;
    }
    case AssignmentFunction::Kind::Attribute:
      if (!schema.attr_index(pi.attr)) throw Error(ErrorCode::UnknownDimension, "no attribute '" + pi.attr + "'");
      c.strategy = Classified::Strategy::Attribute;
      c.attr = pi.attr;
      return c;
    case AssignmentFunction::Kind::Mapping: {
      if (pi.targets.empty()) throw Error(ErrorCode::UnsupportedAssignment, "empty mapping");
      std::vector<std::int64_t> offs(schema.rank(), 0);
      std::vector<bool> hit(schema.rank(), false);
      bool any_offset = false;
      for (const auto& t : pi.targets) {
        auto d = need_dim(t.dim);
        if (hit[d]) throw Error(ErrorCode::UnsupportedAssignment, "dimension '" + t.dim + "' repeated");
        if (t.offset < 0) throw Error(ErrorCode::BadOffsets, "window offsets must be non-negative");
        hit[d] = true;
        offs[d] = t.offset;
        any_offset = any_offset || t.offset != 0;
      }
      bool full = std::all_of(hit.begin(), hit.end(), [](bool b) { return b; });
      if (any_offset && !full)
        throw Error(ErrorCode::UnsupportedAssignment, "mixing group-by and window assignment is not supported");
      if (any_offset) {
        c.strategy = Classified::Strategy::Window;
        c.offsets = offs;
      } else {
        c.strategy = Classified::Strategy::GroupBy;
        for (const auto& t : pi.targets) c.dims.push_back(t.dim);
      }
      return c;
    }
  }
  return c;
}

Termination Termination::parse(std::string_view text) {
  text = trim(text);
  if (text.empty() || text == "diff_count" || text == "count" || text == "count()") return {};
  for (auto [prefix, kind] : {std::pair{std::string_view("sum_abs("), Kind::SumAbsChange},
                              std::pair{std::string_view("max_abs("), Kind::MaxAbsChange}}) {
    if (text.substr(0, prefix.size()) == prefix && text.back() == ')') {
      Termination t;
      t.kind = kind;
      t.attr = std::string(trim(text.substr(prefix.size(), text.size() - prefix.size() - 1)));
      return t;
    }
  }
  throw Error(ErrorCode::ParseError, "unknown termination aggregate '" + std::string(text) + "'");
}

std::string Termination::to_string() const {
  switch (kind) {
    case Kind::DiffCount: return "diff_count";
    case Kind::SumAbsChange: return "sum_abs(" + attr + ")";
    case Kind::MaxAbsChange: return "max_abs(" + attr + ")";
  }
  return {};
}

double termination_value(const Termination& t, const ChunkedArray& before, const ChunkedArray& after) {
  if (t.kind == Termination::Kind::DiffCount) return static_cast<double>(diff_count(before, after));
  auto ai = before.schema().attr_index(t.attr);
  if (!ai) throw Error(ErrorCode::UnknownDimension, "no attribute '" + t.attr + "'");
  DeltaPair d = compute_delta(before, after);
  auto value = [&](const CellTuple* c) {
    if (!c || (*c)[*ai].is_null()) return 0.0;
    return (*c)[*ai].as_double();
  };
  double total = 0.0;
  for (const auto& cell : d.plus.cells()) {
    double change = std::fabs(value(cell.tuple) - value(d.minus.find_linear(cell.index)));
    total = t.kind == Termination::Kind::SumAbsChange ? total + change : std::max(total, change);
  }
  return total;
}

std::string format_spec(const FixPointSpec& spec) {
  std::ostringstream out;
  out << "array = " << spec.array << "\n";
  out << "pi = " << spec.pi.to_string() << "\n";
  std::vector<std::string> aggs;
  for (const auto& a : spec.f) aggs.push_back(format_aggregate(a));
  out << "f = " << join(aggs, "; ") << "\n";
  if (const auto* e = std::get_if<Expression>(&spec.delta))
    out << "delta = " << e->to_string() << "\n";
  else
    out << "delta = native:" << std::get<NativeUpdate>(spec.delta).name << "\n";
  out << "termination = " << spec.termination.to_string() << "\n";
  out << "epsilon = " << format_scalar(Scalar(spec.epsilon)) << "\n";
  out << "max_iterations = " << spec.max_iterations << "\n";
  return out.str();
}

FixPointSpec parse_spec(std::string_view text,
                        const std::function<std::optional<NativeUpdate>(const std::string&)>& natives) {
  FixPointSpec spec;
  bool have_delta = false, have_pi = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    auto eq = l.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, "expected key = value: " + line);
    std::string key(trim(l.substr(0, eq)));
    std::string_view value = trim(l.substr(eq + 1));
    if (key == "array") {
      spec.array = std::string(value);
    } else if (key == "pi") {
      spec.pi = AssignmentFunction::parse(value);
      have_pi = true;
    } else if (key == "f") {
      for (const auto& a : split(value, ';')) spec.f.push_back(parse_aggregate(a));
    } else if (key == "delta") {
      if (value.substr(0, 7) == "native:") {
        std::string name(trim(value.substr(7)));
        auto n = natives ? natives(name) : std::nullopt;
        if (!n) throw Error(ErrorCode::ParseError, "unknown native update '" + name + "'");
        spec.delta = std::move(*n);
      } else {
        try {
          spec.delta = Expression::parse(value);
        } catch (const Error& e) {
          throw Error(ErrorCode::ParseError, e.what());
        }
      }
      have_delta = true;
    } else if (key == "termination") {
      spec.termination = Termination::parse(value);
    } else if (key == "epsilon") {
      Scalar s = parse_scalar(value, ScalarKind::Float64);
      if (s.is_null() || s.as_double() < 0) throw Error(ErrorCode::ParseError, "epsilon must be >= 0");
      spec.epsilon = s.as_double();
    } else if (key == "max_iterations") {
      spec.max_iterations = parse_int(value);
      if (spec.max_iterations < 1) throw Error(ErrorCode::ParseError, "max_iterations must be positive");
    } else {
      throw Error(ErrorCode::ParseError, "unknown key '" + key + "'");
    }
  }
  if (!have_pi || !have_delta || spec.f.empty())
    throw Error(ErrorCode::ParseError, "spec needs pi, f and delta");
  return spec;
}

Plan Plan::rewrite_naive(const FixPointSpec& spec, const ArraySchema& schema) {
  if (spec.epsilon < 0) throw Error(ErrorCode::BadParams, "epsilon must be >= 0");
  if (spec.max_iterations < 1) throw Error(ErrorCode::BadParams, "max_iterations must be positive");
  Plan p;
  p.spec_ = spec;
  p.pi_ = classify(spec.pi, schema);
  // Type-check the update against the aggregate schema.
  ChunkedArray g = p.aggregate(ChunkedArray(schema), {});
  if (const auto* e = std::get_if<Expression>(&spec.delta)) {
    BoundExpression b = BoundExpression::bind(*e, schema, &g.schema());
    b.check_assignable(schema.attrs());
  } else if (!std::get<NativeUpdate>(spec.delta).fn) {
    throw Error(ErrorCode::BadParams, "native update has no function");
  }
  return p;
}

std::vector<std::string> Plan::describe() const {
  std::vector<std::string> aggs;
  for (const auto& a : spec_.f) aggs.push_back(format_aggregate(a));
  std::string f = "{" + join(aggs, ", ") + "}";
  std::vector<std::string> out;
  switch (pi_.strategy) {
    case Classified::Strategy::GroupBy:
      out.push_back("G <- groupby_aggregate(A, [" + join(pi_.dims, ",") + "], " + f + ")");
      break;
    case Classified::Strategy::Window:
      out.push_back("G <- window_aggregate(A, [" + join(pi_.offsets, ",") + "], " + f + ")");
      break;
    case Classified::Strategy::Attribute:
      out.push_back("G <- groupby_attribute(A, " + pi_.attr + ", " + f + ")");
      break;
  }
  std::string delta = std::holds_alternative<Expression>(spec_.delta)
                          ? std::get<Expression>(spec_.delta).to_string()
                          : "native:" + std::get<NativeUpdate>(spec_.delta).name;
  if (pi_.strategy == Classified::Strategy::Attribute)
    out.push_back("A' <- merge(A, G on " + pi_.attr + ", " + delta + ")");
  else
    out.push_back("A' <- merge(A, G, " + delta + ")");
  out.push_back("T <- " + spec_.termination.to_string() + "(A, A')");
  out.push_back("stop when T <= " + format_scalar(Scalar(spec_.epsilon)) + " or after " +
                std::to_string(spec_.max_iterations) + " iterations; else A <- A'");
  return out;
}

ChunkedArray Plan::aggregate(const ChunkedArray& a, const ExecContext& ctx) const {
  switch (pi_.strategy) {
    case Classified::Strategy::GroupBy: return groupby_aggregate(a, pi_.dims, spec_.f, ctx);
    case Classified::Strategy::Window: return window_aggregate(a, pi_.offsets, spec_.f, ctx);
    case Classified::Strategy::Attribute: return groupby_attribute(a, pi_.attr, spec_.f, ctx);
  }
  return {};
}

MergeResult Plan::update(const ChunkedArray& a, const ChunkedArray& aggregates, const MergeOptions& options,
                         const ExecContext& ctx) const {
  if (const auto* n = std::get_if<NativeUpdate>(&spec_.delta)) {
    MergeResult r;
    r.array = n->fn(a, aggregates, ctx);
    if (!r.array.schema().same_shape(a.schema()))
      throw Error(ErrorCode::SchemaMismatch, "native update changed the array shape");
    r.changed = diff_count(a, r.array);
    if (options.record_delta) r.delta = compute_delta(a, r.array);
    return r;
  }
  const Expression& e = std::get<Expression>(spec_.delta);
  if (pi_.strategy == Classified::Strategy::Attribute)
    return merge_by_attribute(a, aggregates, pi_.attr, e, options, ctx);
  return merge_ex(a, aggregates, e, options, ctx);
}

namespace {

RunResult iterate(const FixPointSpec& spec, const ChunkedArray& start, const ExecOptions& exec,
                  const std::function<std::uint64_t(const ChunkedArray&)>& on_state) {
  Plan plan = Plan::rewrite_naive(spec, start.schema());
  WorkerPool pool(exec.workers);
  std::atomic<std::int64_t> work{0};
  ExecContext ctx{&pool, &work};

  RunResult result;
  ChunkedArray a = start;
  for (std::int64_t i = 1; i <= spec.max_iterations; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    work = 0;
    ChunkedArray g = plan.aggregate(a, ctx);
    MergeResult r = plan.update(a, g, {}, ctx);
    // The comparison reads every cell of the previous state.
    ctx.count(static_cast<std::int64_t>(a.size()));
    double t = termination_value(spec.termination, a, r.array);

    IterationRecord rec;
    rec.iteration = i;
    rec.changed_cells = spec.termination.kind == Termination::Kind::DiffCount ? static_cast<std::int64_t>(t)
                                                                               : diff_count(a, r.array);
    rec.termination_value = t;
    rec.shuffle_performed = false;
    rec.groups_updated = static_cast<std::int64_t>(g.size());
    rec.mini_index = i;
    rec.major_index = i;
    a = std::move(r.array);
    a.set_version(on_state ? on_state(a) : static_cast<std::uint64_t>(i));
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

RunResult run(const FixPointSpec& spec, VersionedStore& store, const ExecOptions& exec) {
  ChunkedArray start = store.scan(spec.array);
  return iterate(spec, start, exec, [&](const ChunkedArray& a) { return store.store(spec.array, a); });
}

RunResult run_array(const FixPointSpec& spec, const ChunkedArray& a, const ExecOptions& exec) {
  return iterate(spec, a, exec, {});
}

}  // namespace itarray
