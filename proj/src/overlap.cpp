#include "itarray/overlap.hpp"

#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <deque>

namespace itarray {

ShufflePolicy ShufflePolicy::every(std::int64_t k) {
  if (k < 1) throw Error(ErrorCode::BadParams, "shuffle period must be >= 1");
  ShufflePolicy p;
  p.kind = Kind::EveryK;
  p.k = k;
  return p;
}

ShufflePolicy ShufflePolicy::on_local_convergence() {
  ShufflePolicy p;
  p.kind = Kind::OnLocalConvergence;
  return p;
}

ShufflePolicy ShufflePolicy::change_threshold(std::int64_t n) {
  if (n < 0) throw Error(ErrorCode::BadParams, "change threshold must be >= 0");
  ShufflePolicy p;
  p.kind = Kind::ChangeThreshold;
  p.n = n;
  return p;
}

namespace {

std::int64_t parse_count(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw Error(ErrorCode::ParseError, "bad shuffle policy '" + std::string(whole) + "'");
  return v;
}

}  // namespace

ShufflePolicy ShufflePolicy::parse(std::string_view text) {
  if (text == "converge") return on_local_convergence();
  if (text.substr(0, 7) == "thresh=") return change_threshold(parse_count(text.substr(7), text));
  if (text.substr(0, 3) == "tK=") return every(parse_count(text.substr(3), text));
  if (text.size() > 1 && text[0] == 't') return every(parse_count(text.substr(1), text));
  throw Error(ErrorCode::ParseError, "bad shuffle policy '" + std::string(text) + "'");
}

std::string ShufflePolicy::to_string() const {
  switch (kind) {
    case Kind::EveryK: return "t" + std::to_string(k);
    case Kind::OnLocalConvergence: return "converge";
    case Kind::ChangeThreshold: return "thresh=" + std::to_string(n);
  }
  return {};
}

bool signal_opt(const ShufflePolicy& policy, std::int64_t iteration, std::span<const std::int64_t> local) {
  if (iteration < 1) throw Error(ErrorCode::BadParams, "iterations start at 1");
  std::int64_t total = 0;
  for (auto n : local) total += n;
  switch (policy.kind) {
    case ShufflePolicy::Kind::EveryK: return iteration % policy.k == 0;
    case ShufflePolicy::Kind::OnLocalConvergence: return total == 0;
    case ShufflePolicy::Kind::ChangeThreshold: return total <= policy.n;
  }
  return true;
}

WorkerPartition WorkerPartition::round_robin(const ChunkedArray& a, std::size_t workers) {
  WorkerPartition p;
  p.workers = std::max<std::size_t>(workers, 1);
  std::size_t i = 0;
  for (const auto& [key, ch] : a.chunks()) p.assignment[key] = i++ % p.workers;
  return p;
}

namespace {

// Keys of the present chunks whose core box meets the halo box of `key`.
std::vector<std::int64_t> neighbours(const ChunkedArray& a, std::int64_t key) {
  const ArraySchema& s = a.schema();
  std::vector<std::int64_t> out;
  bool any_radius = false;
  for (auto r : s.overlap()) any_radius = any_radius || r > 0;
  if (!any_radius) return out;
  Coordinate id = s.chunk_id(key);
  const std::size_t d = s.rank();
  Coordinate lo(d), hi(d), cur(d);
  for (std::size_t i = 0; i < d; ++i) {
    std::int64_t step = s.overlap()[i] > 0 ? 1 : 0;
    lo[i] = std::max<std::int64_t>(id[i] - step, 0);
    hi[i] = std::min<std::int64_t>(id[i] + step, s.chunk_grid()[i] - 1);
  }
  cur = lo;
  Coordinate cell(d);
  for (;;) {
    if (cur != id) {
      for (std::size_t i = 0; i < d; ++i) cell[i] = s.dims()[i].lower + cur[i] * s.chunk_extents()[i];
      std::int64_t k = s.chunk_key(cell);
      auto it = a.chunks().find(k);
      if (it != a.chunks().end() && !it->second->core.empty()) out.push_back(k);
    }
    std::size_t i = d;
    bool done = true;
    while (i > 0) {
      --i;
      if (cur[i] < hi[i]) {
        ++cur[i];
        done = false;
        break;
      }
      cur[i] = lo[i];
    }
    if (done) break;
  }
  return out;
}

struct Message {
  std::int64_t from;
  std::int64_t to;
  std::shared_ptr<const Chunk> payload;
  std::int64_t bytes;
};

}  // namespace

ShuffleStats shuffle_overlap(ChunkedArray& a) {
  const ArraySchema& s = a.schema();
  ShuffleStats stats;
  const std::int64_t cell_bytes = static_cast<std::int64_t>(8 * (s.rank() + s.arity()));

  // Scatter: every chunk sends itself to each neighbour that needs it.
  std::deque<Message> queue;
  std::vector<std::int64_t> receivers;
  for (const auto& [key, ch] : a.chunks()) {
    receivers.push_back(key);
    for (std::int64_t from : neighbours(a, key)) {
      auto sender = a.chunks().at(from);
      queue.push_back({from, key, sender, static_cast<std::int64_t>(sender->core.size()) * cell_bytes});
    }
  }
  // Gather: each receiver rebuilds its halo from the chunks it got.
  std::map<std::int64_t, std::map<std::int64_t, CellTuple>> halos;
  for (auto k : receivers) halos[k];
  Coordinate c(s.rank());
  while (!queue.empty()) {
    Message m = std::move(queue.front());
    queue.pop_front();
    ++stats.chunks;
    stats.cells += static_cast<std::int64_t>(m.payload->core.size());
    stats.bytes += m.bytes;
    Box box = s.halo_box(m.to);
    auto& halo = halos[m.to];
    for (const auto& [lin, t] : m.payload->core) {
      s.coordinate_into(lin, c);
      if (box.contains(c)) halo.emplace(lin, t);
    }
  }
  for (auto& [key, halo] : halos) {
    if (a.chunk(key)->halo == halo) continue;
    stats.halos_changed = true;
    a.mutable_chunk(key).halo = std::move(halo);
  }
  return stats;
}

ChunkedArray partition_with_overlap(const ChunkedArray& a, const std::vector<std::int64_t>& radius,
                                    const std::vector<std::int64_t>* window_offsets) {
  const ArraySchema& s = a.schema();
  if (radius.size() != s.rank()) throw Error(ErrorCode::BadOffsets, "overlap needs one radius per dimension");
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (radius[i] < 0) throw Error(ErrorCode::BadOffsets, "overlap radius must be non-negative");
    if (radius[i] >= s.chunk_extents()[i])
      throw Error(ErrorCode::OverlapTooLarge, "overlap radius must be smaller than the chunk extent");
    if (window_offsets && i < window_offsets->size() && radius[i] < (*window_offsets)[i])
      throw Error(ErrorCode::OverlapTooSmall, "overlap radius is smaller than the window");
  }
  ChunkedArray out = rechunk(a, s.chunk_extents(), radius);
  shuffle_overlap(out);
  return out;
}

namespace {

bool monotone(const std::vector<AggregateSpec>& f) {
  for (const auto& a : f)
    if (a.kind != AggKind::Min && a.kind != AggKind::Max) return false;
  return true;
}

struct LocalStep {
  std::shared_ptr<Chunk> chunk;
  std::int64_t changed = 0;
  std::int64_t touched = 0;
};

}  // namespace

ParallelResult run_parallel(const FixPointSpec& spec, const ChunkedArray& input, const ParallelOptions& options) {
  const ArraySchema& s0 = input.schema();
  Plan plan = Plan::rewrite_naive(spec, s0);
  const Classified& pi = plan.pi();
  const auto* delta = std::get_if<Expression>(&spec.delta);
  if (!delta) throw Error(ErrorCode::StrategyUnavailable, "chunk-parallel execution needs an expression update");
  const bool every_iteration = options.policy.kind == ShufflePolicy::Kind::EveryK && options.policy.k == 1;

  std::vector<std::int64_t> radius = options.radius;
  switch (pi.strategy) {
    case Classified::Strategy::Window:
      if (!every_iteration && !monotone(spec.f))
        throw Error(ErrorCode::StrategyUnavailable, "mini-iterations need min/max window aggregates");
      if (radius.empty()) radius = pi.offsets;
      break;
    case Classified::Strategy::GroupBy: {
      if (!every_iteration)
        throw Error(ErrorCode::StrategyUnavailable, "group-by specs synchronize every iteration (policy t1)");
      for (std::size_t i = 0; i < s0.rank(); ++i) {
        bool grouped = false;
        for (const auto& d : pi.dims) grouped = grouped || d == s0.dims()[i].name;
        if (!grouped && s0.chunk_extents()[i] != s0.dims()[i].extent())
          throw Error(ErrorCode::StrategyUnavailable, "chunking splits groups along '" + s0.dims()[i].name + "'");
      }
      if (radius.empty()) radius.assign(s0.rank(), 0);
      break;
    }
    case Classified::Strategy::Attribute:
      throw Error(ErrorCode::StrategyUnavailable, "attribute grouping is not chunk-local");
  }

  ChunkedArray a = partition_with_overlap(
      input, radius, pi.strategy == Classified::Strategy::Window ? &pi.offsets : nullptr);
  const ArraySchema& s = a.schema();
  ChunkedArray probe_g = plan.aggregate(ChunkedArray(s), {});
  BoundExpression update = BoundExpression::bind(*delta, s, &probe_g.schema());
  update.check_assignable(s.attrs());

  WorkerPartition partition = WorkerPartition::round_robin(a, options.workers);
  std::vector<std::int64_t> keys;
  for (const auto& [key, w] : partition.assignment) keys.push_back(key);
  std::vector<std::vector<std::size_t>> per_worker(partition.workers);
  for (std::size_t i = 0; i < keys.size(); ++i) per_worker[partition.assignment[keys[i]]].push_back(i);
  WorkerPool pool(partition.workers);

  auto local_step = [&](const Chunk& ch) {
    LocalStep out;
    out.chunk = std::make_shared<Chunk>();
    out.chunk->key = ch.key;
    out.chunk->halo = ch.halo;
    out.touched = static_cast<std::int64_t>(ch.core.size());
    Coordinate c(s.rank());
    if (pi.strategy == Classified::Strategy::Window) {
      auto g = window_aggregate_chunk(s, ch, pi.offsets, spec.f);
      for (const auto& [lin, t] : ch.core) {
        s.coordinate_into(lin, c);
        CellTuple v = update.eval_tuple({&t, &g.at(lin), c});
        if (all_null(v)) {
          ++out.changed;
          continue;
        }
        if (v != t) ++out.changed;
        out.chunk->core.emplace_hint(out.chunk->core.end(), lin, std::move(v));
      }
    } else {
      ChunkedArray local(s);
      auto copy = std::make_shared<Chunk>();
      copy->key = ch.key;
      copy->core = ch.core;
      local.put_chunk(copy);
      ChunkedArray g = groupby_aggregate(local, pi.dims, spec.f);
      MergeResult r = merge_ex(local, g, *delta, {});
      out.changed = r.changed;
      out.touched *= 2;
      if (const Chunk* nc = r.array.chunk(ch.key)) out.chunk->core = nc->core;
    }
    return out;
  };

  ParallelResult result;
  std::int64_t major = 0;
  for (std::int64_t m = 1;; ++m) {
    if (m > spec.max_iterations) {
      RunResult rr;
      a.clear_halos();
      rr.final = rechunk(a, s0.chunk_extents(), s0.overlap());
      rr.trace = std::move(result.trace);
      throw NonConvergenceError(std::move(rr));
    }
    auto t0 = std::chrono::steady_clock::now();
    std::vector<LocalStep> steps(keys.size());
    pool.run([&](std::size_t w) {
      for (std::size_t i : per_worker[w]) steps[i] = local_step(*a.chunk(keys[i]));
    });
    std::vector<std::int64_t> local(keys.size());
    IterationRecord rec;
    rec.iteration = m;
    rec.mini_index = m;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      local[i] = steps[i].changed;
      rec.changed_cells += steps[i].changed;
      rec.cells_touched += steps[i].touched;
      a.put_chunk(std::move(steps[i].chunk));
    }
    rec.termination_value = static_cast<double>(rec.changed_cells);
    bool sync = signal_opt(options.policy, m, local);
    bool done = false;
    if (sync) {
      ShuffleStats st = shuffle_overlap(a);
      ++major;
      rec.shuffle_performed = true;
      rec.shuffled_chunks = st.chunks;
      rec.shuffled_cells = st.cells;
      rec.shuffled_bytes = st.bytes;
      result.shuffled_chunks += st.chunks;
      result.shuffled_cells += st.cells;
      result.shuffled_bytes += st.bytes;
      // Nothing changed on data that was already current everywhere.
      done = rec.changed_cells == 0 && !st.halos_changed;
    }
    rec.major_index = major;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(rec);
    if (done) {
      result.minis = m;
      result.majors = major;
      result.converged = true;
      break;
    }
  }
  a.clear_halos();
  result.final = rechunk(a, s0.chunk_extents(), s0.overlap());
  return result;
}

}  // namespace itarray
