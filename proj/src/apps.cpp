#include "itarray/apps.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "itarray/text_format.hpp"

namespace itarray {

namespace {

std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::int64_t product(const std::vector<std::int64_t>& v) {
  std::int64_t p = 1;
  for (auto x : v) p *= x;
  return p;
}

std::vector<std::int64_t> default_block(const std::vector<std::int64_t>& block, std::size_t rank) {
  return block.empty() ? std::vector<std::int64_t>(rank, 2) : block;
}

}  // namespace

// ---- SigmaClip ----------------------------------------------------------

ArraySchema image_schema(std::int64_t nx, std::int64_t ny, std::int64_t nt, std::vector<std::int64_t> chunk_extents) {
  return ArraySchema({{"x", 0, nx - 1}, {"y", 0, ny - 1}, {"t", 0, nt - 1}}, {{"d", ScalarKind::Float64}},
                     std::move(chunk_extents));
}

FixPointSpec sigmaclip_spec(const SigmaClipParams& p, std::string array) {
  if (!(p.k > 0) || !std::isfinite(p.k)) throw Error(ErrorCode::BadParams, "k must be positive");
  FixPointSpec spec;
  spec.array = std::move(array);
  spec.pi = AssignmentFunction::groupby({"x", "y"});
  spec.f = {parse_aggregate("avg(d) as mu"), parse_aggregate("stdv(d) as sigma")};
  std::string k = number(p.k);
  spec.delta = Expression::parse("mu - " + k + " * sigma <= d <= mu + " + k + " * sigma ? d : null");
  spec.termination = Termination{};
  spec.epsilon = 0;
  return spec;
}

ChunkedArray coadd(const ChunkedArray& images) {
  return groupby_aggregate(images, {"x", "y"}, {parse_aggregate("sum(d) as coadd")});
}

RunResult sigmaclip_manual(const ChunkedArray& images, const SigmaClipParams& p, const ExecOptions& exec) {
  if (!(p.k > 0)) throw Error(ErrorCode::BadParams, "k must be positive");
  const ArraySchema& s = images.schema();
  auto d_idx = s.attr_index("d");
  if (s.rank() != 3 || !d_idx) throw Error(ErrorCode::SchemaMismatch, "expected <d>[x, y, t]");
  const std::size_t di = *d_idx;
  const std::int64_t nt = s.dims()[2].extent();

  struct Partial {
    std::int64_t c = 0;
    double sum = 0, sum_sq = 0;
  };
  // Group key = linear offset of (x, y) = cell linear / nt.
  auto group_of = [&](std::int64_t lin) { return lin / nt; };

  ChunkedArray remain = images;
  std::vector<std::int64_t> delta;  // cells removed in the last iteration
  std::map<std::int64_t, Partial> c;
  // Per group, the remaining cells in canonical order.
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, double>>> members;
  for (const auto& ref : images.cells()) {
    const Scalar& v = (*ref.tuple)[di];
    if (v.is_null()) continue;
    members[group_of(ref.index)].emplace_back(ref.index, v.as_double());
  }

  RunResult out;
  bool first = true;
  for (std::int64_t it = 1;; ++it) {
    auto t0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = it;
    std::set<std::int64_t> touched;
    // T1 <- partials over the delta, C <- C - T1 (or T1 on the first pass).
    if (first) {
      for (const auto& [g, cells] : members) {
        Partial& pc = c[g];
        for (const auto& [lin, d] : cells) {
          pc.c += 1;
          pc.sum += d;
          pc.sum_sq += d * d;
        }
        rec.cells_touched += static_cast<std::int64_t>(cells.size());
        touched.insert(g);
      }
    } else {
      std::map<std::int64_t, Partial> t1;
      for (std::int64_t lin : delta) {
        double d = images.find_linear(lin)->at(di).as_double();
        Partial& pt = t1[group_of(lin)];
        pt.c += 1;
        pt.sum += d;
        pt.sum_sq += d * d;
      }
      rec.cells_touched += static_cast<std::int64_t>(delta.size());
      for (const auto& [g, pt] : t1) {
        Partial& pc = c[g];
        pc.c -= pt.c;
        pc.sum -= pt.sum;
        pc.sum_sq -= pt.sum_sq;
        if (pc.c == 0) c.erase(g);
        touched.insert(g);
      }
    }
    // T <- mu, sigma of the touched groups; S <- T join Remain; new delta.
    std::vector<std::int64_t> next;
    for (std::int64_t g : touched) {
      auto ci = c.find(g);
      if (ci == c.end()) continue;
      const Partial& pc = ci->second;
      double mu = finalize_avg(pc.c, pc.sum);
      double sigma = finalize_stdv(pc.c, pc.sum, pc.sum_sq);
      double lo = mu - p.k * sigma, hi = mu + p.k * sigma;
      auto& cells = members[g];
      rec.cells_touched += static_cast<std::int64_t>(cells.size());
      std::vector<std::pair<std::int64_t, double>> kept;
      kept.reserve(cells.size());
      for (const auto& cell : cells) {
        if (cell.second < lo || cell.second > hi)
          next.push_back(cell.first);
        else
          kept.push_back(cell);
      }
      cells.swap(kept);
    }
    rec.groups_updated = static_cast<std::int64_t>(touched.size());
    // Remain <- Remain - delta; Collect accumulates implicitly.
    for (std::int64_t lin : next) remain.erase_linear(lin);
    rec.changed_cells = static_cast<std::int64_t>(next.size());
    rec.termination_value = static_cast<double>(next.size());
    rec.major_index = rec.mini_index = it;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.trace.push_back(rec);
    delta = std::move(next);
    first = false;
    if (delta.empty()) break;
    if (it >= 10000) {
      out.final = remain;
      throw NonConvergenceError(std::move(out));
    }
  }
  (void)exec;
  out.final = std::move(remain);
  out.converged = true;
  return out;
}

RunResult run_sigmaclip(const ChunkedArray& images, const SigmaClipParams& p, Strategy strategy,
                        const ExecOptions& exec, VersionedStore* store) {
  FixPointSpec spec = sigmaclip_spec(p);
  VersionedStore local;
  VersionedStore& st = store ? *store : local;
  switch (strategy) {
    case Strategy::Naive:
      st.store(spec.array, images);
      return run(spec, st, exec);
    case Strategy::ManualIncr:
      return sigmaclip_manual(images, p, exec);
    case Strategy::EfficientIncr:
      return run_incremental_array(rewrite_incremental(spec, images.schema()), images, exec);
    case Strategy::EfficientIncrStorage:
      st.store(spec.array, images);
      return run_incremental(rewrite_incremental(spec, images.schema()), st, true, exec);
  }
  throw Error(ErrorCode::StrategyUnavailable, "unknown strategy");
}

// ---- SourceDetect -------------------------------------------------------

FixPointSpec sourcedetect_spec(const SourceDetectParams& p, std::string array) {
  if (p.r < 1) throw Error(ErrorCode::BadParams, "r must be at least 1");
  FixPointSpec spec;
  spec.array = std::move(array);
  spec.pi = AssignmentFunction::window({p.r, p.r});
  spec.f = {parse_aggregate("min(label) as m")};
  spec.delta = Expression::parse("m");
  spec.termination = Termination{};
  spec.epsilon = 0;
  return spec;
}

ChunkedArray initial_labels(const ChunkedArray& image, double threshold) {
  const ArraySchema& s = image.schema();
  if (s.rank() != 2 || s.arity() < 1) throw Error(ErrorCode::SchemaMismatch, "expected a 2-D array");
  ChunkedArray out = create_array(s.with_attrs({{"label", ScalarKind::Int64}}));
  for (const auto& ref : image.cells()) {
    const Scalar& v = (*ref.tuple)[0];
    if (!v.is_null() && v.as_double() > threshold) out.set_linear(ref.index, {Scalar(ref.index)});
  }
  return out;
}

ChunkedArray label_cells(const ChunkedArray& mask) {
  ChunkedArray out = create_array(mask.schema().with_attrs({{"label", ScalarKind::Int64}}));
  for (const auto& ref : mask.cells()) out.set_linear(ref.index, {Scalar(ref.index)});
  return out;
}

PyramidSpec sourcedetect_pyramid(int levels, std::vector<std::int64_t> block, std::optional<Expression> keep,
                                 AggKind block_stat) {
  PyramidSpec p;
  p.levels = levels;
  p.block = default_block(block, 2);
  std::string stat(agg_kind_name(block_stat));
  p.grid_aggs = {parse_aggregate("min(label) as label"), parse_aggregate(stat + "(label) as " + stat)};
  p.keep = keep ? *keep : Expression::parse("count == " + std::to_string(product(p.block)));
  p.project = {Expression::parse("label")};
  p.seed_merge = Expression::parse("ext.label");
  auto b = p.block;
  p.level_spec = [b](const FixPointSpec& base, int level) {
    FixPointSpec s = base;
    if (s.pi.kind == AssignmentFunction::Kind::Window) {
      for (std::size_t i = 0; i < s.pi.offsets.size() && i < b.size(); ++i)
        for (int l = 0; l < level; ++l) s.pi.offsets[i] = coarse_radius(s.pi.offsets[i], b[i]);
    }
    return s;
  };
  return p;
}

// ---- KMeans -------------------------------------------------------------

namespace {

using Centroids = std::vector<std::optional<std::array<double, 2>>>;

Centroids centroids_of(const ChunkedArray& agg, std::int64_t k) {
  Centroids c(static_cast<std::size_t>(k));
  std::int64_t lo = agg.schema().dims()[0].lower;
  for (const auto& ref : agg.cells()) {
    std::int64_t id = lo + ref.index;
    if (id < 0 || id >= k) continue;
    const CellTuple& t = *ref.tuple;
    if (t[0].is_null() || t[1].is_null()) continue;
    c[static_cast<std::size_t>(id)] = std::array<double, 2>{t[0].as_double(), t[1].as_double()};
  }
  return c;
}

std::int64_t nearest(const Centroids& c, double x, double y) {
  std::int64_t best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c[i]) continue;
    double dx = x - (*c[i])[0], dy = y - (*c[i])[1];
    double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int64_t>(i);
    }
  }
  return best;
}

const std::vector<AggregateSpec>& centroid_aggs() {
  static const std::vector<AggregateSpec> aggs = {parse_aggregate("avg(x) as cx"), parse_aggregate("avg(y) as cy")};
  return aggs;
}

void check_points(const ChunkedArray& points) {
  if (points.schema().rank() != 2) throw Error(ErrorCode::SchemaMismatch, "points must be a 2-D array");
}

}  // namespace

ChunkedArray kmeans_initial(const ChunkedArray& points, std::int64_t k, std::uint64_t seed) {
  check_points(points);
  if (k < 1) throw Error(ErrorCode::BadParams, "k_clusters must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, k - 1);
  ChunkedArray out = create_array(points.schema().with_attrs({{"label", ScalarKind::Int64}}));
  for (const auto& ref : points.cells()) out.set_linear(ref.index, {Scalar(pick(rng))});
  return out;
}

ChunkedArray kmeans_assign(const ChunkedArray& points, const Centroids& centroids) {
  check_points(points);
  const ArraySchema& s = points.schema();
  ChunkedArray out = create_array(s.with_attrs({{"label", ScalarKind::Int64}}));
  std::int64_t c[2];
  for (const auto& ref : points.cells()) {
    s.coordinate_into(ref.index, c);
    std::int64_t id = nearest(centroids, static_cast<double>(c[0]), static_cast<double>(c[1]));
    if (id >= 0) out.set_linear(ref.index, {Scalar(id)});
  }
  return out;
}

FixPointSpec kmeans_spec(std::int64_t k_clusters, std::string array) {
  if (k_clusters < 1) throw Error(ErrorCode::BadParams, "k_clusters must be at least 1");
  FixPointSpec spec;
  spec.array = std::move(array);
  spec.pi = AssignmentFunction::attribute("label");
  spec.f = centroid_aggs();
  NativeUpdate nu;
  nu.name = "kmeans_assign";
  nu.fn = [k_clusters](const ChunkedArray& a, const ChunkedArray& agg, const ExecContext& ctx) {
    ctx.count(static_cast<std::int64_t>(a.size()));
    return kmeans_assign(a, centroids_of(agg, k_clusters));
  };
  spec.delta = std::move(nu);
  spec.termination = Termination{};
  spec.epsilon = 0;
  return spec;
}

KMeansResult kmeans_run(const ChunkedArray& points, const KMeansParams& p, const std::optional<ChunkedArray>& initial,
                        const ExecOptions& exec) {
  check_points(points);
  if (p.k_clusters < 1) throw Error(ErrorCode::BadParams, "k_clusters must be at least 1");
  if (static_cast<std::int64_t>(points.size()) < p.k_clusters)
    throw Error(ErrorCode::TooFewPoints, "fewer points than clusters");
  FixPointSpec spec = kmeans_spec(p.k_clusters);
  spec.max_iterations = p.max_iterations;
  ChunkedArray start = initial ? *initial : kmeans_initial(points, p.k_clusters, p.seed);
  RunResult r = run_array(spec, start, exec);
  KMeansResult out;
  out.centroids = centroids_of(groupby_attribute(r.final, "label", centroid_aggs()), p.k_clusters);
  out.labeled = std::move(r.final);
  out.trace = std::move(r.trace);
  out.converged = r.converged;
  return out;
}

KMeansMultiresResult kmeans_multires(const ChunkedArray& points, const KMeansParams& p, int levels,
                                     std::vector<std::int64_t> block, const ExecOptions& exec) {
  check_points(points);
  if (levels < 1) throw Error(ErrorCode::BadPyramidSpec, "a pyramid needs at least one level");
  if (static_cast<std::int64_t>(points.size()) < p.k_clusters)
    throw Error(ErrorCode::TooFewPoints, "fewer points than clusters");
  block = default_block(block, 2);
  if (block.size() != 2 || block[0] < 1 || block[1] < 1) throw Error(ErrorCode::BadPyramidSpec, "bad block");

  // A coarse point exists where the block holds at least one point. Levels
  // with fewer points than clusters are not used.
  std::vector<ChunkedArray> pyramid{points};
  ChunkedArray ones = create_array(points.schema().with_attrs({{"label", ScalarKind::Int64}}));
  for (const auto& ref : points.cells()) ones.set_linear(ref.index, {Scalar(std::int64_t{0})});
  pyramid[0] = ones;
  for (int level = 1; level < levels; ++level) {
    ChunkedArray g = grid(pyramid.back(), block, {parse_aggregate("count(label) as n")});
    g = filter(g, Expression::parse("n >= 1"));
    ChunkedArray next = apply(g, {{"label", ScalarKind::Int64}}, {Expression::parse("0")});
    if (static_cast<std::int64_t>(next.size()) < p.k_clusters) break;
    pyramid.push_back(std::move(next));
  }

  KMeansMultiresResult out;
  out.traces.resize(static_cast<std::size_t>(levels));
  std::optional<Centroids> seed;
  for (int level = static_cast<int>(pyramid.size()) - 1; level >= 0; --level) {
    std::optional<ChunkedArray> initial;
    if (seed) {
      Centroids scaled = *seed;
      for (auto& c : scaled)
        if (c)
          for (int i = 0; i < 2; ++i) (*c)[i] = (*c)[i] * static_cast<double>(block[i]) + (block[i] - 1) / 2.0;
      initial = kmeans_assign(pyramid[level], scaled);
    }
    KMeansResult r = kmeans_run(pyramid[level], p, initial, exec);
    seed = r.centroids;
    out.traces[static_cast<std::size_t>(level)] = r.trace;
    if (level == 0) out.final = std::move(r);
  }
  return out;
}

// ---- Synthetic images ---------------------------------------------------

namespace {

void check_generate(const GenerateParams& p) {
  if (p.nx < 1 || p.ny < 1 || p.nt < 1) throw Error(ErrorCode::BadParams, "extents must be positive");
  if (p.n_sources < 0) throw Error(ErrorCode::BadParams, "n_sources must be non-negative");
  if (!(p.noise >= 0) || !std::isfinite(p.noise)) throw Error(ErrorCode::BadParams, "noise must be non-negative");
  if (!(p.outlier_rate >= 0 && p.outlier_rate <= 1)) throw Error(ErrorCode::BadParams, "outlier rate must be in [0, 1]");
  if (!std::isfinite(p.background) || !std::isfinite(p.outlier_sigmas))
    throw Error(ErrorCode::BadParams, "non-finite parameter");
}

std::vector<Source> draw_sources(const GenerateParams& p, std::mt19937_64& rng) {
  if (!p.sources.empty()) return p.sources;
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(p.nx - 1));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(p.ny - 1));
  std::uniform_real_distribution<double> amp(100.0, 400.0);
  std::uniform_real_distribution<double> width(1.0, 3.0);
  std::vector<Source> out;
  for (std::int64_t i = 0; i < p.n_sources; ++i) {
    Source s;
    s.x = ux(rng);
    s.y = uy(rng);
    s.amplitude = amp(rng);
    s.width = width(rng);
    out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<Source> generated_sources(const GenerateParams& p) {
  check_generate(p);
  std::mt19937_64 rng(p.seed);
  return draw_sources(p, rng);
}

ChunkedArray generate_images(const GenerateParams& p) {
  check_generate(p);
  std::mt19937_64 rng(p.seed);
  std::vector<Source> sources = draw_sources(p, rng);

  std::vector<double> sky(static_cast<std::size_t>(p.nx * p.ny), p.background);
  for (std::int64_t x = 0; x < p.nx; ++x)
    for (std::int64_t y = 0; y < p.ny; ++y) {
      double v = 0;
      for (const auto& s : sources) {
        double dx = static_cast<double>(x) - s.x, dy = static_cast<double>(y) - s.y;
        v += s.amplitude * std::exp(-(dx * dx + dy * dy) / (2 * s.width * s.width));
      }
      sky[static_cast<std::size_t>(x * p.ny + y)] += v;
    }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double spike = std::round(p.outlier_sigmas * p.noise);
  ChunkedArray out = create_array(image_schema(p.nx, p.ny, p.nt, p.chunk_extents));
  std::int64_t lin = 0;
  for (std::int64_t x = 0; x < p.nx; ++x)
    for (std::int64_t y = 0; y < p.ny; ++y)
      for (std::int64_t t = 0; t < p.nt; ++t, ++lin) {
        double v = std::round(sky[static_cast<std::size_t>(x * p.ny + y)] + p.noise * gauss(rng));
        if (uniform(rng) < p.outlier_rate) v += spike;
        out.set_linear(lin, {Scalar(v)});
      }
  return out;
}

ChunkedArray detection_labels(const ChunkedArray& images, double background, double noise, double threshold_sigmas) {
  ChunkedArray stats =
      groupby_aggregate(images, {"x", "y"}, {parse_aggregate("avg(d) as mu"), parse_aggregate("count(d) as n")});
  Expression keep = Expression::parse("mu > " + number(background) + " + " + number(threshold_sigmas * noise) +
                                      " / sqrt(float(n))");
  return label_cells(filter(stats, keep));
}

// ---- Bench --------------------------------------------------------------

namespace {

BenchRun make_run(std::string strategy, std::string policy, bool multires, std::vector<IterationTrace> levels,
                  ChunkedArray final) {
  BenchRun r;
  r.strategy = std::move(strategy);
  r.policy = std::move(policy);
  r.multires = multires;
  r.levels = std::move(levels);
  r.final_hash = array_hash(final);
  r.final = std::move(final);
  return r;
}

std::vector<std::int64_t> default_chunks(const ArraySchema& s, const std::vector<std::int64_t>& chunks) {
  if (!chunks.empty()) return chunks;
  std::vector<std::int64_t> out;
  for (const auto& d : s.dims()) out.push_back(std::max<std::int64_t>(1, (d.extent() + 3) / 4));
  return out;
}

void bench_sigmaclip(const BenchConfig& cfg, BenchReport& rep) {
  if (cfg.multires) throw Error(ErrorCode::StrategyUnavailable, "sigmaclip has no multi-resolution variant");
  ChunkedArray images = generate_images(cfg.image);
  SigmaClipParams p{cfg.k};
  ExecOptions exec{cfg.workers};
  std::vector<Strategy> strategies = cfg.strategies;
  if (strategies.empty() && cfg.policies.empty())
    strategies = {Strategy::Naive, Strategy::ManualIncr, Strategy::EfficientIncr, Strategy::EfficientIncrStorage};
  for (Strategy s : strategies) {
    RunResult r = run_sigmaclip(images, p, s, exec);
    rep.runs.push_back(make_run(std::string(strategy_name(s)), "", false, {r.trace}, std::move(r.final)));
  }
  for (const auto& pol : cfg.policies) {
    if (pol.kind != ShufflePolicy::Kind::EveryK || pol.k != 1)
      throw Error(ErrorCode::StrategyUnavailable, "sigmaclip only runs with shuffles every iteration (t1)");
    std::vector<std::int64_t> ce = default_chunks(images.schema(), cfg.chunks);
    if (ce.size() == 3) ce[2] = images.schema().dims()[2].extent();
    ChunkedArray chunked = rechunk(images, ce);
    ParallelResult r = run_parallel(sigmaclip_spec(p), chunked, {pol, cfg.workers, {}});
    rep.runs.push_back(make_run("naive", pol.to_string(), false, {r.trace}, std::move(r.final)));
  }
}

ChunkedArray bench_labels(const BenchConfig& cfg) {
  ChunkedArray images = generate_images(cfg.image);
  return detection_labels(images, cfg.image.background, cfg.image.noise, cfg.threshold_sigmas);
}

void bench_sourcedetect(const BenchConfig& cfg, BenchReport& rep) {
  for (Strategy s : cfg.strategies)
    if (s != Strategy::Naive)
      throw Error(ErrorCode::StrategyUnavailable, "sourcedetect is not incrementalizable");
  ChunkedArray labels = bench_labels(cfg);
  FixPointSpec spec = sourcedetect_spec({cfg.r, 0.0});
  ExecOptions exec{cfg.workers};
  bool direct = !cfg.strategies.empty() || (cfg.policies.empty()) || cfg.multires;
  if (direct) {
    RunResult r = run_array(spec, labels, exec);
    rep.runs.push_back(make_run("naive", "", false, {r.trace}, std::move(r.final)));
  }
  for (const auto& pol : cfg.policies) {
    ChunkedArray chunked = rechunk(labels, default_chunks(labels.schema(), cfg.chunks));
    ParallelResult r = run_parallel(spec, chunked, {pol, cfg.workers, {}});
    rep.runs.push_back(make_run("naive", pol.to_string(), false, {r.trace}, std::move(r.final)));
  }
  if (cfg.multires) {
    PyramidSpec pyr = sourcedetect_pyramid(cfg.levels, cfg.block);
    PyramidState st = build_pyramid(labels, pyr);
    LevelRunner runner = [&](const FixPointSpec& s, const ChunkedArray& a) { return run_array(s, a, exec); };
    MultiresResult r = run_multires(st, spec, pyr, runner);
    rep.runs.push_back(make_run("naive", "", true, std::move(r.traces), std::move(r.final)));
  }
}

void bench_kmeans(const BenchConfig& cfg, BenchReport& rep) {
  for (Strategy s : cfg.strategies)
    if (s != Strategy::Naive) throw Error(ErrorCode::StrategyUnavailable, "kmeans is not incrementalizable");
  if (!cfg.policies.empty()) throw Error(ErrorCode::StrategyUnavailable, "kmeans has no chunk-parallel variant");
  ChunkedArray points = bench_labels(cfg);
  KMeansParams p{cfg.clusters, cfg.image.seed, 1000};
  ExecOptions exec{cfg.workers};
  KMeansResult r = kmeans_run(points, p, std::nullopt, exec);
  rep.runs.push_back(make_run("naive", "", false, {r.trace}, std::move(r.labeled)));
  if (cfg.multires) {
    KMeansMultiresResult m = kmeans_multires(points, p, cfg.levels, cfg.block, exec);
    rep.runs.push_back(make_run("naive", "", true, std::move(m.traces), std::move(m.final.labeled)));
  }
}

}  // namespace

BenchReport bench(const BenchConfig& config) {
  BenchReport rep;
  rep.app = config.app;
  if (config.app == "sigmaclip")
    bench_sigmaclip(config, rep);
  else if (config.app == "sourcedetect")
    bench_sourcedetect(config, rep);
  else if (config.app == "kmeans")
    bench_kmeans(config, rep);
  else
    throw Error(ErrorCode::BadParams, "unknown app '" + config.app + "'");
  // Coarse-to-fine KMeans starts from different centroids and may settle in
  // another local optimum, so it is reported but not compared.
  const BenchRun* ref = nullptr;
  for (const auto& r : rep.runs) {
    if (config.app == "kmeans" && r.multires) continue;
    if (!ref)
      ref = &r;
    else if (r.final_hash != ref->final_hash || !same_cells(r.final, ref->final))
      rep.agree = false;
  }
  return rep;
}

std::string BenchReport::csv() const {
  std::ostringstream o;
  o << "app,strategy,policy,multires,level,iteration,mini_index,major_index,changed_cells,shuffled_chunks,"
       "shuffled_cells,shuffled_bytes,cells_touched,groups_updated,termination_value\n";
  for (const auto& r : runs)
    for (std::size_t level = 0; level < r.levels.size(); ++level)
      for (const auto& it : r.levels[level])
        o << app << ',' << r.strategy << ',' << r.policy << ',' << (r.multires ? 1 : 0) << ',' << level << ','
          << it.iteration << ',' << it.mini_index << ',' << it.major_index << ',' << it.changed_cells << ','
          << it.shuffled_chunks << ',' << it.shuffled_cells << ',' << it.shuffled_bytes << ',' << it.cells_touched
          << ',' << it.groups_updated << ',' << number(it.termination_value) << '\n';
  return o.str();
}

std::string BenchReport::summary() const {
  std::ostringstream o;
  for (const auto& r : runs) {
    std::int64_t touched = 0, shuffles = 0, majors = 0;
    o << app << " strategy=" << r.strategy << " policy=" << (r.policy.empty() ? "-" : r.policy)
      << " multires=" << (r.multires ? 1 : 0) << " iterations=";
    for (std::size_t level = 0; level < r.levels.size(); ++level) {
      const auto& tr = r.levels[level];
      o << (level ? "/" : "") << tr.size();
      for (const auto& it : tr) {
        touched += it.cells_touched;
        shuffles += it.shuffle_performed ? 1 : 0;
        majors = std::max(majors, it.major_index);
      }
    }
    o << " cells_touched=" << touched;
    if (!r.policy.empty()) o << " majors=" << majors << " shuffles=" << shuffles;
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.final_hash));
    o << " cells=" << r.final.size() << " hash=" << hash << '\n';
  }
  o << (agree ? "final arrays agree" : "MISMATCH between final arrays") << '\n';
  return o.str();
}

}  // namespace itarray
