// itarray command line: generate inputs, run the three applications, compare
// strategies, dump and diff arrays.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "itarray/apps.hpp"
#include "itarray/incremental.hpp"
#include "itarray/multires.hpp"
#include "itarray/overlap.hpp"
#include "itarray/text_format.hpp"

using namespace itarray;

namespace {

std::vector<std::int64_t> parse_extents(const std::string& text, char sep) {
  std::vector<std::int64_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorCode::BadParams, "bad extent list '" + text + "'");
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

struct ImageOptions {
  std::uint64_t seed = 1;
  std::int64_t nx = 64, ny = 64, nt = 16, sources = 8;
  double noise = 10, background = 1000, outlier_rate = 0.01;

  void add(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_option("--nx", nx, "Image width")->capture_default_str();
    cmd->add_option("--ny", ny, "Image height")->capture_default_str();
    cmd->add_option("--nt", nt, "Number of exposures")->capture_default_str();
    cmd->add_option("--sources", sources, "Number of sources")->capture_default_str();
    cmd->add_option("--noise", noise, "Noise sigma per pixel")->capture_default_str();
    cmd->add_option("--background", background, "Sky level")->capture_default_str();
    cmd->add_option("--outlier-rate", outlier_rate, "Fraction of spiked pixels")->capture_default_str();
  }
  GenerateParams params() const {
    GenerateParams g;
    g.seed = seed;
    g.nx = nx;
    g.ny = ny;
    g.nt = nt;
    g.n_sources = sources;
    g.noise = noise;
    g.background = background;
    g.outlier_rate = outlier_rate;
    return g;
  }
};

struct ParallelFlags {
  std::string chunks, overlap, policy, grid, multires_agg = "count", keep;
  std::size_t workers = 1;
  int levels = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--chunks", chunks, "Chunk extents, e.g. 32x32");
    cmd->add_option("--overlap", overlap, "Overlap radius per dimension, e.g. 1,1");
    cmd->add_option("--policy", policy, "Shuffle policy: t1|t5|t10|tK=<k>|converge|thresh=<n>");
    cmd->add_option("--workers", workers, "Worker threads")->capture_default_str();
    cmd->add_option("--levels", levels, "Pyramid levels (1 = no multi-resolution)")->capture_default_str();
    cmd->add_option("--grid", grid, "Pyramid block, e.g. 2x2");
    cmd->add_option("--multires-agg", multires_agg, "Block statistic kept next to the label")->capture_default_str();
    cmd->add_option("--keep", keep, "Block predicate, e.g. \"count == 4\"");
  }
};

void write_trace_csv(const std::string& path, const std::string& app, const std::string& strategy,
                     const std::string& policy, bool multires, std::vector<IterationTrace> levels,
                     const ChunkedArray& final) {
  if (path.empty()) return;
  BenchReport rep;
  rep.app = app;
  BenchRun run;
  run.strategy = strategy;
  run.policy = policy;
  run.multires = multires;
  run.levels = std::move(levels);
  run.final_hash = array_hash(final);
  rep.runs.push_back(std::move(run));
  write_text(path, rep.csv());
}

std::optional<NativeUpdate> resolve_native(const std::string& name, std::int64_t clusters) {
  if (name == "kmeans_assign") return std::get<NativeUpdate>(kmeans_spec(clusters).delta);
  return std::nullopt;
}

std::int64_t total_iterations(const std::vector<IterationTrace>& levels) {
  std::int64_t n = 0;
  for (const auto& l : levels) n += static_cast<std::int64_t>(l.size());
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunked sparse arrays with iterative fixpoint queries"};
  app.require_subcommand(1);

  // generate
  ImageOptions gen_img;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic image stack <float d>[x,y,t]");
  gen_img.add(gen);
  gen->add_option("-o,--out", gen_out, "Output file (default stdout)");

  // run
  std::string run_app, run_input, run_out, run_csv, run_config, run_strategy = "naive", run_store;
  ImageOptions run_img;
  ParallelFlags run_par;
  double run_k = 3.0, run_threshold = 5.0;
  std::int64_t run_r = 1, run_clusters = 4;
  bool run_print_spec = false, run_coadd = false;
  CLI::App* run = app.add_subcommand("run", "Run one application to its fixpoint");
  run->add_option("app", run_app, "sigmaclip | sourcedetect | kmeans")
      ->required()
      ->check(CLI::IsMember({"sigmaclip", "sourcedetect", "kmeans"}));
  run->add_option("-i,--input", run_input, "Input array dump (default: generated images)");
  run->add_option("-o,--out", run_out, "Write the final array here");
  run->add_option("--csv", run_csv, "Write per-iteration counters as CSV");
  run->add_option("--config", run_config, "Fixpoint spec file replacing the built-in one");
  run->add_option("--strategy", run_strategy, "naive | manual-incr | efficient-incr | efficient-incr+storage")
      ->capture_default_str();
  run->add_option("--store", run_store, "Directory for the versioned store");
  run->add_option("--k", run_k, "SigmaClip: deviation multiplier")->capture_default_str();
  run->add_option("--r", run_r, "SourceDetect: neighbourhood radius")->capture_default_str();
  run->add_option("--threshold-sigmas", run_threshold, "Detection threshold in noise sigmas")->capture_default_str();
  run->add_option("--clusters", run_clusters, "KMeans: number of clusters")->capture_default_str();
  run->add_flag("--print-spec", run_print_spec, "Print the fixpoint spec and exit");
  run->add_flag("--coadd", run_coadd, "SigmaClip: write the co-added image instead of the clipped stack");
  run_img.add(run);
  run_par.add(run);

  // bench
  std::string bench_app, bench_strategies, bench_policies, bench_csv;
  ImageOptions bench_img;
  ParallelFlags bench_par;
  bool bench_multires = false;
  double bench_k = 3.0, bench_threshold = 5.0;
  std::int64_t bench_r = 1, bench_clusters = 4;
  CLI::App* bch = app.add_subcommand("bench", "Compare strategies on one generated input");
  bch->add_option("app", bench_app, "sigmaclip | sourcedetect | kmeans")
      ->required()
      ->check(CLI::IsMember({"sigmaclip", "sourcedetect", "kmeans"}));
  bch->add_option("--strategy", bench_strategies, "Comma-separated strategies (default: all that apply)");
  bch->add_option("--policies", bench_policies, "Comma-separated shuffle policies");
  bch->add_flag("--multires", bench_multires, "Add a multi-resolution run");
  bch->add_option("--csv", bench_csv, "Write the metrics CSV here (- for stdout)");
  bch->add_option("--k", bench_k, "SigmaClip: deviation multiplier")->capture_default_str();
  bch->add_option("--r", bench_r, "SourceDetect: neighbourhood radius")->capture_default_str();
  bch->add_option("--threshold-sigmas", bench_threshold, "Detection threshold in noise sigmas")->capture_default_str();
  bch->add_option("--clusters", bench_clusters, "KMeans: number of clusters")->capture_default_str();
  bench_img.add(bch);
  bench_par.add(bch);
  bench_par.levels = 2;

  // dump
  std::string dump_in;
  bool dump_hash = false;
  CLI::App* dmp = app.add_subcommand("dump", "Print an array in canonical form");
  dmp->add_option("file", dump_in, "Array file")->required();
  dmp->add_flag("--hash", dump_hash, "Print only the content hash");

  // diff
  std::string diff_a, diff_b;
  CLI::App* dff = app.add_subcommand("diff", "Count cells that differ between two arrays");
  dff->add_option("a", diff_a, "First array")->required();
  dff->add_option("b", diff_b, "Second array")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      std::ostringstream out;
      dump_array_to(out, generate_images(gen_img.params()));
      write_text(gen_out, out.str());
      return 0;
    }

    if (*dmp) {
      ChunkedArray a = read_array_file(dump_in);
      if (dump_hash)
        std::printf("%016llx\n", static_cast<unsigned long long>(array_hash(a)));
      else
        dump_array_to(std::cout, a);
      return 0;
    }

    if (*dff) {
      ChunkedArray a = read_array_file(diff_a), b = read_array_file(diff_b);
      std::int64_t n = diff_count(a, b);
      std::printf("%lld cells differ\n", static_cast<long long>(n));
      return n == 0 ? 0 : 1;
    }

    if (*bch) {
      BenchConfig cfg;
      cfg.app = bench_app;
      for (const auto& s : split(bench_strategies, ',')) cfg.strategies.push_back(parse_strategy(s));
      for (const auto& p : split(bench_policies, ',')) cfg.policies.push_back(ShufflePolicy::parse(p));
      cfg.multires = bench_multires;
      cfg.levels = bench_par.levels;
      cfg.block = parse_extents(bench_par.grid, 'x');
      cfg.workers = bench_par.workers;
      cfg.image = bench_img.params();
      cfg.chunks = parse_extents(bench_par.chunks, 'x');
      cfg.k = bench_k;
      cfg.r = bench_r;
      cfg.threshold_sigmas = bench_threshold;
      cfg.clusters = bench_clusters;
      BenchReport rep = bench(cfg);
      if (!bench_csv.empty()) write_text(bench_csv, rep.csv());
      std::cerr << rep.summary();
      return rep.agree ? 0 : 2;
    }

    // run
    ChunkedArray input;
    std::vector<std::int64_t> chunks = parse_extents(run_par.chunks, 'x');
    if (!run_input.empty())
      input = read_array_file(run_input);
    else
      input = generate_images(run_img.params());

    auto load_spec = [&](FixPointSpec fallback) {
      if (run_config.empty()) return fallback;
      return parse_spec(read_text(run_config),
                        [&](const std::string& name) { return resolve_native(name, run_clusters); });
    };
    // Images in, labels out: a 3-D input is co-added and thresholded.
    auto as_labels = [&](const ChunkedArray& a) {
      if (a.schema().rank() == 3)
        return detection_labels(a, run_img.background, run_img.noise, run_threshold);
      return a;
    };

    ChunkedArray final;
    std::vector<IterationTrace> levels;
    std::string policy_name;

    if (run_app == "sigmaclip") {
      FixPointSpec spec = load_spec(sigmaclip_spec({run_k}));
      if (run_print_spec) {
        std::cout << format_spec(spec);
        return 0;
      }
      if (input.schema().rank() != 3) throw Error(ErrorCode::BadParams, "sigmaclip needs a 3-D image stack");
      if (!chunks.empty()) input = rechunk(input, chunks);
      Strategy strategy = parse_strategy(run_strategy);
      if (!run_par.policy.empty()) {
        if (strategy != Strategy::Naive)
          throw Error(ErrorCode::StrategyUnavailable, "chunk-parallel runs use the naive plan");
        ParallelOptions opt{ShufflePolicy::parse(run_par.policy), run_par.workers, parse_extents(run_par.overlap, ',')};
        ParallelResult r = run_parallel(spec, input, opt);
        final = r.final;
        levels.push_back(r.trace);
        policy_name = run_par.policy;
      } else {
        ExecOptions exec{run_par.workers};
        std::optional<VersionedStore> store;
        if (!run_store.empty()) store.emplace(run_store);
        RunResult r;
        if (!run_config.empty()) {
          if (strategy == Strategy::ManualIncr)
            throw Error(ErrorCode::StrategyUnavailable, "manual-incr only runs the built-in spec");
          if (strategy == Strategy::Naive) {
            r = run_array(spec, input, exec);
          } else {
            IncrementalPlan plan = rewrite_incremental(spec, input.schema());
            if (strategy == Strategy::EfficientIncr) {
              r = run_incremental_array(plan, input, exec);
            } else {
              VersionedStore local;
              VersionedStore& s = store ? *store : local;
              s.store(spec.array, input);
              r = run_incremental(plan, s, true, exec);
            }
          }
        } else {
          r = run_sigmaclip(input, {run_k}, strategy, exec, store ? &*store : nullptr);
        }
        final = r.final;
        levels.push_back(r.trace);
      }
      if (run_coadd) final = coadd(final);
    } else if (run_app == "sourcedetect") {
      FixPointSpec spec = load_spec(sourcedetect_spec({run_r, run_threshold}));
      if (run_print_spec) {
        std::cout << format_spec(spec);
        return 0;
      }
      ChunkedArray labels = as_labels(input);
      if (!chunks.empty()) labels = rechunk(labels, chunks);
      LevelRunner runner;
      if (!run_par.policy.empty()) {
        policy_name = run_par.policy;
        ParallelOptions opt{ShufflePolicy::parse(run_par.policy), run_par.workers, parse_extents(run_par.overlap, ',')};
        runner = [opt](const FixPointSpec& s, const ChunkedArray& a) {
          ParallelResult r = run_parallel(s, a, opt);
          return RunResult{r.final, r.trace, r.converged};
        };
      } else {
        std::size_t w = run_par.workers;
        runner = [w](const FixPointSpec& s, const ChunkedArray& a) { return run_array(s, a, {w}); };
      }
      if (run_par.levels > 1) {
        std::optional<Expression> keep;
        if (!run_par.keep.empty()) keep = Expression::parse(run_par.keep);
        PyramidSpec pyr = sourcedetect_pyramid(run_par.levels, parse_extents(run_par.grid, 'x'), keep,
                                               parse_agg_kind(run_par.multires_agg));
        PyramidState st = build_pyramid(labels, pyr);
        std::optional<VersionedStore> store;
        if (!run_store.empty()) store.emplace(run_store);
        MultiresResult m = run_multires(st, spec, pyr, runner, store ? &*store : nullptr);
        final = m.final;
        levels = m.traces;
      } else {
        RunResult r = runner(spec, labels);
        final = r.final;
        levels.push_back(r.trace);
      }
    } else {
      FixPointSpec spec = load_spec(kmeans_spec(run_clusters));
      if (run_print_spec) {
        std::cout << format_spec(spec);
        return 0;
      }
      ChunkedArray pts = as_labels(input);
      if (!chunks.empty()) pts = rechunk(pts, chunks);
      KMeansParams kp{run_clusters, run_img.seed, spec.max_iterations};
      if (run_par.levels > 1) {
        KMeansMultiresResult m = kmeans_multires(pts, kp, run_par.levels, parse_extents(run_par.grid, 'x'),
                                                 {run_par.workers});
        final = m.final.labeled;
        levels = m.traces;
      } else {
        KMeansResult r = kmeans_run(pts, kp, std::nullopt, {run_par.workers});
        final = r.labeled;
        levels.push_back(r.trace);
      }
    }

    if (!run_out.empty()) write_array_file(run_out, final);
    write_trace_csv(run_csv, run_app, policy_name.empty() ? run_strategy : "naive", policy_name, levels.size() > 1,
                    levels, final);
    std::fprintf(stderr, "%s: %zu cells, %lld iterations over %zu level(s), hash %016llx\n", run_app.c_str(),
                 final.size(), static_cast<long long>(total_iterations(levels)), levels.size(),
                 static_cast<unsigned long long>(array_hash(final)));
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
