#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "itarray/fixpoint.hpp"
#include "itarray/incremental.hpp"
#include "itarray/multires.hpp"
#include "itarray/overlap.hpp"

namespace itarray {

// ---- SigmaClip ----------------------------------------------------------

struct SigmaClipParams {
  double k = 3.0;
};

// images <float d>[x, y, t]
ArraySchema image_schema(std::int64_t nx, std::int64_t ny, std::int64_t nt,
                         std::vector<std::int64_t> chunk_extents = {});

// pi = groupby x,y; f = {avg(d) as mu, stdv(d) as sigma};
// delta = mu - k*sigma <= d <= mu + k*sigma ? d : null. Throws BadParams.
FixPointSpec sigmaclip_spec(const SigmaClipParams& p, std::string array = "images");

// Sum of the surviving values per (x, y), attribute `coadd`.
ChunkedArray coadd(const ChunkedArray& images);

// Hand-written incremental loop with Remain/Collect bookkeeping. A cell is
// removed when it lies strictly outside [mu - k*sigma, mu + k*sigma].
RunResult sigmaclip_manual(const ChunkedArray& images, const SigmaClipParams& p, const ExecOptions& exec = {});

// Runs SigmaClip under one strategy. `store` receives the array versions
// for the store-backed strategies (a private store is used when null).
RunResult run_sigmaclip(const ChunkedArray& images, const SigmaClipParams& p, Strategy strategy,
                        const ExecOptions& exec = {}, VersionedStore* store = nullptr);

// ---- SourceDetect -------------------------------------------------------

struct SourceDetectParams {
  std::int64_t r = 1;
  double threshold = 0.0;
};

// pi = window r,r; f = {min(label) as m}; delta = m. Throws BadParams.
FixPointSpec sourcedetect_spec(const SourceDetectParams& p, std::string array = "labels");

// <int64 label>[x, y]: every cell of `image` whose first attribute exceeds
// the threshold, labelled with its row-major offset in the domain.
ChunkedArray initial_labels(const ChunkedArray& image, double threshold);

// Labels every non-empty cell with its row-major offset.
ChunkedArray label_cells(const ChunkedArray& mask);

// Pyramid for label propagation: grid aggregates `min(label) as label` and
// `<block_stat>(label) as <block_stat>`, keeps the blocks passing `keep`
// (default: count == block volume, i.e. full blocks), seeds finer cells with
// the upsampled label and shrinks the window radius per level.
PyramidSpec sourcedetect_pyramid(int levels, std::vector<std::int64_t> block = {},
                                 std::optional<Expression> keep = std::nullopt, AggKind block_stat = AggKind::Count);

// ---- KMeans -------------------------------------------------------------

struct KMeansParams {
  std::int64_t k_clusters = 2;
  std::uint64_t seed = 1;
  std::int64_t max_iterations = 1000;
};

struct KMeansResult {
  std::vector<std::optional<std::array<double, 2>>> centroids;  // index = cluster id
  ChunkedArray labeled;
  IterationTrace trace;
  bool converged = false;
};

// <int64 label>[x, y] with a seeded uniform cluster per non-empty cell.
ChunkedArray kmeans_initial(const ChunkedArray& points, std::int64_t k, std::uint64_t seed);
// Same cells, each assigned to its nearest centroid.
ChunkedArray kmeans_assign(const ChunkedArray& points,
                           const std::vector<std::optional<std::array<double, 2>>>& centroids);

// pi = attribute label; f = {avg(x) as cx, avg(y) as cy}; delta = nearest
// centroid (ties to the lowest cluster id; empty clusters drop out).
FixPointSpec kmeans_spec(std::int64_t k_clusters, std::string array = "points");

// Throws TooFewPoints. `initial` replaces the random start.
KMeansResult kmeans_run(const ChunkedArray& points, const KMeansParams& p,
                        const std::optional<ChunkedArray>& initial = std::nullopt, const ExecOptions& exec = {});

// Coarse-to-fine KMeans: the converged centroids of a level, scaled to the
// finer grid (c * b + (b - 1) / 2), give the finer level's starting
// assignment. Per-level traces are returned coarsest last.
struct KMeansMultiresResult {
  KMeansResult final;
  std::vector<IterationTrace> traces;  // index = level
};
KMeansMultiresResult kmeans_multires(const ChunkedArray& points, const KMeansParams& p, int levels,
                                     std::vector<std::int64_t> block = {}, const ExecOptions& exec = {});

// ---- Synthetic images ---------------------------------------------------

struct Source {
  double x = 0, y = 0;
  double amplitude = 0;
  double width = 1.5;  // Gaussian sigma in pixels
};

struct GenerateParams {
  std::uint64_t seed = 1;
  std::int64_t nx = 64, ny = 64, nt = 16;
  std::int64_t n_sources = 8;
  double noise = 10.0;
  double background = 1000.0;
  double outlier_rate = 0.01;
  double outlier_sigmas = 10.0;
  // Overrides the random sources when non-empty.
  std::vector<Source> sources;
  std::vector<std::int64_t> chunk_extents;
};

// Dense <float d>[x, y, t]: background + Gaussian sources + noise, rounded
// to whole counts, plus outlier spikes of outlier_sigmas * noise.
// Same parameters give the same array. Throws BadParams.
ChunkedArray generate_images(const GenerateParams& p);
std::vector<Source> generated_sources(const GenerateParams& p);

// ---- Bench --------------------------------------------------------------

struct BenchConfig {
  std::string app = "sigmaclip";  // sigmaclip | sourcedetect | kmeans
  std::vector<Strategy> strategies;
  std::vector<ShufflePolicy> policies;
  bool multires = false;
  int levels = 2;
  std::vector<std::int64_t> block;
  std::size_t workers = 1;
  GenerateParams image;
  std::vector<std::int64_t> chunks;  // for the chunk-parallel runs
  double k = 3.0;
  std::int64_t r = 1;
  // Detection threshold above the background, in noise sigmas.
  double threshold_sigmas = 5.0;
  std::int64_t clusters = 4;
};

struct BenchRun {
  std::string strategy;
  std::string policy;
  bool multires = false;
  std::vector<IterationTrace> levels;  // index = level
  std::uint64_t final_hash = 0;
  ChunkedArray final;
};

struct BenchReport {
  std::string app;
  std::vector<BenchRun> runs;
  bool agree = true;

  // One row per iteration record of every run and level; no timings, so a
  // fixed seed gives the same bytes for any worker count.
  std::string csv() const;
  // One line per run: totals and the final-array hash.
  std::string summary() const;
};

// Generates the input once and runs every requested configuration.
// Throws StrategyUnavailable, BadParams.
BenchReport bench(const BenchConfig& config);

// The detection input used by bench and the CLI: pixels whose mean over t
// exceeds background + threshold_sigmas * noise / sqrt(n), labelled.
ChunkedArray detection_labels(const ChunkedArray& images, double background, double noise, double threshold_sigmas);

}  // namespace itarray
