#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "itarray/fixpoint.hpp"

namespace itarray {

// When halos are synchronized between mini-iterations.
//   every_k(k)         after mini-iterations k, 2k, ...
//   on_local_convergence  once no chunk changed in the last mini-iteration
//   change_threshold(n)   once the total local change is at most n
struct ShufflePolicy {
  enum class Kind { EveryK, OnLocalConvergence, ChangeThreshold } kind = Kind::EveryK;
  std::int64_t k = 1;
  std::int64_t n = 0;

  static ShufflePolicy every(std::int64_t k);
  static ShufflePolicy on_local_convergence();
  static ShufflePolicy change_threshold(std::int64_t n);

  // "t1", "t5", "t10", "tK=<k>", "converge", "thresh=<n>". Throws ParseError.
  static ShufflePolicy parse(std::string_view text);
  std::string to_string() const;
};

// True iff halos must be synchronized after mini-iteration `iteration`,
// given the number of cells each chunk changed in it.
bool signal_opt(const ShufflePolicy& policy, std::int64_t iteration, std::span<const std::int64_t> local_delta_sizes);

// chunk key -> worker id.
struct WorkerPartition {
  std::map<std::int64_t, std::size_t> assignment;
  std::size_t workers = 1;

  // Present chunks dealt round-robin in chunk-key order.
  static WorkerPartition round_robin(const ChunkedArray& a, std::size_t workers);
};

// Copy of `a` whose schema carries overlap `radius` and whose halos hold
// the neighbours' core cells. `window_offsets`, when given, must not exceed
// the radius. Throws OverlapTooLarge, OverlapTooSmall, BadOffsets.
ChunkedArray partition_with_overlap(const ChunkedArray& a, const std::vector<std::int64_t>& radius,
                                    const std::vector<std::int64_t>* window_offsets = nullptr);

struct ShuffleStats {
  std::int64_t chunks = 0;  // whole-chunk transfers (sender, receiver)
  std::int64_t cells = 0;   // core cells carried by those transfers
  std::int64_t bytes = 0;
  bool halos_changed = false;
};

// Refreshes every halo from the current cores. Neighbouring chunks exchange
// whole chunks through a message queue; the counters do not depend on how
// many halo cells actually changed.
ShuffleStats shuffle_overlap(ChunkedArray& a);

struct ParallelOptions {
  ShufflePolicy policy;
  std::size_t workers = 1;
  // Empty: the window offsets (window specs) or zero.
  std::vector<std::int64_t> radius;
};

struct ParallelResult {
  ChunkedArray final;
  // One record per mini-iteration.
  IterationTrace trace;
  std::int64_t minis = 0;
  std::int64_t majors = 0;
  std::int64_t shuffled_chunks = 0;
  std::int64_t shuffled_cells = 0;
  std::int64_t shuffled_bytes = 0;
  bool converged = false;
};

// Runs the fixpoint chunk by chunk on worker threads. Each mini-iteration
// updates every core from its own chunk (core plus possibly stale halo);
// halos are refreshed when signal_opt fires, which completes a major
// iteration. The run stops at a barrier where the last mini-iteration
// changed nothing and the shuffle brought no new halo data.
//
// Window specs with min/max aggregates accept every policy. Group-by specs
// need a chunking that keeps each group inside one chunk and policy t1.
// Throws StrategyUnavailable, OverlapTooSmall, OverlapTooLarge,
// NonConvergenceError (max_iterations counts mini-iterations).
ParallelResult run_parallel(const FixPointSpec& spec, const ChunkedArray& a, const ParallelOptions& options);

}  // namespace itarray
