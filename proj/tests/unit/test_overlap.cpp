#include <gtest/gtest.h>

#include <cmath>

#include "itarray/apps.hpp"
#include "itarray/overlap.hpp"
#include "itarray/text_format.hpp"
#include "oracles.hpp"

using namespace itarray;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

ChunkedArray dense4(std::vector<std::int64_t> chunks) {
  ChunkedArray a = create_array(
      ArraySchema({{"x", 0, 3}, {"y", 0, 3}}, {{"label", ScalarKind::Int64}}, std::move(chunks)));
  for (std::int64_t i = 0; i < 16; ++i) a.set_linear(i, {Scalar(i)});
  return a;
}

// Every halo cell equals the core cell it replicates.
void expect_coherent(const ChunkedArray& a) {
  for (const auto& [key, ch] : a.chunks()) {
    for (const auto& [lin, t] : ch->halo) {
      const CellTuple* core = a.find_linear(lin);
      ASSERT_NE(core, nullptr);
      EXPECT_EQ(*core, t);
    }
  }
}

}  // namespace

TEST(SignalOpt, Policies) {
  std::vector<std::int64_t> zeros{0, 0, 0}, one{0, 3, 0};
  ShufflePolicy t10 = ShufflePolicy::every(10);
  for (std::int64_t i = 1; i <= 9; ++i) EXPECT_FALSE(signal_opt(t10, i, one));
  EXPECT_TRUE(signal_opt(t10, 10, one));
  EXPECT_TRUE(signal_opt(t10, 20, one));
  EXPECT_TRUE(signal_opt(ShufflePolicy::every(1), 7, one));

  ShufflePolicy conv = ShufflePolicy::on_local_convergence();
  EXPECT_FALSE(signal_opt(conv, 3, one));
  EXPECT_TRUE(signal_opt(conv, 3, zeros));

  EXPECT_TRUE(signal_opt(ShufflePolicy::change_threshold(0), 1, zeros));
  EXPECT_FALSE(signal_opt(ShufflePolicy::change_threshold(2), 1, one));
  EXPECT_TRUE(signal_opt(ShufflePolicy::change_threshold(3), 1, one));
}

TEST(ShufflePolicy, Text) {
  for (const char* t : {"t1", "t5", "t10", "converge", "thresh=4"})
    EXPECT_EQ(ShufflePolicy::parse(t).to_string(), t);
  EXPECT_EQ(ShufflePolicy::parse("tK=7").k, 7);
  EXPECT_EQ(code_of([] { ShufflePolicy::parse("t0"); }), ErrorCode::BadParams);
  EXPECT_EQ(code_of([] { ShufflePolicy::parse("sometimes"); }), ErrorCode::ParseError);
}

TEST(Partition, RoundRobin) {
  WorkerPartition p = WorkerPartition::round_robin(dense4({2, 2}), 3);
  ASSERT_EQ(p.assignment.size(), 4u);
  EXPECT_EQ(p.assignment.at(0), 0u);
  EXPECT_EQ(p.assignment.at(1), 1u);
  EXPECT_EQ(p.assignment.at(2), 2u);
  EXPECT_EQ(p.assignment.at(3), 0u);
}

TEST(Partition, HaloContents) {
  ChunkedArray a = partition_with_overlap(dense4({2, 2}), {1, 1});
  // chunk (0,0) sees column/row 2 of its neighbours
  const Chunk* c00 = a.chunk(0);
  ASSERT_NE(c00, nullptr);
  EXPECT_EQ(c00->halo.size(), 5u);
  EXPECT_TRUE(c00->halo.count(2 * 4 + 1));  // (2,1) from chunk (1,0)
  EXPECT_TRUE(c00->halo.count(2 * 4 + 2));  // (2,2) from chunk (1,1)
  EXPECT_FALSE(c00->halo.count(3 * 4 + 1));
  expect_coherent(a);
  EXPECT_TRUE(same_cells(a, dense4({2, 2})));

  ChunkedArray z = partition_with_overlap(dense4({2, 2}), {0, 0});
  EXPECT_EQ(z.halo_size(), 0u);

  std::vector<std::int64_t> w11{1, 1}, w22{2, 2};
  EXPECT_NO_THROW(partition_with_overlap(dense4({2, 2}), {1, 1}, &w11));
  EXPECT_EQ(code_of([&] { partition_with_overlap(dense4({2, 2}), {1, 1}, &w22); }), ErrorCode::OverlapTooSmall);
  EXPECT_EQ(code_of([] { partition_with_overlap(dense4({2, 2}), {2, 1}); }), ErrorCode::OverlapTooLarge);
}

TEST(Shuffle, RefreshesStaleHalos) {
  ChunkedArray a = partition_with_overlap(dense4({2, 2}), {1, 1});
  a.set_linear(2 * 4 + 1, {Scalar(99)});
  EXPECT_EQ(a.chunk(0)->halo.at(9), CellTuple{Scalar(9)});
  ShuffleStats s = shuffle_overlap(a);
  EXPECT_TRUE(s.halos_changed);
  EXPECT_EQ(a.chunk(0)->halo.at(9), CellTuple{Scalar(99)});
  expect_coherent(a);
  // 4 chunks, each exchanging with its 3 neighbours.
  EXPECT_EQ(s.chunks, 12);
  EXPECT_EQ(s.cells, 48);
  EXPECT_GT(s.bytes, 0);

  ShuffleStats again = shuffle_overlap(a);
  EXPECT_FALSE(again.halos_changed);
  EXPECT_EQ(again.chunks, s.chunks);
  EXPECT_EQ(again.cells, s.cells);

  ChunkedArray single = partition_with_overlap(dense4({}), {0, 0});
  ShuffleStats none = shuffle_overlap(single);
  EXPECT_EQ(none.chunks, 0);
  EXPECT_EQ(none.cells, 0);
}

TEST(RunParallel, ComponentAcrossChunks) {
  // A horizontal bar crossing the chunk boundary at y = 4.
  ChunkedArray a = create_array(
      ArraySchema({{"x", 0, 3}, {"y", 0, 7}}, {{"label", ScalarKind::Int64}}, {4, 4}));
  for (std::int64_t y = 0; y < 8; ++y) a.set_linear(8 + y, {Scalar(8 + y)});
  for (const char* pol : {"t1", "t5", "converge", "thresh=1"}) {
    ParallelResult r = run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::parse(pol), 2, {}});
    EXPECT_TRUE(r.converged);
    for (std::int64_t y = 0; y < 8; ++y) EXPECT_EQ(*r.final.find_linear(8 + y), CellTuple{Scalar(8)}) << pol;
    EXPECT_EQ(r.final.halo_size(), 0u);
  }
}

TEST(RunParallel, PolicyIndependence) {
  const char* policies[] = {"t1", "t5", "t10", "converge", "thresh=3"};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::int64_t n = 12 + static_cast<std::int64_t>(seed % 3) * 4;
    std::int64_t ce = seed % 2 ? 4 : 6;
    ChunkedArray a = oracle::random_labels(n, n, 0.35 + 0.1 * static_cast<double>(seed % 3), seed, {ce, ce});
    auto expected = oracle::union_find_labels(a, 1);
    std::string ref;
    for (const char* pol : policies) {
      ParallelResult r = run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::parse(pol), 1 + seed % 4, {}});
      ASSERT_TRUE(r.converged);
      EXPECT_EQ(oracle::label_map(r.final), expected) << seed << " " << pol;
      std::string d = dump_array(r.final);
      if (ref.empty()) ref = d;
      EXPECT_EQ(d, ref);
    }
  }
}

TEST(RunParallel, ShuffleCountBound) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ChunkedArray a = oracle::random_labels(20, 20, 0.45, seed, {5, 5});
    for (std::int64_t k : {1, 2, 5, 10}) {
      ParallelResult r = run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::every(k), 2, {}});
      std::int64_t bound = (r.minis + k - 1) / k + 1;
      EXPECT_LE(r.majors, bound) << seed << " k=" << k;
      EXPECT_EQ(static_cast<std::int64_t>(r.trace.size()), r.minis);
      if (k == 1) EXPECT_EQ(r.majors, r.minis);
      std::int64_t chunks = 0, cells = 0;
      for (const auto& rec : r.trace) {
        EXPECT_GE(rec.shuffled_chunks, 0);
        chunks += rec.shuffled_chunks;
        cells += rec.shuffled_cells;
        EXPECT_EQ(rec.shuffle_performed, rec.shuffled_chunks > 0);
      }
      EXPECT_EQ(chunks, r.shuffled_chunks);
      EXPECT_EQ(cells, r.shuffled_cells);
    }
  }
}

TEST(RunParallel, WorkerCountDoesNotChangeTrace) {
  ChunkedArray a = oracle::random_labels(24, 24, 0.42, 3, {6, 6});
  ParallelResult ref = run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::every(5), 1, {}});
  for (std::size_t w : {2, 4}) {
    ParallelResult r = run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::every(5), w, {}});
    EXPECT_EQ(dump_array(r.final), dump_array(ref.final));
    ASSERT_EQ(r.trace.size(), ref.trace.size());
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      EXPECT_EQ(r.trace[i].changed_cells, ref.trace[i].changed_cells);
      EXPECT_EQ(r.trace[i].shuffled_cells, ref.trace[i].shuffled_cells);
      EXPECT_EQ(r.trace[i].major_index, ref.trace[i].major_index);
    }
  }
}

TEST(RunParallel, GroupBySpecs) {
  ChunkedArray im = rechunk(oracle::random_images(4, 4, 8, 2), {2, 2, 8});
  ParallelResult r = run_parallel(sigmaclip_spec({1.5}), im, {ShufflePolicy::every(1), 2, {}});
  EXPECT_EQ(dump_array(r.final), dump_array(run_array(sigmaclip_spec({1.5}), im).final));
  EXPECT_EQ(code_of([&] { run_parallel(sigmaclip_spec({1.5}), im, {ShufflePolicy::every(5), 2, {}}); }),
            ErrorCode::StrategyUnavailable);
  ChunkedArray split_t = rechunk(im, {2, 2, 4});
  EXPECT_EQ(code_of([&] { run_parallel(sigmaclip_spec({1.5}), split_t, {ShufflePolicy::every(1), 2, {}}); }),
            ErrorCode::StrategyUnavailable);
}

TEST(RunParallel, RadiusChecks) {
  ChunkedArray a = oracle::random_labels(8, 8, 0.5, 1, {4, 4});
  EXPECT_EQ(code_of([&] { run_parallel(sourcedetect_spec({2, 0}), a, {ShufflePolicy::every(1), 1, {1, 1}}); }),
            ErrorCode::OverlapTooSmall);
  EXPECT_EQ(code_of([&] { run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::every(1), 1, {4, 4}}); }),
            ErrorCode::OverlapTooLarge);
  ParallelResult wide = run_parallel(sourcedetect_spec({1, 0}), a, {ShufflePolicy::every(3), 1, {2, 2}});
  EXPECT_EQ(oracle::label_map(wide.final), oracle::union_find_labels(a, 1));
}

TEST(RunParallel, MaxIterationsCountsMinis) {
  ChunkedArray a = oracle::random_labels(16, 16, 0.5, 4, {4, 4});
  FixPointSpec spec = sourcedetect_spec({1, 0});
  spec.max_iterations = 2;
  EXPECT_EQ(code_of([&] { run_parallel(spec, a, {ShufflePolicy::every(1), 1, {}}); }), ErrorCode::NonConvergence);
}
