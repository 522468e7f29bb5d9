#include <gtest/gtest.h>

#include "itarray/apps.hpp"
#include "itarray/incremental.hpp"
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

ChunkedArray two_columns() {
  ChunkedArray a = create_array(image_schema(2, 1, 4));
  double col[] = {1, 1, 1, 10};
  for (std::int64_t t = 0; t < 4; ++t) {
    a.set_cell(std::vector<std::int64_t>{0, 0, t}, CellTuple{Scalar(col[t])});
    a.set_cell(std::vector<std::int64_t>{1, 0, t}, CellTuple{Scalar(5.0)});
  }
  return a;
}

// Deleting specs over the other registered aggregates.
FixPointSpec mean_cut_spec() {
  FixPointSpec s = sigmaclip_spec({3.0});
  s.f = {{"s", AggKind::Sum, "d"}, {"c", AggKind::Count, "d"}};
  s.delta = Expression::parse("d * c > s * 1.05 ? null : d");
  return s;
}

FixPointSpec rms_cut_spec() {
  FixPointSpec s = sigmaclip_spec({3.0});
  s.f = {{"q", AggKind::SumSq, "d"}, {"c", AggKind::Count, "d"}};
  s.delta = Expression::parse("d * d * c > q * 1.1 ? null : d");
  return s;
}

void expect_same_trace(const IterationTrace& a, const IterationTrace& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].changed_cells, b[i].changed_cells) << i;
    EXPECT_EQ(a[i].termination_value, b[i].termination_value) << i;
  }
}

}  // namespace

TEST(Strategy, Names) {
  for (Strategy s : {Strategy::Naive, Strategy::ManualIncr, Strategy::EfficientIncr, Strategy::EfficientIncrStorage})
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_EQ(strategy_name(Strategy::EfficientIncrStorage), "efficient-incr+storage");
  EXPECT_EQ(code_of([] { parse_strategy("fast"); }), ErrorCode::ParseError);
}

TEST(Rewrite, SigmaClipPlanShape) {
  IncrementalPlan p = rewrite_incremental(sigmaclip_spec({3.0}), image_schema(4, 4, 4));
  std::vector<std::string> kinds;
  for (const auto& a : p.partials()) kinds.push_back(std::string(agg_kind_name(a.kind)));
  EXPECT_EQ(kinds, (std::vector<std::string>{"count", "count", "sum", "sum_sq"}));
  EXPECT_FALSE(p.needs_min_max());
  auto lines = p.describe();
  ASSERT_GE(lines.size(), 5u);
  EXPECT_NE(lines[0].find("dA-"), std::string::npos);
  bool subtract = false;
  for (const auto& l : lines) subtract |= l.find("subtract") != std::string::npos;
  EXPECT_TRUE(subtract);
}

TEST(Rewrite, MinIsNotSubtractable) {
  FixPointSpec s = sigmaclip_spec({3.0});
  s.f = {{"m", AggKind::Min, "d"}};
  s.delta = Expression::parse("d > m ? null : d");
  EXPECT_EQ(code_of([&] { rewrite_incremental(s, image_schema(2, 2, 2)); }), ErrorCode::NotIncrementalizable);
  IncrementalPlan ins = rewrite_incremental(s, image_schema(2, 2, 2), AlgebraicRegistry::defaults(),
                                            Workload::InsertOnly);
  EXPECT_TRUE(ins.needs_min_max());
}

TEST(Rewrite, InsertOnlyCountUsesPositiveDeltaOnly) {
  FixPointSpec s = sigmaclip_spec({3.0});
  s.f = {{"n", AggKind::Count, "d"}};
  s.delta = Expression::parse("d");
  IncrementalPlan p = rewrite_incremental(s, image_schema(2, 2, 2), AlgebraicRegistry::defaults(),
                                          Workload::InsertOnly);
  for (const auto& l : p.describe()) {
    EXPECT_EQ(l.find("dA-"), std::string::npos) << l;
    EXPECT_EQ(l.find("subtract"), std::string::npos) << l;
  }
}

TEST(Rewrite, UnknownWindowPlanRejected) {
  EXPECT_EQ(code_of([] { rewrite_incremental(sourcedetect_spec({1, 0}), ArraySchema({{"x", 0, 3}, {"y", 0, 3}},
                                                                                     {{"label", ScalarKind::Int64}})); }),
            ErrorCode::NotIncrementalizable);
}

TEST(RunIncremental, TwoColumnExample) {
  ChunkedArray a = two_columns();
  IncrementalPlan p = rewrite_incremental(sigmaclip_spec({1.0}), a.schema());
  RunResult r = run_incremental_array(p, a);
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_EQ(r.trace[0].changed_cells, 1);
  EXPECT_EQ(r.trace[1].changed_cells, 0);
  EXPECT_EQ(r.trace[0].groups_updated, 2);
  EXPECT_EQ(r.trace[1].groups_updated, 1);
  EXPECT_EQ(r.final.size(), 7u);
  EXPECT_FALSE(r.final.get(std::vector<std::int64_t>{0, 0, 3}));
  RunResult n = run_array(sigmaclip_spec({1.0}), a);
  EXPECT_TRUE(same_cells(n.final, r.final));
  expect_same_trace(n.trace, r.trace);
  EXPECT_LT(r.trace[1].cells_touched, n.trace[1].cells_touched);
}

TEST(RunIncremental, AlreadyConverged) {
  ChunkedArray a = create_array(image_schema(2, 2, 3));
  for (std::int64_t i = 0; i < 12; ++i) a.set_linear(i, {Scalar(7.0)});
  IncrementalPlan p = rewrite_incremental(sigmaclip_spec({3.0}), a.schema());
  RunResult r = run_incremental_array(p, a);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].changed_cells, 0);
}

TEST(RunIncremental, MatchesNaiveAndOracle) {
  for (double k : {1.5, 2.0, 3.0}) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      ChunkedArray im = oracle::random_images(4, 4, 8, seed * 31 + 7, seed % 3 == 0 ? 0.7 : 1.0);
      im = rechunk(im, {2, 2, 4});
      RunResult n = run_array(sigmaclip_spec({k}), im);
      IncrementalPlan p = rewrite_incremental(sigmaclip_spec({k}), im.schema());
      RunResult e = run_incremental_array(p, im);
      VersionedStore store;
      RunResult st = run_sigmaclip(im, {k}, Strategy::EfficientIncrStorage, {}, &store);
      RunResult m = run_sigmaclip(im, {k}, Strategy::ManualIncr);
      std::string ref = dump_array(n.final);
      EXPECT_EQ(dump_array(e.final), ref) << k << " " << seed;
      EXPECT_EQ(dump_array(st.final), ref) << k << " " << seed;
      EXPECT_EQ(dump_array(m.final), ref) << k << " " << seed;
      expect_same_trace(n.trace, e.trace);
      expect_same_trace(n.trace, st.trace);

      oracle::ClipResult o = oracle::sigma_clip(im, k);
      EXPECT_EQ(oracle::float_map(n.final), o.cells);
      EXPECT_EQ(static_cast<std::int64_t>(n.trace.size()), o.iterations);
    }
  }
}

TEST(RunIncremental, OtherAggregateSets) {
  for (const FixPointSpec& spec : {mean_cut_spec(), rms_cut_spec()}) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      ChunkedArray im = rechunk(oracle::random_images(3, 5, 8, seed), {2, 2, 8});
      RunResult n = run_array(spec, im);
      RunResult e = run_incremental_array(rewrite_incremental(spec, im.schema()), im);
      EXPECT_EQ(dump_array(e.final), dump_array(n.final));
      expect_same_trace(n.trace, e.trace);
    }
  }
}

TEST(RunIncremental, OnlyDeletions) {
  ChunkedArray im = oracle::random_images(4, 4, 8, 5);
  VersionedStore store;
  store.store("images", im);
  IncrementalPlan p = rewrite_incremental(sigmaclip_spec({1.5}), im.schema());
  RunResult r = run_incremental(p, store, true);
  ASSERT_GE(r.trace.size(), 2u);
  for (std::uint64_t v = 2; v <= store.latest_version("images"); ++v) {
    const DeltaPair& d = store.delta("images", v);
    EXPECT_EQ(d.plus.size(), d.minus.size());
    for (const auto& ref : d.plus.cells()) {
      EXPECT_TRUE(all_null(*ref.tuple));
      EXPECT_NE(d.minus.find_linear(ref.index), nullptr);
    }
  }
}

TEST(RunIncremental, WorkShrinks) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ChunkedArray im = oracle::random_images(6, 6, 8, seed);
    RunResult r = run_incremental_array(rewrite_incremental(sigmaclip_spec({1.5}), im.schema()), im);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      EXPECT_LE(r.trace[i].cells_touched, r.trace[0].cells_touched);
      EXPECT_LE(r.trace[i].changed_cells, r.trace[i - 1].changed_cells) << seed << " " << i;
    }
  }
}

TEST(RunIncremental, CarriedStateMatchesRecomputation) {
  ChunkedArray im = oracle::random_images(4, 4, 8, 11);
  FixPointSpec spec = sigmaclip_spec({1.5});
  RunResult full = run_array(spec, im);
  ASSERT_GE(full.trace.size(), 3u);
  for (std::int64_t it = 1; it <= static_cast<std::int64_t>(full.trace.size()); ++it) {
    FixPointSpec s = spec;
    s.max_iterations = it;
    IncrementalPlan p = rewrite_incremental(s, im.schema());
    VersionedStore store;
    store.store("images", im);
    try {
      run_incremental(p, store, true);
    } catch (const NonConvergenceError&) {
    }
    // C absorbs each delta at the start of the following iteration, so it
    // matches the state before the last merge.
    std::uint64_t v = store.latest_version("images");
    ChunkedArray prev = store.scan("images", ScanKind::Full, v > 1 ? v - 1 : v);
    ChunkedArray c = store.scan("images.partials");
    EXPECT_EQ(dump_array(c), dump_array(p.partial_aggregate(prev, {}))) << it;
  }
}
