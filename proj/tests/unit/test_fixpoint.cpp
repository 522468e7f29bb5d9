#include <gtest/gtest.h>

#include <random>

#include "itarray/apps.hpp"
#include "itarray/fixpoint.hpp"
#include "itarray/text_format.hpp"
#include "oracles.hpp"

using namespace itarray;

namespace {

ArraySchema labels_schema(std::int64_t nx, std::int64_t ny) {
  return ArraySchema({{"x", 0, nx - 1}, {"y", 0, ny - 1}}, {{"label", ScalarKind::Int64}});
}

ChunkedArray labelled(std::int64_t nx, std::int64_t ny, std::initializer_list<std::pair<int, int>> pixels) {
  ChunkedArray a = create_array(labels_schema(nx, ny));
  for (auto [x, y] : pixels) {
    std::vector<std::int64_t> c{x, y};
    a.set_cell(c, CellTuple{Scalar(a.schema().linear(c))});
  }
  return a;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

const ArraySchema& xyz() {
  static const ArraySchema s({{"x", 0, 3}, {"y", 0, 3}, {"z", 0, 3}}, {{"d", ScalarKind::Float64}});
  return s;
}

}  // namespace

TEST(Classify, Examples) {
  Classified g = classify(AssignmentFunction::mapping({{"x", 0}, {"y", 0}}), xyz());
  EXPECT_EQ(g.strategy, Classified::Strategy::GroupBy);
  EXPECT_EQ(g.dims, (std::vector<std::string>{"x", "y"}));

  Classified w = classify(AssignmentFunction::mapping({{"x", 1}, {"y", 1}}), labels_schema(4, 4));
  EXPECT_EQ(w.strategy, Classified::Strategy::Window);
  EXPECT_EQ(w.offsets, (std::vector<std::int64_t>{1, 1}));

  Classified at = classify(AssignmentFunction::attribute("label"), labels_schema(4, 4));
  EXPECT_EQ(at.strategy, Classified::Strategy::Attribute);
  EXPECT_EQ(at.attr, "label");
}

TEST(Classify, Errors) {
  EXPECT_EQ(code_of([] { classify(AssignmentFunction::mapping({{"x", 1}, {"y", 0}}), xyz()); }),
            ErrorCode::UnsupportedAssignment);
  EXPECT_EQ(code_of([] { classify(AssignmentFunction::groupby({"w"}), xyz()); }), ErrorCode::UnknownDimension);
  EXPECT_EQ(code_of([] { classify(AssignmentFunction::window({1, 1}), xyz()); }), ErrorCode::BadOffsets);
  EXPECT_EQ(code_of([] { classify(AssignmentFunction::attribute("q"), xyz()); }), ErrorCode::UnknownDimension);
}

TEST(AssignmentFunction, TextRoundTrip) {
  for (const char* text : {"window 1,2", "groupby x,y", "attribute label", "map x+-1,y"}) {
    AssignmentFunction a = AssignmentFunction::parse(text);
    EXPECT_EQ(AssignmentFunction::parse(a.to_string()), a) << text;
  }
  EXPECT_EQ(AssignmentFunction::parse("map x+-1,y+-1").targets.size(), 2u);
}

TEST(Plan, NaiveRewriteShape) {
  Plan p = Plan::rewrite_naive(sigmaclip_spec({3.0}), xyz().with_attrs({{"d", ScalarKind::Float64}}));
  EXPECT_EQ(p.describe().size(), 4u);
  FixPointSpec bad = sigmaclip_spec({3.0});
  bad.delta = Expression::parse("nosuch");
  EXPECT_EQ(code_of([&] { Plan::rewrite_naive(bad, xyz()); }), ErrorCode::ExpressionTypeError);
}

TEST(Run, SigmaClipConstantColumn) {
  ChunkedArray a = create_array(xyz());
  a.set_cell(std::vector<std::int64_t>{0, 0, 0}, CellTuple{Scalar(5.0)});
  a.set_cell(std::vector<std::int64_t>{0, 0, 1}, CellTuple{Scalar(5.0)});
  RunResult r = run_array(sigmaclip_spec({3.0}), a);
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].changed_cells, 0);
  EXPECT_TRUE(same_cells(r.final, a));
}

TEST(Run, LineOfThree) {
  ChunkedArray a = create_array(labels_schema(1, 3));
  a.set_linear(0, {Scalar(3)});
  a.set_linear(1, {Scalar(1)});
  a.set_linear(2, {Scalar(2)});
  RunResult r = run_array(sourcedetect_spec({1, 0}), a);
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_EQ(r.trace[0].changed_cells, 2);
  EXPECT_EQ(r.trace[1].changed_cells, 0);
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_EQ(*r.final.find_linear(i), CellTuple{Scalar(1)});
}

TEST(Run, FourByFourConvergesAtThree) {
  // Two sources plus an isolated pixel; the farthest pixel of the first
  // source is two window steps from its minimum label.
  ChunkedArray a = labelled(4, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {3, 0}, {3, 1}, {3, 3}});
  RunResult r = run_array(sourcedetect_spec({1, 0}), a);
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.trace.size(), 3u);
  EXPECT_GT(r.trace[1].changed_cells, 0);
  EXPECT_EQ(r.trace[2].changed_cells, 0);
  EXPECT_EQ(oracle::label_map(r.final), oracle::union_find_labels(a, 1));
}

TEST(Run, StoresEveryState) {
  VersionedStore store;
  ChunkedArray a = labelled(4, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}});
  store.store("labels", a);
  RunResult r = run(sourcedetect_spec({1, 0}), store);
  EXPECT_EQ(store.latest_version("labels"), 1u + r.trace.size());
  EXPECT_TRUE(same_cells(store.scan("labels"), r.final));
  // Every state is recoverable from its deltas.
  ChunkedArray acc = store.scan("labels", ScanKind::Full, 1);
  for (std::uint64_t v = 2; v <= store.latest_version("labels"); ++v) {
    acc = replay_forward(acc, store.delta("labels", v));
    EXPECT_TRUE(same_cells(acc, store.scan("labels", ScanKind::Full, v)));
  }
  EXPECT_EQ(code_of([&] {
              FixPointSpec s = sourcedetect_spec({1, 0});
              s.array = "missing";
              run(s, store);
            }),
            ErrorCode::UnknownArray);
}

TEST(Run, AlreadyConverged) {
  ChunkedArray a = labelled(4, 4, {{0, 0}, {0, 1}});
  a.set_linear(1, {Scalar(0)});
  RunResult r = run_array(sourcedetect_spec({1, 0}), a);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].changed_cells, 0);
}

TEST(Run, DiagonalNeighbours) {
  ChunkedArray a = create_array(labels_schema(2, 2));
  a.set_linear(0, {Scalar(5)});
  a.set_linear(3, {Scalar(2)});
  RunResult r = run_array(sourcedetect_spec({1, 0}), a);
  EXPECT_EQ(*r.final.find_linear(0), CellTuple{Scalar(2)});
  EXPECT_EQ(*r.final.find_linear(3), CellTuple{Scalar(2)});
}

TEST(Run, MaxIterationsBound) {
  ChunkedArray a = labelled(4, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}});
  FixPointSpec spec = sourcedetect_spec({1, 0});
  spec.max_iterations = 1;
  try {
    run_array(spec, a);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergenceError& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonConvergence);
    EXPECT_EQ(e.result().trace.size(), 1u);
    EXPECT_FALSE(e.result().converged);
    EXPECT_EQ(e.result().final.size(), a.size());
  }
}

TEST(Run, DeterministicAcrossWorkers) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ChunkedArray a = rechunk(oracle::random_labels(24, 24, 0.45, seed), {6, 6});
    ChunkedArray im = rechunk(oracle::random_images(6, 6, 8, seed), {3, 3, 8});
    std::string ref_labels, ref_clip;
    IterationTrace ref_trace;
    for (std::size_t w : {1, 2, 4}) {
      RunResult r = run_array(sourcedetect_spec({1, 0}), a, {w});
      RunResult c = run_array(sigmaclip_spec({1.5}), im, {w});
      if (w == 1) {
        ref_labels = dump_array(r.final);
        ref_clip = dump_array(c.final);
        ref_trace = r.trace;
        continue;
      }
      EXPECT_EQ(dump_array(r.final), ref_labels);
      EXPECT_EQ(dump_array(c.final), ref_clip);
      ASSERT_EQ(r.trace.size(), ref_trace.size());
      for (std::size_t i = 0; i < r.trace.size(); ++i) {
        EXPECT_EQ(r.trace[i].changed_cells, ref_trace[i].changed_cells);
        EXPECT_EQ(r.trace[i].cells_touched, ref_trace[i].cells_touched);
      }
    }
  }
}

TEST(Run, LabelsBoundedByComponentMinimum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ChunkedArray a = oracle::random_labels(16, 16, 0.4, seed);
    auto uf = oracle::union_find_labels(a, 1);
    FixPointSpec spec = sourcedetect_spec({1, 0});
    RunResult full = run_array(spec, a);
    for (std::int64_t it = 1; it < static_cast<std::int64_t>(full.trace.size()); ++it) {
      spec.max_iterations = it;
      try {
        run_array(spec, a);
        ADD_FAILURE();
      } catch (const NonConvergenceError& e) {
        const ChunkedArray& s = e.result().final;
        EXPECT_TRUE(s.schema() == a.schema());
        for (const auto& [c, v] : oracle::label_map(s)) EXPECT_GE(v, uf.at(c));
      }
    }
    EXPECT_EQ(oracle::label_map(full.final), uf);
  }
}

TEST(Run, StopsAtFirstIterationBelowEpsilon) {
  ChunkedArray im = oracle::random_images(4, 4, 8, 3);
  FixPointSpec spec = sigmaclip_spec({1.0});
  RunResult r = run_array(spec, im);
  for (std::size_t i = 0; i + 1 < r.trace.size(); ++i) EXPECT_GT(r.trace[i].termination_value, spec.epsilon);
  EXPECT_LE(r.trace.back().termination_value, spec.epsilon);

  spec.termination = Termination::parse("sum_abs(d)");
  spec.epsilon = 1e18;
  RunResult loose = run_array(spec, im);
  EXPECT_EQ(loose.trace.size(), 1u);
}

TEST(Termination, Values) {
  ArraySchema s({{"i", 0, 3}}, {{"d", ScalarKind::Float64}});
  ChunkedArray a = create_array(s), b = create_array(s);
  a.set_linear(0, {Scalar(1.0)});
  a.set_linear(1, {Scalar(5.0)});
  b.set_linear(0, {Scalar(4.0)});
  b.set_linear(2, {Scalar(-2.0)});
  EXPECT_EQ(termination_value(Termination::parse("diff_count"), a, b), 3.0);
  EXPECT_EQ(termination_value(Termination::parse("sum_abs(d)"), a, b), 10.0);
  EXPECT_EQ(termination_value(Termination::parse("max_abs(d)"), a, b), 5.0);
}

TEST(SpecText, RoundTrip) {
  FixPointSpec s = sigmaclip_spec({2.5});
  s.epsilon = 0.25;
  s.max_iterations = 77;
  FixPointSpec t = parse_spec(format_spec(s));
  EXPECT_EQ(t.array, s.array);
  EXPECT_EQ(t.pi, s.pi);
  EXPECT_EQ(t.f, s.f);
  EXPECT_EQ(std::get<Expression>(t.delta), std::get<Expression>(s.delta));
  EXPECT_EQ(t.epsilon, 0.25);
  EXPECT_EQ(t.max_iterations, 77);
  EXPECT_EQ(format_spec(t), format_spec(s));

  FixPointSpec k = kmeans_spec(3);
  std::string text = format_spec(k);
  EXPECT_NE(text.find("native:kmeans_assign"), std::string::npos);
  FixPointSpec k2 = parse_spec(text, [](const std::string& name) -> std::optional<NativeUpdate> {
    if (name == "kmeans_assign") return std::get<NativeUpdate>(kmeans_spec(3).delta);
    return std::nullopt;
  });
  EXPECT_EQ(std::get<NativeUpdate>(k2.delta).name, "kmeans_assign");
  EXPECT_EQ(code_of([&] { parse_spec(text); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_spec("array = a\npi = window 1\nbogus = 1\n"); }), ErrorCode::ParseError);
}
