// Python bindings: arrays travel as opaque handles; cells, traces and bench
// reports come back as plain Python values.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "itarray/apps.hpp"
#include "itarray/incremental.hpp"
#include "itarray/multires.hpp"
#include "itarray/overlap.hpp"
#include "itarray/text_format.hpp"

namespace py = pybind11;
using namespace itarray;

namespace {

py::object scalar_to_py(const Scalar& s) {
  if (s.is_null()) return py::none();
  if (s.is_int()) return py::int_(s.as_int());
  return py::float_(s.as_double());
}

py::list trace_to_py(const IterationTrace& trace) {
  py::list out;
  for (const auto& r : trace) {
    py::dict d;
    d["iteration"] = r.iteration;
    d["changed_cells"] = r.changed_cells;
    d["termination_value"] = r.termination_value;
    d["cells_touched"] = r.cells_touched;
    d["groups_updated"] = r.groups_updated;
    d["mini_index"] = r.mini_index;
    d["major_index"] = r.major_index;
    d["shuffle_performed"] = r.shuffle_performed;
    d["shuffled_chunks"] = r.shuffled_chunks;
    d["shuffled_cells"] = r.shuffled_cells;
    d["shuffled_bytes"] = r.shuffled_bytes;
    out.append(d);
  }
  return out;
}

py::list traces_to_py(const std::vector<IterationTrace>& levels) {
  py::list out;
  for (const auto& t : levels) out.append(trace_to_py(t));
  return out;
}

GenerateParams make_params(std::uint64_t seed, std::int64_t nx, std::int64_t ny, std::int64_t nt,
                           std::int64_t sources, double noise, double background, double outlier_rate) {
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

}  // namespace

PYBIND11_MODULE(_itarray, m) {
  m.doc() = "Chunked sparse arrays with iterative fixpoint queries";
  py::register_exception<Error>(m, "ItarrayError", PyExc_RuntimeError);

  py::class_<ChunkedArray>(m, "Array")
      .def_property_readonly("dims",
                             [](const ChunkedArray& a) {
                               py::list out;
                               for (const auto& d : a.schema().dims())
                                 out.append(py::make_tuple(d.name, d.lower, d.upper));
                               return out;
                             })
      .def_property_readonly("attrs",
                             [](const ChunkedArray& a) {
                               py::list out;
                               for (const auto& at : a.schema().attrs()) out.append(at.name);
                               return out;
                             })
      .def_property_readonly("chunks", [](const ChunkedArray& a) { return a.schema().chunk_extents(); })
      .def("__len__", &ChunkedArray::size)
      .def("cells",
           [](const ChunkedArray& a) {
             py::dict out;
             for (const auto& [coord, tuple] : a.nonempty_cells()) {
               py::tuple key(coord.size());
               for (std::size_t i = 0; i < coord.size(); ++i) key[i] = coord[i];
               py::tuple val(tuple.size());
               for (std::size_t i = 0; i < tuple.size(); ++i) val[i] = scalar_to_py(tuple[i]);
               out[key] = val;
             }
             return out;
           },
           "Dict from coordinate tuple to attribute tuple")
      .def("get",
           [](const ChunkedArray& a, const std::vector<std::int64_t>& coord) -> py::object {
             if (coord.size() != a.schema().rank()) throw Error(ErrorCode::BadParams, "wrong coordinate rank");
             const CellTuple* t = a.find(coord);
             if (!t) return py::none();
             py::tuple val(t->size());
             for (std::size_t i = 0; i < t->size(); ++i) val[i] = scalar_to_py((*t)[i]);
             return val;
           })
      .def("dump", [](const ChunkedArray& a) { return dump_array(a); })
      .def("hash", [](const ChunkedArray& a) { return array_hash(a); })
      .def("rechunk", [](const ChunkedArray& a, std::vector<std::int64_t> chunks) { return rechunk(a, chunks); })
      .def("__repr__", [](const ChunkedArray& a) {
        return "<itarray.Array " + schema_header(a.schema()) + " cells=" + std::to_string(a.size()) + ">";
      });

  m.def("loads", [](const std::string& text, std::vector<std::int64_t> chunks) { return load_array(text, chunks); },
        py::arg("text"), py::arg("chunks") = std::vector<std::int64_t>{});
  m.def("load", [](const std::string& path, std::vector<std::int64_t> chunks) { return read_array_file(path, chunks); },
        py::arg("path"), py::arg("chunks") = std::vector<std::int64_t>{});
  m.def("save", [](const std::string& path, const ChunkedArray& a) { write_array_file(path, a); });
  m.def("diff_count", [](const ChunkedArray& a, const ChunkedArray& b) { return diff_count(a, b); });

  m.def(
      "generate_images",
      [](std::uint64_t seed, std::int64_t nx, std::int64_t ny, std::int64_t nt, std::int64_t sources, double noise,
         double background, double outlier_rate) {
        return generate_images(make_params(seed, nx, ny, nt, sources, noise, background, outlier_rate));
      },
      py::arg("seed") = 1, py::arg("nx") = 64, py::arg("ny") = 64, py::arg("nt") = 16, py::arg("sources") = 8,
      py::arg("noise") = 10.0, py::arg("background") = 1000.0, py::arg("outlier_rate") = 0.01);

  m.def("detection_labels", &detection_labels, py::arg("images"), py::arg("background") = 1000.0,
        py::arg("noise") = 10.0, py::arg("threshold_sigmas") = 5.0);
  m.def("coadd", &coadd);

  m.def(
      "sigmaclip",
      [](const ChunkedArray& images, double k, const std::string& strategy, std::size_t workers) {
        RunResult r = run_sigmaclip(images, {k}, parse_strategy(strategy), {workers});
        return py::make_tuple(r.final, trace_to_py(r.trace));
      },
      py::arg("images"), py::arg("k") = 3.0, py::arg("strategy") = "naive", py::arg("workers") = 1);

  m.def(
      "sourcedetect",
      [](const ChunkedArray& labels, std::int64_t r, const std::string& policy, std::size_t workers, int levels,
         std::vector<std::int64_t> block) {
        FixPointSpec spec = sourcedetect_spec({r, 0});
        LevelRunner runner;
        if (!policy.empty()) {
          ParallelOptions opt{ShufflePolicy::parse(policy), workers, {}};
          runner = [opt](const FixPointSpec& s, const ChunkedArray& a) {
            ParallelResult p = run_parallel(s, a, opt);
            return RunResult{p.final, p.trace, p.converged};
          };
        } else {
          runner = [workers](const FixPointSpec& s, const ChunkedArray& a) { return run_array(s, a, {workers}); };
        }
        if (levels > 1) {
          PyramidSpec pyr = sourcedetect_pyramid(levels, block);
          PyramidState st = build_pyramid(labels, pyr);
          MultiresResult mr = run_multires(st, spec, pyr, runner, nullptr);
          return py::make_tuple(mr.final, traces_to_py(mr.traces));
        }
        RunResult res = runner(spec, labels);
        return py::make_tuple(res.final, traces_to_py({res.trace}));
      },
      py::arg("labels"), py::arg("r") = 1, py::arg("policy") = "", py::arg("workers") = 1, py::arg("levels") = 1,
      py::arg("block") = std::vector<std::int64_t>{});

  m.def(
      "kmeans",
      [](const ChunkedArray& points, std::int64_t clusters, std::uint64_t seed, int levels, std::size_t workers) {
        KMeansParams kp{clusters, seed};
        if (levels > 1) {
          KMeansMultiresResult mr = kmeans_multires(points, kp, levels, {}, {workers});
          return py::make_tuple(mr.final.labeled, traces_to_py(mr.traces));
        }
        KMeansResult r = kmeans_run(points, kp, std::nullopt, {workers});
        return py::make_tuple(r.labeled, traces_to_py({r.trace}));
      },
      py::arg("points"), py::arg("clusters") = 4, py::arg("seed") = 1, py::arg("levels") = 1, py::arg("workers") = 1);

  m.def(
      "bench",
      [](const std::string& app, std::vector<std::string> strategies, std::vector<std::string> policies, bool multires,
         std::size_t workers, std::uint64_t seed, std::int64_t nx, std::int64_t ny, std::int64_t nt,
         std::vector<std::int64_t> chunks, double k) {
        BenchConfig cfg;
        cfg.app = app;
        for (const auto& s : strategies) cfg.strategies.push_back(parse_strategy(s));
        for (const auto& p : policies) cfg.policies.push_back(ShufflePolicy::parse(p));
        cfg.multires = multires;
        cfg.workers = workers;
        cfg.image.seed = seed;
        cfg.image.nx = nx;
        cfg.image.ny = ny;
        cfg.image.nt = nt;
        cfg.chunks = std::move(chunks);
        cfg.k = k;
        BenchReport rep = bench(cfg);
        py::dict out;
        out["csv"] = rep.csv();
        out["summary"] = rep.summary();
        out["agree"] = rep.agree;
        return out;
      },
      py::arg("app"), py::arg("strategies") = std::vector<std::string>{},
      py::arg("policies") = std::vector<std::string>{}, py::arg("multires") = false, py::arg("workers") = 1,
      py::arg("seed") = 1, py::arg("nx") = 32, py::arg("ny") = 32, py::arg("nt") = 8,
      py::arg("chunks") = std::vector<std::int64_t>{}, py::arg("k") = 3.0);
}
