#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numeric>
#include <optional>

#include "cinpp/cwl.hpp"
#include "cinpp/error.hpp"
#include "cinpp/io.hpp"
#include "cinpp/model.hpp"
#include "cinpp/train.hpp"

namespace py = pybind11;
using namespace cinpp;

namespace {

Graph graph_from_text(const std::string& text) {
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Malformed, "graph is not valid JSON");
  return graph_from_json(j);
}

Scheme scheme_of(const std::string& s) {
  if (s == "cin") return Scheme::Cin;
  if (s == "cinpp") return Scheme::CinPP;
  throw Error(ErrorCode::BadParams, "scheme must be 'cin' or 'cinpp'");
}

std::vector<std::pair<CellId, CellId>> pairs(std::span<const Incidence> xs) {
  std::vector<std::pair<CellId, CellId>> out;
  for (const Incidence& x : xs) out.emplace_back(x.cell, x.witness);
  return out;
}

py::dict refinement(const CellComplex& c, const std::string& scheme) {
  const RefinementResult r =
      refine_to_stable(c, initial_coloring(c, InitMode::UniformPerDim), scheme_of(scheme), c.size() + 1);
  py::dict d;
  d["iterations"] = r.iterations;
  d["stabilized_at"] = std::vector<std::size_t>(r.stabilized_at.begin(), r.stabilized_at.end());
  d["colors"] = r.coloring.colors;
  return d;
}

struct TrainResult {
  CinModel model;
  std::string report;
};

// Trains on JSON-Lines text with ratio splits drawn from the train seed.
TrainResult train_jsonl(const std::string& text, const std::string& model_json, const std::string& train_json,
                        std::array<double, 3> ratios, std::size_t max_ring_size) {
  const Dataset d = parse_graph_jsonl_text(text);
  if (d.target_width == 0) throw Error(ErrorCode::Malformed, "graphs carry no targets");
  ModelConfig mc = model_config_from_json(Json::parse(model_json));
  TrainConfig tc = train_config_from_json(Json::parse(train_json));
  const std::vector<Sample> samples = prepare_samples(d, max_ring_size, mc.ring_init);
  for (int k = 0; k < kNumDims; ++k) mc.input_dims[k] = samples[0].features[k].cols;
  mc.out_dim = d.target_width;
  std::vector<std::size_t> perm(samples.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng(tc.seed).split("splits");
  std::shuffle(perm.begin(), perm.end(), rng);
  const double total = ratios[0] + ratios[1] + ratios[2];
  const auto n_train = static_cast<std::size_t>(samples.size() * ratios[0] / total);
  const auto n_val = static_cast<std::size_t>(samples.size() * ratios[1] / total);
  std::vector<Sample> train, val, test;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    (i < n_train ? train : i < n_train + n_val ? val : test).push_back(samples[perm[i]]);
  }
  TrainResult out{make_model(mc), {}};
  const TrainReport r = train_loop(out.model, train, val, test, tc);
  Json curves = Json::array();
  for (const EpochRecord& e : r.epochs) {
    curves.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                      {"val_metric", e.val_metric}});
  }
  out.report = Json{{"epochs", curves},
                    {"best_epoch", r.best_epoch},
                    {"best_val_metric", r.best_val_metric},
                    {"test_at_best", r.test_at_best},
                    {"final_lr", r.final_lr},
                    {"stopped_by_lr", r.stopped_by_lr},
                    {"split_sizes", {train.size(), val.size(), test.size()}}}
                   .dump();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cell complexes, CWL refinement and the CIN++ model";

  static py::exception<Error> error(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      exc.attr("line") = e.line() ? py::cast(*e.line()) : py::none();
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  py::class_<CellComplex>(m, "CellComplex")
      .def("__len__", &CellComplex::size)
      .def("num_cells", &CellComplex::num_cells, py::arg("dim"))
      .def("offset", &CellComplex::offset, py::arg("dim"))
      .def("dim", &CellComplex::dim, py::arg("cell"))
      .def("max_ring_size", &CellComplex::max_ring_size)
      .def("boundary",
           [](const CellComplex& c, CellId id) { return std::vector<CellId>(c.boundary(id).begin(), c.boundary(id).end()); })
      .def("coboundary",
           [](const CellComplex& c, CellId id) {
             return std::vector<CellId>(c.coboundary(id).begin(), c.coboundary(id).end());
           })
      .def("upper", [](const CellComplex& c, CellId id) { return pairs(c.upper_neighbors(id)); })
      .def("lower", [](const CellComplex& c, CellId id) { return pairs(c.lower_neighbors(id)); })
      .def("validate",
           [](const CellComplex& c) {
             std::vector<std::string> out;
             for (const Violation& v : validate(c).violations)
               out.push_back(std::string(to_string(v.kind)) + " at cell " + std::to_string(v.cell) + ": " + v.detail);
             return out;
           })
      .def("to_json", [](const CellComplex& c) { return serialize_complex(c).dump(); })
      .def_static("from_json", [](const std::string& s) { return deserialize_complex(Json::parse(s)); })
      .def("message_counts",
           [](const CellComplex& c) {
             const MessageCounts mc = count_messages(c);
             py::dict d;
             d["boundary"] = mc.boundary;
             d["upper"] = mc.upper;
             d["lower"] = mc.lower;
             return d;
           })
      .def("refine", &refinement, py::arg("scheme") = "cinpp")
      .def("__eq__", [](const CellComplex& a, const CellComplex& b) { return a == b; });

  m.def("_lift", [](const std::string& g, std::size_t k) { return lift(graph_from_text(g), k); });
  m.def("_induced_cycles",
        [](const std::string& g, std::size_t k) { return enumerate_induced_cycles(graph_from_text(g), k); });
  m.def("_distinguishable", [](const std::string& a, const std::string& b, const std::string& scheme, std::size_t k) {
    return distinguishable(lift(graph_from_text(a), k), lift(graph_from_text(b), k), scheme_of(scheme));
  });
  m.def("_synthetic", [](const std::string& family, std::uint64_t seed, const std::string& params) {
    const Json j = Json::parse(params);
    SyntheticParams p;
    p.count = j.value("count", p.count);
    p.max_hexagons = j.value("max_hexagons", p.max_hexagons);
    p.max_distractors = j.value("max_distractors", p.max_distractors);
    p.max_pendants = j.value("max_pendants", p.max_pendants);
    p.min_length = j.value("min_length", p.min_length);
    p.max_length = j.value("max_length", p.max_length);
    return dataset_to_jsonl(generate_synthetic(parse_family(family), p, seed));
  });

  m.def("mae", [](const std::vector<double>& p, const std::vector<double>& y) { return mae(p, y); });
  m.def("average_precision",
        [](const std::vector<double>& s, const std::vector<double>& y) { return average_precision(s, y); });
  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<double>& y) { return roc_auc(s, y); });

  py::class_<CinModel>(m, "Model")
      .def(py::init([](const std::string& config) { return make_model(model_config_from_json(Json::parse(config))); }))
      .def("config", [](const CinModel& mdl) { return to_json(mdl.config).dump(); })
      .def("num_parameters", &CinModel::num_scalars)
      .def("_predict",
           [](CinModel& mdl, const std::string& g, std::size_t k) {
             const Graph graph = graph_from_text(g);
             const CellComplex c = lift(graph, k);
             return predict(mdl, c, featurize(graph, c, mdl.config.ring_init));
           })
      .def("save", [](CinModel& mdl, const std::string& path) { save_checkpoint(path, mdl); })
      .def("to_bytes", [](CinModel& mdl) { return py::bytes(checkpoint_bytes(mdl)); })
      .def_static("load", [](const std::string& path) { return std::move(load_checkpoint(path).model); })
      .def_static("from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return std::move(checkpoint_from_bytes(s).model);
      });

  m.def(
      "_train",
      [](const std::string& text, const std::string& model_json, const std::string& train_json,
         std::array<double, 3> ratios, std::size_t k) {
        std::optional<TrainResult> r;
        {
          py::gil_scoped_release release;
          r.emplace(train_jsonl(text, model_json, train_json, ratios, k));
        }
        return py::make_tuple(std::move(r->model), r->report);
      });
}
