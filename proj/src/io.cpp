#include "cinpp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "cinpp/error.hpp"
#include "cinpp/rng.hpp"

namespace cinpp {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in native little-endian order");

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg, std::optional<std::size_t> line) {
  if (line) throw Error(code, msg, *line);
  throw Error(code, msg);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IO, "read failed for " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IO, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IO, "write failed for " + path.string());
}

std::optional<Matrix> matrix_from_json(const Json& j, const char* field, std::optional<std::size_t> line) {
  if (!j.contains(field) || j[field].is_null()) return std::nullopt;
  const Json& rows = j[field];
  if (!rows.is_array()) fail(ErrorCode::Malformed, std::string(field) + " must be an array of rows", line);
  Matrix m;
  m.rows = rows.size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Json& row = rows[r];
    if (!row.is_array()) fail(ErrorCode::Malformed, std::string(field) + " row " + std::to_string(r) + " is not an array", line);
    if (r == 0) {
      m.cols = row.size();
    } else if (row.size() != m.cols) {
      fail(ErrorCode::FeatureShapeMismatch,
           std::string(field) + " row " + std::to_string(r) + " has " + std::to_string(row.size()) +
               " entries, expected " + std::to_string(m.cols),
           line);
    }
    for (const Json& x : row) {
      if (!x.is_number()) fail(ErrorCode::Malformed, std::string(field) + " entries must be numbers", line);
      const double v = x.get<double>();
      if (!std::isfinite(v)) fail(ErrorCode::Malformed, std::string(field) + " entries must be finite", line);
      m.data.push_back(v);
    }
  }
  return m;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    rows.push_back(Json(std::vector<double>(row.begin(), row.end())));
  }
  return rows;
}

}  // namespace

// ---- graphs ------------------------------------------------------------------

Graph graph_from_json(const Json& j, std::optional<std::size_t> line) {
  if (!j.is_object()) fail(ErrorCode::Malformed, "graph must be a JSON object", line);
  if (!j.contains("num_nodes") || !j["num_nodes"].is_number_integer() || j["num_nodes"].get<std::int64_t>() < 0) {
    fail(ErrorCode::Malformed, "num_nodes must be a non-negative integer", line);
  }
  const auto n = static_cast<std::size_t>(j["num_nodes"].get<std::int64_t>());
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  if (j.contains("edges")) {
    const Json& e = j["edges"];
    if (!e.is_array()) fail(ErrorCode::Malformed, "edges must be an array", line);
    for (const Json& p : e) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
        fail(ErrorCode::Malformed, "each edge must be a pair of integers", line);
      }
      edges.emplace_back(p[0].get<std::int64_t>(), p[1].get<std::int64_t>());
    }
  }
  auto nf = matrix_from_json(j, "node_features", line);
  auto ef = matrix_from_json(j, "edge_features", line);
  std::vector<double> target;
  if (j.contains("target") && !j["target"].is_null()) {
    const Json& t = j["target"];
    if (t.is_number()) {
      target.push_back(t.get<double>());
    } else if (t.is_array()) {
      for (const Json& x : t) {
        if (!x.is_number()) fail(ErrorCode::Malformed, "target entries must be numbers", line);
        target.push_back(x.get<double>());
      }
    } else {
      fail(ErrorCode::Malformed, "target must be a number or an array", line);
    }
    for (double x : target) {
      if (!std::isfinite(x)) fail(ErrorCode::Malformed, "target must be finite", line);
    }
  }
  try {
    Graph g = build_graph(n, edges, std::move(nf), std::move(ef));
    g.target = std::move(target);
    return g;
  } catch (const Error& e) {
    if (line && !e.line()) throw Error(e.code(), e.message(), *line);
    throw;
  }
}

Json graph_to_json(const Graph& g) {
  Json j;
  j["num_nodes"] = g.num_nodes;
  Json edges = Json::array();
  for (const Edge& e : g.edges) edges.push_back({e.u, e.v});
  j["edges"] = std::move(edges);
  if (g.node_features) j["node_features"] = matrix_to_json(*g.node_features);
  if (g.edge_features) j["edge_features"] = matrix_to_json(*g.edge_features);
  if (g.target.size() == 1) {
    j["target"] = g.target[0];
  } else if (!g.target.empty()) {
    j["target"] = g.target;
  }
  return j;
}

Dataset parse_graph_jsonl_text(std::string_view text, const std::string& source) {
  Dataset d;
  d.source = source;
  d.hash = fnv1a64(text);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool width_set = false;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::Malformed, std::string("invalid JSON: ") + e.what(), line_no);
    }
    Graph g = graph_from_json(j, line_no);
    if (!width_set) {
      d.target_width = g.target.size();
      width_set = true;
    } else if (g.target.size() != d.target_width) {
      throw Error(ErrorCode::Malformed,
                  "target has " + std::to_string(g.target.size()) + " entries, earlier graphs have " +
                      std::to_string(d.target_width),
                  line_no);
    }
    d.graphs.push_back(std::move(g));
  }
  if (d.graphs.empty()) throw Error(ErrorCode::EmptyDataset, "no graphs in " + source);
  return d;
}

Dataset parse_graph_jsonl(const std::filesystem::path& path) {
  return parse_graph_jsonl_text(read_file(path), path.string());
}

std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  for (const Graph& g : d.graphs) {
    out += graph_to_json(g).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) { write_file(path, dataset_to_jsonl(d)); }

std::size_t env_threads() {
  const char* v = std::getenv("CINPP_NUM_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw Error(ErrorCode::BadParams, std::string("CINPP_NUM_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

std::vector<Sample> prepare_samples(const Dataset& d, std::size_t max_ring_size, RingInit ring_init,
                                    std::size_t threads) {
  std::vector<Sample> out(d.graphs.size());
  auto work = [&](std::size_t i) {
    out[i].complex = lift(d.graphs[i], max_ring_size);
    out[i].features = featurize(d.graphs[i], out[i].complex, ring_init);
    out[i].target = d.graphs[i].target;
  };
  threads = std::max<std::size_t>(1, std::min(threads, d.graphs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) work(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < out.size(); i += threads) work(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---- complexes ---------------------------------------------------------------

Json serialize_complex(const CellComplex& c) {
  Json j;
  j["max_ring_size"] = c.max_ring_size();
  Json dims = Json::array();
  for (int k = 0; k < kNumDims; ++k) {
    Json cells = Json::array();
    for (std::size_t i = 0; i < c.num_cells(k); ++i) {
      const CellId id = c.offset(k) + static_cast<CellId>(i);
      Json cell;
      cell["id"] = id;
      cell["boundary"] = std::vector<CellId>(c.boundary(id).begin(), c.boundary(id).end());
      cell["coboundary"] = std::vector<CellId>(c.coboundary(id).begin(), c.coboundary(id).end());
      Json up = Json::array(), low = Json::array();
      for (const Incidence& x : c.upper_neighbors(id)) up.push_back({x.cell, x.witness});
      for (const Incidence& x : c.lower_neighbors(id)) low.push_back({x.cell, x.witness});
      cell["upper"] = std::move(up);
      cell["lower"] = std::move(low);
      cells.push_back(std::move(cell));
    }
    dims.push_back(std::move(cells));
  }
  j["cells"] = std::move(dims);
  return j;
}

CellComplex deserialize_complex(const Json& j) {
  try {
    if (!j.is_object() || !j.contains("cells") || !j["cells"].is_array() || j["cells"].size() != kNumDims) {
      throw Error(ErrorCode::Malformed, "complex JSON needs a 'cells' array with one list per dimension");
    }
    std::vector<Cell> cells;
    CellComplex::Tables t;
    auto incidences = [](const Json& a) {
      std::vector<Incidence> out;
      for (const Json& p : a) out.push_back({p.at(0).get<CellId>(), p.at(1).get<CellId>()});
      return out;
    };
    for (int k = 0; k < kNumDims; ++k) {
      for (const Json& cj : j["cells"][k]) {
        Cell cell;
        cell.id = cj.at("id").get<CellId>();
        cell.dim = k;
        cell.boundary = cj.at("boundary").get<std::vector<CellId>>();
        cells.push_back(std::move(cell));
        t.coboundary.push_back(cj.at("coboundary").get<std::vector<CellId>>());
        t.upper.push_back(incidences(cj.at("upper")));
        t.lower.push_back(incidences(cj.at("lower")));
      }
    }
    const std::size_t k = j.value("max_ring_size", std::size_t{0});
    return CellComplex(std::move(cells), std::move(t), k);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Malformed, std::string("complex JSON: ") + e.what());
  }
}

// ---- configs -----------------------------------------------------------------

namespace {

std::string readout_name(ReadoutAgg r) { return r == ReadoutAgg::Sum ? "sum" : "mean"; }
ReadoutAgg parse_readout(const std::string& s) {
  if (s == "sum") return ReadoutAgg::Sum;
  if (s == "mean") return ReadoutAgg::Mean;
  throw Error(ErrorCode::BadParams, "readout must be sum or mean, got '" + s + "'");
}
std::string ring_init_name(RingInit r) {
  switch (r) {
    case RingInit::Zeros: return "zeros";
    case RingInit::Sum: return "sum";
    case RingInit::Mean: return "mean";
  }
  return "sum";
}
RingInit parse_ring_init(const std::string& s) {
  if (s == "zeros") return RingInit::Zeros;
  if (s == "sum") return RingInit::Sum;
  if (s == "mean") return RingInit::Mean;
  throw Error(ErrorCode::BadParams, "ring init must be zeros, sum or mean, got '" + s + "'");
}

}  // namespace

Json to_json(const ModelConfig& c) {
  Json j;
  j["num_layers"] = c.num_layers;
  j["hidden"] = c.hidden;
  j["input_dims"] = c.input_dims;
  j["out_dim"] = c.out_dim;
  j["readout"] = readout_name(c.readout);
  j["dropout"] = c.dropout;
  j["use_lower"] = c.use_lower;
  j["batchnorm"] = c.batchnorm;
  j["bn_eps"] = c.bn_eps;
  j["bn_momentum"] = c.bn_momentum;
  j["ring_init"] = ring_init_name(c.ring_init);
  j["seed"] = c.seed;
  // Fixed choices, recorded so a checkpoint documents the architecture fully.
  j["fixed"] = {
      {"aggregation", "sum"},
      {"activation", "relu"},
      {"message_nonlinearity", "relu"},
      {"outer_mlp_layers", 2},
      {"norm_placement", "after every dense layer of the outer MLPs and the update; none in inner messages or readout"},
      {"dropout_placement", "after each layer's update output, training only"},
      {"empty_branches", "zero block in the update input, no parameters"},
      {"init", "glorot_uniform weights, zero biases, eps = 0"},
      {"missing_node_features", "ones column"},
      {"missing_edge_features", "zeros column"},
  };
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  try {
    ModelConfig c;
    c.num_layers = j.value("num_layers", c.num_layers);
    c.hidden = j.value("hidden", c.hidden);
    if (j.contains("input_dims")) c.input_dims = j["input_dims"].get<std::array<std::size_t, kNumDims>>();
    c.out_dim = j.value("out_dim", c.out_dim);
    c.readout = parse_readout(j.value("readout", std::string("sum")));
    c.dropout = j.value("dropout", c.dropout);
    c.use_lower = j.value("use_lower", c.use_lower);
    c.batchnorm = j.value("batchnorm", c.batchnorm);
    c.bn_eps = j.value("bn_eps", c.bn_eps);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.ring_init = parse_ring_init(j.value("ring_init", std::string("sum")));
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Malformed, std::string("model config: ") + e.what());
  }
}

Json to_json(const TrainConfig& c) {
  return Json{{"lr", c.lr},
              {"plateau_patience", c.plateau_patience},
              {"lr_halve_factor", c.lr_halve_factor},
              {"early_stop_lr", c.early_stop_lr},
              {"plateau_rel", c.plateau_rel},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"seed", c.seed},
              {"task", to_string(c.task)},
              {"loss", c.task == TaskType::Regression ? "l1" : "bce_with_logits"}};
}

TrainConfig train_config_from_json(const Json& j) {
  try {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.lr_halve_factor = j.value("lr_halve_factor", c.lr_halve_factor);
    c.early_stop_lr = j.value("early_stop_lr", c.early_stop_lr);
    c.plateau_rel = j.value("plateau_rel", c.plateau_rel);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.task = parse_task(j.value("task", std::string("regression")));
    return c;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Malformed, std::string("train config: ") + e.what());
  }
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'I', 'N', 'P', 'P', 'C', 'K', 'P'};
constexpr std::size_t kPrefix = 8 + 4 + 4 + 8;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

Json nullable(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
double from_nullable(const Json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

}  // namespace

std::string checkpoint_bytes(CinModel& model, const TrainState* state) {
  std::vector<double> blob;
  Json header;
  header["format"] = "cinpp-checkpoint";
  header["model"] = to_json(model.config);

  const auto params = model.parameters();
  Json pj = Json::array();
  for (Parameter* p : params) {
    pj.push_back({{"name", p->name}, {"offset", blob.size()}, {"shape", p->tensor.shape()}});
    blob.insert(blob.end(), p->tensor.data().begin(), p->tensor.data().end());
  }
  header["params"] = std::move(pj);

  Json bj = Json::array();
  for (const NamedStats& s : model.norm_stats()) {
    bj.push_back({{"name", s.name + "/running_mean"}, {"offset", blob.size()}, {"size", s.stats->running_mean.size()}});
    blob.insert(blob.end(), s.stats->running_mean.begin(), s.stats->running_mean.end());
    bj.push_back({{"name", s.name + "/running_var"}, {"offset", blob.size()}, {"size", s.stats->running_var.size()}});
    blob.insert(blob.end(), s.stats->running_var.begin(), s.stats->running_var.end());
  }
  header["buffers"] = std::move(bj);

  if (state) {
    Json sj;
    sj["epoch"] = state->epoch;
    sj["best_val_metric"] = nullable(state->best_val_metric);
    sj["best_epoch"] = state->best_epoch;
    sj["scheduler"] = {{"lr", state->scheduler.lr()},
                       {"best", nullable(state->scheduler.best())},
                       {"bad_epochs", state->scheduler.bad_epochs()},
                       {"patience", state->scheduler.patience()},
                       {"factor", state->scheduler.factor()},
                       {"rel_threshold", state->scheduler.rel_threshold()}};
    sj["adam_step"] = state->adam.step;
    Json moments = Json::array();
    for (std::size_t i = 0; i < state->adam.m.size(); ++i) {
      moments.push_back({{"m", blob.size()}, {"v", blob.size() + state->adam.m[i].size()}, {"size", state->adam.m[i].size()}});
      blob.insert(blob.end(), state->adam.m[i].begin(), state->adam.m[i].end());
      blob.insert(blob.end(), state->adam.v[i].begin(), state->adam.v[i].end());
    }
    sj["adam_moments"] = std::move(moments);
    header["train_state"] = std::move(sj);
  } else {
    header["train_state"] = nullptr;
  }

  const std::string_view blob_bytes(reinterpret_cast<const char*>(blob.data()), blob.size() * sizeof(double));
  header["blob_doubles"] = blob.size();
  header["checksum"] = hex64(fnv1a64(blob_bytes));
  const std::string hs = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointMajor);
  put<std::uint32_t>(out, kCheckpointMinor);
  put<std::uint64_t>(out, hs.size());
  out += hs;
  out.append(blob_bytes);
  return out;
}

Checkpoint checkpoint_from_bytes(std::string_view bytes) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CorruptBlob, "not a checkpoint (bad magic or too short)");
  }
  const auto major = get<std::uint32_t>(bytes, 8);
  const auto minor = get<std::uint32_t>(bytes, 12);
  if (major > kCheckpointMajor) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint format " + std::to_string(major) + "." + std::to_string(minor) +
                                                " is newer than supported " + std::to_string(kCheckpointMajor) + "." +
                                                std::to_string(kCheckpointMinor));
  }
  const auto hlen = get<std::uint64_t>(bytes, 16);
  if (hlen > bytes.size() - kPrefix) throw Error(ErrorCode::CorruptBlob, "truncated header");
  Json header;
  try {
    header = Json::parse(bytes.substr(kPrefix, hlen));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptBlob, std::string("header: ") + e.what());
  }

  try {
    const std::size_t n = header.at("blob_doubles").get<std::size_t>();
    const std::string_view blob_bytes = bytes.substr(kPrefix + hlen);
    if (blob_bytes.size() != n * sizeof(double)) {
      throw Error(ErrorCode::CorruptBlob, "blob has " + std::to_string(blob_bytes.size()) + " bytes, header says " +
                                              std::to_string(n * sizeof(double)));
    }
    if (hex64(fnv1a64(blob_bytes)) != header.at("checksum").get<std::string>()) {
      throw Error(ErrorCode::CorruptBlob, "blob checksum mismatch");
    }
    std::vector<double> blob(n);
    std::memcpy(blob.data(), blob_bytes.data(), blob_bytes.size());
    auto slice = [&](std::size_t offset, std::size_t size) {
      if (offset > n || size > n - offset) throw Error(ErrorCode::CorruptBlob, "index entry outside the blob");
      return std::span<const double>(blob.data() + offset, size);
    };

    Checkpoint ck;
    ck.model = make_model(model_config_from_json(header.at("model")));
    std::map<std::string, const Json*> by_name;
    for (const Json& p : header.at("params")) by_name[p.at("name").get<std::string>()] = &p;
    for (Parameter* p : ck.model.parameters()) {
      const auto it = by_name.find(p->name);
      if (it == by_name.end()) throw Error(ErrorCode::CorruptBlob, "missing parameter " + p->name);
      const Shape shape = it->second->at("shape").get<Shape>();
      if (shape != p->tensor.shape()) throw Error(ErrorCode::CorruptBlob, "shape mismatch for " + p->name);
      const auto src = slice(it->second->at("offset").get<std::size_t>(), numel(shape));
      std::copy(src.begin(), src.end(), p->tensor.mutable_data().begin());
    }
    if (by_name.size() != ck.model.parameters().size()) {
      throw Error(ErrorCode::CorruptBlob, "checkpoint has parameters the model does not");
    }
    std::map<std::string, const Json*> buffers;
    for (const Json& b : header.at("buffers")) buffers[b.at("name").get<std::string>()] = &b;
    for (const NamedStats& s : ck.model.norm_stats()) {
      for (auto [suffix, vec] : {std::pair{"/running_mean", &s.stats->running_mean}, std::pair{"/running_var", &s.stats->running_var}}) {
        const auto it = buffers.find(s.name + suffix);
        if (it == buffers.end()) throw Error(ErrorCode::CorruptBlob, "missing buffer " + s.name + suffix);
        const std::size_t size = it->second->at("size").get<std::size_t>();
        if (size != vec->size()) throw Error(ErrorCode::CorruptBlob, "size mismatch for " + s.name + suffix);
        const auto src = slice(it->second->at("offset").get<std::size_t>(), size);
        std::copy(src.begin(), src.end(), vec->begin());
      }
    }

    const Json& sj = header.at("train_state");
    if (!sj.is_null()) {
      TrainState st;
      st.epoch = sj.at("epoch").get<std::size_t>();
      st.best_val_metric = from_nullable(sj.at("best_val_metric"));
      st.best_epoch = sj.at("best_epoch").get<std::size_t>();
      const Json& sc = sj.at("scheduler");
      st.scheduler = PlateauScheduler(sc.at("lr").get<double>(), sc.at("patience").get<std::size_t>(),
                                      sc.at("factor").get<double>(), sc.at("rel_threshold").get<double>());
      st.scheduler.restore(sc.at("lr").get<double>(), from_nullable(sc.at("best")), sc.at("bad_epochs").get<std::size_t>());
      st.adam.step = sj.at("adam_step").get<std::uint64_t>();
      for (const Json& m : sj.at("adam_moments")) {
        const std::size_t size = m.at("size").get<std::size_t>();
        const auto ms = slice(m.at("m").get<std::size_t>(), size);
        const auto vs = slice(m.at("v").get<std::size_t>(), size);
        st.adam.m.emplace_back(ms.begin(), ms.end());
        st.adam.v.emplace_back(vs.begin(), vs.end());
      }
      ck.state = std::move(st);
    }
    return ck;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptBlob, std::string("header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, CinModel& model, const TrainState* state) {
  write_file(path, checkpoint_bytes(model, state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_bytes(read_file(path)); }

// ---- synthetic data ----------------------------------------------------------

SyntheticFamily parse_family(const std::string& s) {
  if (s == "ring-count") return SyntheticFamily::RingCount;
  if (s == "fused-chain") return SyntheticFamily::FusedChain;
  if (s == "cycle-pair") return SyntheticFamily::CyclePair;
  throw Error(ErrorCode::BadParams, "unknown family '" + s + "' (ring-count, fused-chain, cycle-pair)");
}

std::string to_string(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::RingCount: return "ring-count";
    case SyntheticFamily::FusedChain: return "fused-chain";
    case SyntheticFamily::CyclePair: return "cycle-pair";
  }
  return "ring-count";
}

namespace {

using EdgeList = std::vector<std::pair<std::int64_t, std::int64_t>>;

}  // namespace

Graph fused_chain(std::size_t n) {
  if (n < 1) throw Error(ErrorCode::BadParams, "fused chain needs at least one ring");
  const auto u = [&](std::size_t i) { return static_cast<std::int64_t>(i); };
  const auto l = [&](std::size_t i) { return static_cast<std::int64_t>(n + 1 + i); };
  const auto a = [&](std::size_t i) { return static_cast<std::int64_t>(2 * (n + 1) + i); };
  const auto c = [&](std::size_t i) { return static_cast<std::int64_t>(3 * n + 2 + i); };
  EdgeList e;
  for (std::size_t i = 0; i <= n; ++i) e.emplace_back(u(i), l(i));
  for (std::size_t i = 0; i < n; ++i) {
    e.emplace_back(u(i), a(i));
    e.emplace_back(a(i), u(i + 1));
    e.emplace_back(l(i), c(i));
    e.emplace_back(c(i), l(i + 1));
  }
  return build_graph(4 * n + 2, e);
}

Graph cycle_graph(std::size_t n) {
  if (n < 3) throw Error(ErrorCode::BadParams, "a cycle needs at least 3 vertices");
  EdgeList e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return build_graph(n, e);
}

Graph disjoint_union(const Graph& a, const Graph& b) {
  if (a.node_features.has_value() != b.node_features.has_value() ||
      a.edge_features.has_value() != b.edge_features.has_value()) {
    throw Error(ErrorCode::FeatureShapeMismatch, "cannot join graphs with and without features");
  }
  EdgeList e;
  for (const Edge& x : a.edges) e.emplace_back(x.u, x.v);
  for (const Edge& x : b.edges) e.emplace_back(x.u + a.num_nodes, x.v + a.num_nodes);
  auto stack = [](const std::optional<Matrix>& x, const std::optional<Matrix>& y) -> std::optional<Matrix> {
    if (!x) return std::nullopt;
    if (x->cols != y->cols) throw Error(ErrorCode::FeatureShapeMismatch, "feature widths differ");
    Matrix m = *x;
    m.rows += y->rows;
    m.data.insert(m.data.end(), y->data.begin(), y->data.end());
    return m;
  };
  Graph g = build_graph(a.num_nodes + b.num_nodes, e, stack(a.node_features, b.node_features),
                        stack(a.edge_features, b.edge_features));
  return g;
}

namespace {

Graph ring_count_graph(Rng& rng, const SyntheticParams& p) {
  std::vector<std::size_t> rings(rng.below(p.max_hexagons + 1), 6);
  static constexpr std::size_t kDistractorSizes[] = {3, 4, 5, 7, 8};
  const std::size_t distractors = rng.below(p.max_distractors + 1);
  for (std::size_t i = 0; i < distractors; ++i) rings.push_back(kDistractorSizes[rng.below(5)]);
  std::shuffle(rings.begin(), rings.end(), rng);

  EdgeList e;
  std::size_t n = 0;
  for (std::size_t len : rings) {
    // Rings hang off the existing graph by a bridge or a shared cut vertex,
    // so no other cycles appear.
    const bool spiro = n > 0 && rng.bernoulli(0.5);
    std::vector<std::int64_t> vs;
    if (spiro) vs.push_back(static_cast<std::int64_t>(rng.below(n)));
    const std::int64_t anchor = n > 0 ? static_cast<std::int64_t>(rng.below(n)) : -1;
    while (vs.size() < len) vs.push_back(static_cast<std::int64_t>(n++));
    for (std::size_t i = 0; i < len; ++i) e.emplace_back(vs[i], vs[(i + 1) % len]);
    if (!spiro && anchor >= 0) e.emplace_back(anchor, vs[rng.below(len)]);
  }
  const std::size_t pendants = rng.below(p.max_pendants + 1);
  for (std::size_t i = 0; i < pendants; ++i) {
    if (n > 0) e.emplace_back(static_cast<std::int64_t>(rng.below(n)), static_cast<std::int64_t>(n));
    ++n;
  }
  if (n == 0) n = 1;

  Graph g = build_graph(n, e);
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), NodeId{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  g = relabel_nodes(g, perm);
  std::size_t hexagons = 0;
  for (const Cycle& c : enumerate_induced_cycles(g, 6)) hexagons += c.size() == 6;
  g.target = {static_cast<double>(hexagons)};
  return g;
}

}  // namespace

Dataset generate_synthetic(SyntheticFamily family, const SyntheticParams& p, std::uint64_t seed) {
  Dataset d;
  d.target_width = 1;
  const Rng root = Rng(seed).split(to_string(family));
  switch (family) {
    case SyntheticFamily::RingCount: {
      if (p.count < 1) throw Error(ErrorCode::BadParams, "count must be positive");
      for (std::size_t i = 0; i < p.count; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        d.graphs.push_back(ring_count_graph(rng, p));
      }
      d.task = TaskType::Regression;
      break;
    }
    case SyntheticFamily::FusedChain: {
      if (p.min_length < 1 || p.max_length < p.min_length) {
        throw Error(ErrorCode::BadParams, "fused chain lengths need 1 <= min <= max");
      }
      for (std::size_t len = p.min_length; len <= p.max_length; ++len) {
        Graph g = fused_chain(len);
        g.target = {static_cast<double>(len)};
        d.graphs.push_back(std::move(g));
      }
      d.task = TaskType::Regression;
      break;
    }
    case SyntheticFamily::CyclePair: {
      if (p.min_length < 3 || p.max_length < p.min_length) {
        throw Error(ErrorCode::BadParams, "cycle pairs need 3 <= min <= max");
      }
      for (std::size_t m = p.min_length; m <= p.max_length; ++m) {
        Graph big = cycle_graph(2 * m);
        big.target = {1.0};
        Graph two = disjoint_union(cycle_graph(m), cycle_graph(m));
        two.target = {0.0};
        d.graphs.push_back(std::move(big));
        d.graphs.push_back(std::move(two));
      }
      d.task = TaskType::Binary;
      break;
    }
  }
  d.source = "synth:" + to_string(family) + ":seed=" + std::to_string(seed);
  d.hash = fnv1a64(dataset_to_jsonl(d));
  return d;
}

}  // namespace cinpp
