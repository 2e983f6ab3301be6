// cinpp command-line tool. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <malloc.h>

#include "cinpp/cwl.hpp"
#include "cinpp/error.hpp"
#include "cinpp/gradcheck.hpp"
#include "cinpp/io.hpp"
#include "cinpp/model.hpp"
#include "cinpp/train.hpp"

using namespace cinpp;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadParams:
      return kUsage;
    case ErrorCode::NonFinite:
    case ErrorCode::NotConverged:
    case ErrorCode::NotScalar:
      return kNumeric;
    default:
      return kData;
  }
}

struct Globals {
  bool deterministic = false;
  std::size_t threads() const { return deterministic ? 1 : env_threads(); }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A single JSON object or JSON-Lines.
Dataset read_graphs(const fs::path& path) {
  const std::string text = read_file(path);
  const Json whole = Json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_object()) {
    Dataset d;
    d.graphs.push_back(graph_from_json(whole, 1));
    d.target_width = d.graphs[0].target.size();
    d.source = path.string();
    d.hash = fnv1a64(text);
    return d;
  }
  return parse_graph_jsonl_text(text, path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IO, "write failed: " + path.string());
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

const std::map<std::string, Scheme> kSchemes{{"cin", Scheme::Cin}, {"cinpp", Scheme::CinPP}};
const std::map<std::string, InitMode> kInits{{"uniform", InitMode::UniformPerDim},
                                             {"features", InitMode::FromFeatures}};
const std::map<std::string, ReadoutAgg> kReadouts{{"sum", ReadoutAgg::Sum}, {"mean", ReadoutAgg::Mean}};
const std::map<std::string, RingInit> kRingInits{
    {"zeros", RingInit::Zeros}, {"sum", RingInit::Sum}, {"mean", RingInit::Mean}};
const std::map<std::string, TaskType> kTasks{
    {"regression", TaskType::Regression}, {"binary", TaskType::Binary}, {"multilabel", TaskType::Multilabel}};
const std::map<std::string, SyntheticFamily> kFamilies{{"ring-count", SyntheticFamily::RingCount},
                                                       {"fused-chain", SyntheticFamily::FusedChain},
                                                       {"cycle-pair", SyntheticFamily::CyclePair}};

template <class T>
std::string key_of(const std::map<std::string, T>& m, T v) {
  for (const auto& [k, x] : m)
    if (x == v) return k;
  return "?";
}

// ---- lift ----------------------------------------------------------------------

struct LiftArgs {
  std::string input;
  std::size_t max_ring_size = 6;
  std::string out;
  bool summary = false;
};

int run_lift(const LiftArgs& a) {
  const Dataset d = read_graphs(a.input);
  std::string text;
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    const CellComplex c = lift(d.graphs[i], a.max_ring_size);
    const ValidationReport v = validate(c);
    if (!v.ok()) {
      std::cerr << "graph " << i + 1 << ": lifted complex fails validation\n";
      return kNumeric;
    }
    Json j;
    if (a.summary) {
      const MessageCounts mc = count_messages(c);
      j = {{"vertices", c.num_cells(0)}, {"edges", c.num_cells(1)},  {"rings", c.num_cells(2)},
           {"boundary_messages", mc.boundary}, {"upper_messages", mc.upper}, {"lower_messages", mc.lower}};
    } else {
      j = serialize_complex(c);
    }
    text += j.dump() + "\n";
  }
  emit(a.out, text);
  return 0;
}

// ---- cwl-test ------------------------------------------------------------------

struct CwlArgs {
  std::string a, b;
  std::size_t max_ring_size = 6;
  Scheme scheme = Scheme::CinPP;
  InitMode init = InitMode::UniformPerDim;
  bool stats = false;
};

Graph single_graph(const std::string& path) {
  const Dataset d = read_graphs(path);
  if (d.graphs.size() != 1) throw Error(ErrorCode::Malformed, path + ": expected exactly one graph");
  return d.graphs[0];
}

int run_cwl(const CwlArgs& a) {
  const Graph ga = single_graph(a.a), gb = single_graph(a.b);
  const CellComplex ca = lift(ga, a.max_ring_size), cb = lift(gb, a.max_ring_size);
  const CochainFeatures fa = featurize(ga, ca), fb = featurize(gb, cb);
  const bool use_features = a.init == InitMode::FromFeatures;
  const bool result = distinguishable(ca, cb, a.scheme, a.init, use_features ? &fa : nullptr,
                                      use_features ? &fb : nullptr);
  if (!a.stats) {
    std::cout << (result ? "distinguishable" : "not distinguished") << "\n";
    return 0;
  }
  auto stats = [&](const CellComplex& c, const CochainFeatures& f) {
    const RefinementResult r =
        refine_to_stable(c, initial_coloring(c, a.init, use_features ? &f : nullptr), a.scheme, c.size() + 1);
    return Json{{"cells", {c.num_cells(0), c.num_cells(1), c.num_cells(2)}},
                {"iterations", r.iterations},
                {"stabilized_at", {{"vertices", r.stabilized_at[0]},
                                   {"edges", r.stabilized_at[1]},
                                   {"rings", r.stabilized_at[2]}}},
                {"colors", r.coloring.num_colors()}};
  };
  const Json j{{"distinguishable", result},
               {"scheme", key_of(kSchemes, a.scheme)},
               {"init", key_of(kInits, a.init)},
               {"max_ring_size", a.max_ring_size},
               {"a", stats(ca, fa)},
               {"b", stats(cb, fb)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string splits = "0.8,0.1,0.1";
  std::size_t max_ring_size = 6;
  ModelConfig model;
  TrainConfig train;
  std::string readout = "sum";
  std::string ring_init = "sum";
  std::string task;
  bool no_lower = false;
  std::string out = "run";
};

struct Splits {
  std::vector<std::size_t> train, val, test;
};

Splits make_splits(const std::string& spec, std::size_t n, std::uint64_t seed) {
  Splits s;
  if (fs::exists(spec)) {
    const Json j = Json::parse(read_file(spec), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::Malformed, spec + ": splits must be a JSON object");
    auto list = [&](const char* key) {
      if (!j.contains(key)) throw Error(ErrorCode::Malformed, spec + ": missing '" + key + "'");
      return j.at(key).get<std::vector<std::size_t>>();
    };
    s = {list("train"), list("val"), list("test")};
  } else {
    std::vector<double> r;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) {
      std::size_t used = 0;
      double x = -1.0;
      try {
        x = std::stod(part, &used);
      } catch (const std::exception&) {
      }
      r.push_back(used == part.size() ? x : -1.0);
    }
    if (r.size() != 3 || std::any_of(r.begin(), r.end(), [](double x) { return !(x >= 0.0); }))
      throw Error(ErrorCode::BadParams, "--splits expects a JSON file or three ratios 'train,val,test'");
    const double total = r[0] + r[1] + r[2];
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = Rng(seed).split("splits");
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(n * r[0] / total));
    const auto n_val = static_cast<std::size_t>(std::floor(n * r[1] / total));
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    s.test.assign(perm.begin() + n_train + n_val, perm.end());
  }
  std::vector<char> seen(n, 0);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (std::size_t i : *part) {
      if (i >= n) throw Error(ErrorCode::IndexOutOfRange, "split index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw Error(ErrorCode::Malformed, "splits overlap at index " + std::to_string(i));
    }
  }
  return s;
}

std::vector<Sample> pick(const std::vector<Sample>& all, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

Json nan_to_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

int run_train(TrainArgs a, const Globals& g) {
  a.model.readout = kReadouts.at(a.readout);
  a.model.ring_init = kRingInits.at(a.ring_init);
  a.model.use_lower = !a.no_lower;
  a.model.seed = a.train.seed;
  const Dataset d = parse_graph_jsonl(a.data);
  if (d.target_width == 0) throw Error(ErrorCode::Malformed, a.data + ": graphs carry no targets");
  a.train.task = a.task.empty() ? d.task : kTasks.at(a.task);
  const std::vector<Sample> samples = prepare_samples(d, a.max_ring_size, a.model.ring_init, g.threads());
  for (int k = 0; k < kNumDims; ++k) a.model.input_dims[k] = samples[0].features[k].cols;
  a.model.out_dim = d.target_width;
  validate_config(a.model);
  validate_train_config(a.train);

  const Splits s = make_splits(a.splits, samples.size(), a.train.seed);
  const auto train = pick(samples, s.train), val = pick(samples, s.val), test = pick(samples, s.test);

  const fs::path out(a.out);
  fs::create_directories(out);
  const Json config{{"model", to_json(a.model)},
                    {"train", to_json(a.train)},
                    {"data",
                     {{"path", d.source},
                      {"hash", hex64(d.hash)},
                      {"graphs", d.graphs.size()},
                      {"target_width", d.target_width},
                      {"max_ring_size", a.max_ring_size},
                      {"splits", a.splits},
                      {"split_sizes", {{"train", train.size()}, {"val", val.size()}, {"test", test.size()}}}}},
                    {"threads", g.threads()},
                    {"deterministic", g.deterministic}};
  write_text(out / "config.json", config.dump(2) + "\n");

  CinModel model = make_model(a.model);
  TrainState state;
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << "  lr " << e.lr << "  train " << e.train_loss << "  val " << e.val_metric
              << "\n";
    return true;
  };
  const TrainReport r = train_loop(model, train, val, test, a.train, &state, hooks);

  Json curves = Json::array();
  for (const EpochRecord& e : r.epochs) {
    curves.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_metric", e.val_metric},
                      {"test_metric", nan_to_null(e.test_metric)},
                      {"seconds", e.seconds}});
  }
  const Metrics final_test = evaluate(model, test, a.train.task);
  const Json metrics{{"epochs", curves},
                     {"best_epoch", r.best_epoch},
                     {"best_val_metric", r.best_val_metric},
                     {"test_at_best", r.test_at_best},
                     {"final_lr", r.final_lr},
                     {"stopped_by_lr", r.stopped_by_lr},
                     {"test",
                      {{"loss", final_test.loss},
                       {"mae", final_test.mae},
                       {"ap", final_test.ap},
                       {"roc_auc", final_test.roc_auc},
                       {"primary", final_test.primary}}}};
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  save_checkpoint(out / "checkpoint.ckpt", model, &state);
  std::cout << "best epoch " << r.best_epoch << " of " << r.epochs.size() << ", val " << r.best_val_metric
            << ", test " << r.test_at_best << (r.stopped_by_lr ? " (lr threshold reached)" : "") << "\n";
  return 0;
}

// ---- gradcheck -----------------------------------------------------------------

struct GradArgs {
  std::string data;
  std::size_t count = 3;
  std::size_t max_ring_size = 6;
  std::size_t layers = 2;
  std::size_t hidden = 8;
  std::uint64_t seed = 0;
  GradCheckOptions options;
  bool no_lower = false;
};

int run_gradcheck(const GradArgs& a, const Globals& g) {
  Dataset d;
  if (a.data.empty()) {
    SyntheticParams sp;
    sp.count = a.count;
    sp.max_hexagons = 2;
    sp.max_distractors = 1;
    sp.max_pendants = 2;
    d = generate_synthetic(SyntheticFamily::RingCount, sp, a.seed);
  } else {
    d = parse_graph_jsonl(a.data);
    if (d.graphs.size() > a.count) d.graphs.resize(a.count);
  }
  const std::vector<Sample> samples = prepare_samples(d, a.max_ring_size, RingInit::Sum, g.threads());
  Rng rng = Rng(a.seed).split("gradcheck");
  bool passed = true;
  Json rows = Json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    ModelConfig mc;
    mc.num_layers = a.layers;
    mc.hidden = a.hidden;
    mc.use_lower = !a.no_lower;
    for (int k = 0; k < kNumDims; ++k) mc.input_dims[k] = s.features[k].cols;
    mc.seed = rng.next();
    CinModel m = make_model(mc);
    for (Parameter* p : m.parameters())
      for (double& x : p->tensor.mutable_data()) x += rng.uniform(-0.1, 0.1);
    const ComplexRef ref{&s.complex, &s.features};
    const ComplexBatch batch = make_batch(std::span(&ref, 1));
    Tensor y0;
    {
      NoGradGuard no_grad;
      y0 = forward(m, batch, ForwardContext{});
    }
    const Tensor w = Tensor::full({1, mc.out_dim}, 0.5);
    auto loss = [&] {
      const Tensor diff = add(sub(forward(m, batch, ForwardContext{}), y0), w);
      return sum(mul(diff, diff));
    };
    GradCheckOptions o = a.options;
    o.seed = a.seed + i;
    const auto params = m.parameters();
    const GradCheckReport r = finite_difference_check(loss, params, o);
    passed &= r.passed;
    rows.push_back({{"graph", i},
                    {"cells", s.complex.size()},
                    {"checked", r.checked},
                    {"kinks_skipped", r.skipped},
                    {"max_norm_rel_error", r.max_norm_rel_error},
                    {"max_entry_rel_error", r.max_rel_error},
                    {"passed", r.passed}});
  }
  std::cout << Json{{"tol", a.options.tol}, {"step", a.options.step}, {"passed", passed}, {"complexes", rows}}.dump(2)
            << "\n";
  return passed ? 0 : kNumeric;
}

// ---- profile -------------------------------------------------------------------

struct ProfileArgs {
  std::string data;
  std::size_t min_length = 2;
  std::size_t max_length = 64;
  std::size_t max_ring_size = 6;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t repeats = 5;
  std::string out;
};

int run_profile(const ProfileArgs& a, const Globals& g) {
  Dataset d;
  if (a.data.empty()) {
    SyntheticParams sp;
    sp.min_length = a.min_length;
    sp.max_length = a.max_length;
    d = generate_synthetic(SyntheticFamily::FusedChain, sp, 0);
  } else {
    d = parse_graph_jsonl(a.data);
  }
  const std::vector<Sample> samples = prepare_samples(d, a.max_ring_size, RingInit::Sum, g.threads());
  ModelConfig mc;
  mc.num_layers = a.layers;
  mc.hidden = a.hidden;
  for (int k = 0; k < kNumDims; ++k) mc.input_dims[k] = samples[0].features[k].cols;
  CinModel m = make_model(mc);
  const auto params = m.parameters();
  using Clock = std::chrono::steady_clock;
  auto ms = [](Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); };
  std::string text;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const MessageCounts counts = count_messages(s.complex);
    const ComplexRef ref{&s.complex, &s.features};
    const ComplexBatch batch = make_batch(std::span(&ref, 1));
    double fwd = 1e300, bwd = 1e300;
    for (std::size_t r = 0; r < std::max<std::size_t>(a.repeats, 1); ++r) {
      for (Parameter* p : params) p->tensor.zero_grad();
      auto t0 = Clock::now();
      const Tensor loss = sum(forward(m, batch, ForwardContext{}));
      fwd = std::min(fwd, ms(t0));
      t0 = Clock::now();
      loss.backward();
      bwd = std::min(bwd, ms(t0));
    }
    const Json row{{"graph", i},
                   {"vertices", s.complex.num_cells(0)},
                   {"edges", s.complex.num_cells(1)},
                   {"rings", s.complex.num_cells(2)},
                   {"boundary_messages", counts.boundary},
                   {"upper_messages", counts.upper},
                   {"lower_messages", counts.lower},
                   {"forward_ms", fwd},
                   {"backward_ms", bwd}};
    text += row.dump() + "\n";
  }
  emit(a.out, text);
  return 0;
}

// ---- synth ---------------------------------------------------------------------

struct SynthArgs {
  SyntheticFamily family = SyntheticFamily::RingCount;
  SyntheticParams params;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const Dataset d = generate_synthetic(a.family, a.params, a.seed);
  emit(a.out, dataset_to_jsonl(d));
  if (!a.out.empty() && a.out != "-")
    std::cerr << d.graphs.size() << " graphs, hash " << hex64(fnv1a64(dataset_to_jsonl(d))) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Tensor buffers are large and short-lived; keep them on the heap instead of
  // mapping and faulting in fresh pages for every operation.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Cell complex lifting, CWL refinement and CIN++ training"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--deterministic", g.deterministic, "Single-threaded everywhere (overrides CINPP_NUM_THREADS)");

  LiftArgs lift_args;
  auto* lift_cmd = app.add_subcommand("lift", "Lift graphs to cell complexes and print them as JSON lines");
  lift_cmd->add_option("input", lift_args.input, "Graph JSON or JSON-Lines file")->required();
  lift_cmd->add_option("--max-ring-size", lift_args.max_ring_size, "Largest induced cycle attached as a ring")
      ->capture_default_str();
  lift_cmd->add_flag("--summary", lift_args.summary, "Print cell and message counts instead of the tables");
  lift_cmd->add_option("--out", lift_args.out, "Output file (default stdout)");

  CwlArgs cwl_args;
  auto* cwl_cmd = app.add_subcommand("cwl-test", "Cellular WL test on two graphs");
  cwl_cmd->add_option("graph_a", cwl_args.a)->required();
  cwl_cmd->add_option("graph_b", cwl_args.b)->required();
  cwl_cmd->add_option("--max-ring-size", cwl_args.max_ring_size)->capture_default_str();
  cwl_cmd->add_option("--scheme", cwl_args.scheme)->transform(CLI::CheckedTransformer(kSchemes))->default_str("cinpp");
  cwl_cmd->add_option("--init", cwl_args.init)->transform(CLI::CheckedTransformer(kInits))->default_str("uniform");
  cwl_cmd->add_flag("--stats", cwl_args.stats, "Print stabilization iterations per dimension as JSON");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a CIN++ model on a JSON-Lines dataset");
  train_cmd->add_option("--data", train_args.data, "JSON-Lines dataset")->required();
  train_cmd->add_option("--splits", train_args.splits, "JSON file {train,val,test} or ratios 'a,b,c'")
      ->capture_default_str();
  train_cmd->add_option("--max-ring-size", train_args.max_ring_size)->capture_default_str();
  train_cmd->add_option("--layers", train_args.model.num_layers)->capture_default_str();
  train_cmd->add_option("--hidden", train_args.model.hidden)->capture_default_str();
  train_cmd->add_option("--readout", train_args.readout)->check(CLI::IsMember({"sum", "mean"}))->capture_default_str();
  train_cmd->add_option("--ring-init", train_args.ring_init)
      ->check(CLI::IsMember({"zeros", "sum", "mean"}))
      ->capture_default_str();
  train_cmd->add_option("--dropout", train_args.model.dropout)->capture_default_str();
  train_cmd->add_flag("--no-lower", train_args.no_lower, "Drop lower messages (CIN)");
  train_cmd->add_option("--task", train_args.task, "regression|binary|multilabel (default from data)")
      ->check(CLI::IsMember({"regression", "binary", "multilabel"}));
  train_cmd->add_option("--lr", train_args.train.lr)->capture_default_str();
  train_cmd->add_option("--weight-decay", train_args.train.weight_decay)->capture_default_str();
  train_cmd->add_option("--patience", train_args.train.plateau_patience)->capture_default_str();
  train_cmd->add_option("--early-stop-lr", train_args.train.early_stop_lr)->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.train.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", train_args.train.max_epochs)->capture_default_str();
  train_cmd->add_option("--seed", train_args.train.seed)->capture_default_str();
  train_cmd->add_option("--out", train_args.out, "Run directory")->capture_default_str();

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the model gradients");
  grad_cmd->add_option("--data", grad_args.data, "JSON-Lines graphs (default: synthetic)");
  grad_cmd->add_option("--count", grad_args.count, "Number of complexes")->capture_default_str();
  grad_cmd->add_option("--max-ring-size", grad_args.max_ring_size)->capture_default_str();
  grad_cmd->add_option("--layers", grad_args.layers)->capture_default_str();
  grad_cmd->add_option("--hidden", grad_args.hidden)->capture_default_str();
  grad_cmd->add_option("--step", grad_args.options.step)->capture_default_str();
  grad_cmd->add_option("--tol", grad_args.options.tol)->capture_default_str();
  grad_cmd->add_option("--max-entries", grad_args.options.max_entries_per_param, "Per parameter, 0 = all")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad_args.seed)->capture_default_str();
  grad_cmd->add_flag("--no-lower", grad_args.no_lower);

  ProfileArgs prof_args;
  auto* prof_cmd = app.add_subcommand("profile", "Message counts and forward/backward timing per complex");
  prof_cmd->add_option("--data", prof_args.data, "JSON-Lines graphs (default: fused-ring chains)");
  prof_cmd->add_option("--min-length", prof_args.min_length)->capture_default_str();
  prof_cmd->add_option("--max-length", prof_args.max_length)->capture_default_str();
  prof_cmd->add_option("--max-ring-size", prof_args.max_ring_size)->capture_default_str();
  prof_cmd->add_option("--layers", prof_args.layers)->capture_default_str();
  prof_cmd->add_option("--hidden", prof_args.hidden)->capture_default_str();
  prof_cmd->add_option("--repeats", prof_args.repeats)->capture_default_str();
  prof_cmd->add_option("--out", prof_args.out);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic JSON-Lines dataset");
  synth_cmd->add_option("--family", synth_args.family)
      ->transform(CLI::CheckedTransformer(kFamilies))
      ->default_str("ring-count");
  synth_cmd->add_option("--count", synth_args.params.count)->capture_default_str();
  synth_cmd->add_option("--max-hexagons", synth_args.params.max_hexagons)->capture_default_str();
  synth_cmd->add_option("--max-distractors", synth_args.params.max_distractors)->capture_default_str();
  synth_cmd->add_option("--max-pendants", synth_args.params.max_pendants)->capture_default_str();
  synth_cmd->add_option("--min-length", synth_args.params.min_length)->capture_default_str();
  synth_cmd->add_option("--max-length", synth_args.params.max_length)->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_args.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*lift_cmd) return run_lift(lift_args);
    if (*cwl_cmd) return run_cwl(cwl_args);
    if (*train_cmd) return run_train(train_args, g);
    if (*grad_cmd) return run_gradcheck(grad_args, g);
    if (*prof_cmd) return run_profile(prof_args, g);
    if (*synth_cmd) return run_synth(synth_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
