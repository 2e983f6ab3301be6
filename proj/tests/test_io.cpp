#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cinpp/error.hpp"
#include "cinpp/io.hpp"
#include "oracles.hpp"

using namespace cinpp;

namespace {

Error error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error raised";
  return Error(ErrorCode::BadParams, "none");
}

bool same_graph(const Graph& a, const Graph& b) {
  return a.num_nodes == b.num_nodes && a.edges == b.edges && a.node_features == b.node_features &&
         a.edge_features == b.edge_features && a.target == b.target;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cinpp_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" + name);
}

}  // namespace

TEST(Jsonl, TwoGraphs) {
  const Dataset d = parse_graph_jsonl_text(
      "{\"num_nodes\": 3, \"edges\": [[0,1],[1,2],[2,0]], \"target\": 1}\n"
      "\n"
      "{\"num_nodes\": 2, \"edges\": [[0,1]], \"target\": 0}\n");
  ASSERT_EQ(d.graphs.size(), 2u);
  EXPECT_EQ(d.graphs[0].edges.size(), 3u);
  EXPECT_EQ(d.target_width, 1u);
  EXPECT_EQ(d.hash, fnv1a64("{\"num_nodes\": 3, \"edges\": [[0,1],[1,2],[2,0]], \"target\": 1}\n\n"
                            "{\"num_nodes\": 2, \"edges\": [[0,1]], \"target\": 0}\n"));
}

TEST(Jsonl, SelfLoopReportsLine) {
  const Error e = error_of([] {
    parse_graph_jsonl_text("{\"num_nodes\": 2, \"edges\": [[0,1]]}\n{\"num_nodes\": 2, \"edges\": [[0,0]]}\n");
  });
  EXPECT_EQ(e.code(), ErrorCode::SelfLoop);
  EXPECT_EQ(e.line(), std::optional<std::size_t>(2));
}

TEST(Jsonl, Errors) {
  EXPECT_EQ(error_of([] { parse_graph_jsonl_text(""); }).code(), ErrorCode::EmptyDataset);
  EXPECT_EQ(error_of([] { parse_graph_jsonl_text("  \n\n"); }).code(), ErrorCode::EmptyDataset);
  const Error bad_json = error_of([] { parse_graph_jsonl_text("{\"num_nodes\": 1}\n{nope\n"); });
  EXPECT_EQ(bad_json.code(), ErrorCode::Malformed);
  EXPECT_EQ(bad_json.line(), std::optional<std::size_t>(2));
  const Error ragged = error_of([] {
    parse_graph_jsonl_text("{\"num_nodes\": 2, \"edges\": [], \"node_features\": [[1, 2], [3]]}\n");
  });
  EXPECT_EQ(ragged.code(), ErrorCode::FeatureShapeMismatch);
  EXPECT_EQ(ragged.line(), std::optional<std::size_t>(1));
  const Error rows = error_of([] {
    parse_graph_jsonl_text("{\"num_nodes\": 1}\n\n{\"num_nodes\": 3, \"node_features\": [[1], [2]]}\n");
  });
  EXPECT_EQ(rows.code(), ErrorCode::FeatureShapeMismatch);
  EXPECT_EQ(rows.line(), std::optional<std::size_t>(3));
  EXPECT_EQ(error_of([] { parse_graph_jsonl_text("{\"num_nodes\": 1, \"target\": 1}\n{\"num_nodes\": 1, \"target\": [1, 2]}\n"); })
                .code(),
            ErrorCode::Malformed);
  EXPECT_EQ(error_of([] { parse_graph_jsonl_text("{\"num_nodes\": -1}\n"); }).code(), ErrorCode::Malformed);
  EXPECT_EQ(error_of([] { parse_graph_jsonl_text("{\"num_nodes\": 2, \"edges\": [[0, 5]]}\n"); }).code(),
            ErrorCode::IndexOutOfRange);
  EXPECT_EQ(error_of([] { parse_graph_jsonl("/nonexistent/graphs.jsonl"); }).code(), ErrorCode::IO);
}

TEST(Jsonl, RoundTrip) {
  Rng rng(3);
  Dataset d;
  for (int i = 0; i < 10; ++i) {
    Graph g = oracle::with_random_features(oracle::random_graph(rng, 3 + rng.below(6), 0.4, true), rng, 2, 3);
    g.target = {rng.uniform(), rng.uniform()};
    d.graphs.push_back(std::move(g));
  }
  d.target_width = 2;
  const auto path = temp_path("roundtrip.jsonl");
  write_dataset(path, d);
  const Dataset back = parse_graph_jsonl(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.graphs.size(), d.graphs.size());
  for (std::size_t i = 0; i < d.graphs.size(); ++i) EXPECT_TRUE(same_graph(back.graphs[i], d.graphs[i])) << i;
  EXPECT_EQ(back.target_width, 2u);
}

TEST(ComplexJson, RoundTrip) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const CellComplex c = lift(oracle::random_graph(rng, 4 + rng.below(6), 0.45), 3 + rng.below(5));
    const Json j = serialize_complex(c);
    const CellComplex back = deserialize_complex(Json::parse(j.dump()));
    EXPECT_TRUE(back == c);
    EXPECT_TRUE(validate(back).ok());
  }
}

TEST(ComplexJson, TamperedTablesAreCaughtByValidate) {
  const CellComplex c = lift(oracle::bowtie(), 6);
  Json j = serialize_complex(c);
  j["cells"][0][0]["coboundary"] = Json::array();
  const CellComplex back = deserialize_complex(j);
  EXPECT_FALSE(validate(back).ok());
}

TEST(Synthetic, RingCountLabels) {
  SyntheticParams sp;
  sp.count = 40;
  const Dataset d = generate_synthetic(SyntheticFamily::RingCount, sp, 12);
  ASSERT_EQ(d.graphs.size(), 40u);
  for (const Graph& g : d.graphs) {
    std::size_t hexagons = 0;
    for (const Cycle& c : oracle::induced_cycles_by_subsets(g, 6)) hexagons += c.size() == 6;
    ASSERT_EQ(g.target.size(), 1u);
    EXPECT_EQ(g.target[0], static_cast<double>(hexagons));
  }
  EXPECT_EQ(enumerate_induced_cycles(cycle_graph(6), 6).size(), 1u);
  EXPECT_TRUE(enumerate_induced_cycles(oracle::path_graph(7), 6).empty());
}

TEST(Synthetic, Deterministic) {
  SyntheticParams sp;
  sp.count = 15;
  EXPECT_EQ(dataset_to_jsonl(generate_synthetic(SyntheticFamily::RingCount, sp, 5)),
            dataset_to_jsonl(generate_synthetic(SyntheticFamily::RingCount, sp, 5)));
  EXPECT_NE(dataset_to_jsonl(generate_synthetic(SyntheticFamily::RingCount, sp, 5)),
            dataset_to_jsonl(generate_synthetic(SyntheticFamily::RingCount, sp, 6)));
}

TEST(Synthetic, FusedChainOfThree) {
  const Graph g = fused_chain(3);
  EXPECT_EQ(g.num_nodes, 14u);
  EXPECT_EQ(g.edges.size(), 16u);
  const auto cycles = oracle::induced_cycles_by_subsets(g, 6);
  ASSERT_EQ(cycles.size(), 3u);
  for (const Cycle& c : cycles) EXPECT_EQ(c.size(), 6u);
  EXPECT_EQ(enumerate_induced_cycles(g, 6), cycles);
  const CellComplex c = lift(g, 6);
  EXPECT_EQ(c.num_cells(2), 3u);
  EXPECT_TRUE(validate(c).ok());
}

TEST(Synthetic, Families) {
  SyntheticParams sp;
  sp.min_length = 3;
  sp.max_length = 5;
  const Dataset chains = generate_synthetic(SyntheticFamily::FusedChain, sp, 0);
  ASSERT_EQ(chains.graphs.size(), 3u);
  EXPECT_EQ(chains.graphs[0].target, (std::vector<double>{3.0}));
  const Dataset pairs = generate_synthetic(SyntheticFamily::CyclePair, sp, 0);
  ASSERT_EQ(pairs.graphs.size(), 6u);
  std::size_t positives = 0;
  for (const Graph& g : pairs.graphs) {
    positives += g.target[0] == 1.0;
    EXPECT_EQ(g.edges.size(), g.num_nodes);  // every vertex on exactly one cycle
  }
  EXPECT_EQ(positives, 3u);
  EXPECT_EQ(parse_family("cycle-pair"), SyntheticFamily::CyclePair);
  EXPECT_EQ(to_string(SyntheticFamily::RingCount), "ring-count");
}

TEST(Synthetic, BadParams) {
  SyntheticParams sp;
  sp.count = 0;
  EXPECT_EQ(error_of([&] { generate_synthetic(SyntheticFamily::RingCount, sp, 1); }).code(), ErrorCode::BadParams);
  sp = SyntheticParams{};
  sp.min_length = 5;
  sp.max_length = 4;
  EXPECT_EQ(error_of([&] { generate_synthetic(SyntheticFamily::FusedChain, sp, 1); }).code(), ErrorCode::BadParams);
  EXPECT_EQ(error_of([] { parse_family("petersen"); }).code(), ErrorCode::BadParams);
}

TEST(Samples, ParallelMatchesSequential) {
  SyntheticParams sp;
  sp.count = 30;
  const Dataset d = generate_synthetic(SyntheticFamily::RingCount, sp, 3);
  const auto a = prepare_samples(d, 6, RingInit::Sum, 1);
  const auto b = prepare_samples(d, 6, RingInit::Sum, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].complex == b[i].complex);
    EXPECT_TRUE(a[i].features == b[i].features);
    EXPECT_EQ(a[i].target, b[i].target);
  }
}

TEST(Configs, RoundTrip) {
  ModelConfig mc;
  mc.num_layers = 3;
  mc.hidden = 17;
  mc.input_dims = {4, 2, 2};
  mc.readout = ReadoutAgg::Mean;
  mc.dropout = 0.25;
  mc.use_lower = false;
  mc.ring_init = RingInit::Mean;
  mc.seed = 99;
  const ModelConfig back = model_config_from_json(Json::parse(to_json(mc).dump()));
  EXPECT_EQ(to_json(back), to_json(mc));
  TrainConfig tc;
  tc.lr = 4e-4;
  tc.weight_decay = 5e-5;
  tc.task = TaskType::Multilabel;
  const TrainConfig tb = train_config_from_json(Json::parse(to_json(tc).dump()));
  EXPECT_EQ(to_json(tb), to_json(tc));
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ModelConfig mc;
    mc.num_layers = 2;
    mc.hidden = 8;
    mc.out_dim = 3;
    mc.seed = 5;
    model = make_model(mc);
    Rng rng(6);
    for (Parameter* p : model.parameters())
      for (double& x : p->tensor.mutable_data()) x += rng.uniform(-0.1, 0.1);
    for (const NamedStats& s : model.norm_stats()) {
      for (double& x : s.stats->running_mean) x = rng.uniform(-1.0, 1.0);
      for (double& x : s.stats->running_var) x = rng.uniform(0.5, 2.0);
    }
    graph = oracle::random_graph(rng, 9, 0.35, true);
    complex = lift(graph, 6);
    features = featurize(graph, complex);
  }
  CinModel model;
  Graph graph;
  CellComplex complex;
  CochainFeatures features;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  TrainState state;
  state.epoch = 7;
  state.best_epoch = 3;
  state.best_val_metric = 0.125;
  state.scheduler = PlateauScheduler(5e-4, 20, 0.5, 1e-4);
  state.scheduler.step(2.0);
  state.scheduler.step(2.5);
  AdamState& adam = state.adam;
  adam.step = 11;
  for (Parameter* p : model.parameters()) {
    adam.m.emplace_back(p->tensor.numel(), 0.01);
    adam.v.emplace_back(p->tensor.numel(), 1.0 / 3.0);
  }
  const auto path = temp_path("model.ckpt");
  save_checkpoint(path, model, &state);
  Checkpoint ck = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(predict(ck.model, complex, features), predict(model, complex, features));
  EXPECT_EQ(to_json(ck.model.config), to_json(model.config));
  ASSERT_TRUE(ck.state.has_value());
  EXPECT_EQ(ck.state->epoch, 7u);
  EXPECT_EQ(ck.state->adam.step, 11u);
  EXPECT_EQ(ck.state->adam.m, adam.m);
  EXPECT_EQ(ck.state->adam.v, adam.v);
  EXPECT_EQ(ck.state->scheduler.lr(), 5e-4);
  EXPECT_EQ(ck.state->scheduler.best(), 2.0);
  EXPECT_EQ(ck.state->scheduler.bad_epochs(), 1u);
  EXPECT_EQ(ck.state->best_val_metric, 0.125);
}

TEST_F(CheckpointTest, FreshStateStoresInfinity) {
  TrainState state;
  const Checkpoint ck = checkpoint_from_bytes(checkpoint_bytes(model, &state));
  ASSERT_TRUE(ck.state.has_value());
  EXPECT_TRUE(std::isinf(ck.state->scheduler.best()));
  EXPECT_FALSE(checkpoint_from_bytes(checkpoint_bytes(model)).state.has_value());
}

TEST_F(CheckpointTest, TruncatedBlob) {
  const std::string bytes = checkpoint_bytes(model);
  EXPECT_EQ(error_of([&] { checkpoint_from_bytes(std::string_view(bytes).substr(0, bytes.size() - 8)); }).code(),
            ErrorCode::CorruptBlob);
}

TEST_F(CheckpointTest, FlippedBitInBlob) {
  std::string bytes = checkpoint_bytes(model);
  bytes[bytes.size() - 3] ^= 0x10;
  EXPECT_EQ(error_of([&] { checkpoint_from_bytes(bytes); }).code(), ErrorCode::CorruptBlob);
}

TEST_F(CheckpointTest, NewerMajorVersion) {
  std::string bytes = checkpoint_bytes(model);
  const std::uint32_t major = kCheckpointMajor + 1;
  for (int i = 0; i < 4; ++i) bytes[8 + i] = static_cast<char>((major >> (8 * i)) & 0xff);
  EXPECT_EQ(error_of([&] { checkpoint_from_bytes(bytes); }).code(), ErrorCode::VersionMismatch);
}

TEST_F(CheckpointTest, BadMagicAndMissingFile) {
  std::string bytes = checkpoint_bytes(model);
  bytes[0] = 'X';
  EXPECT_EQ(error_of([&] { checkpoint_from_bytes(bytes); }).code(), ErrorCode::CorruptBlob);
  EXPECT_EQ(error_of([] { load_checkpoint("/nonexistent/model.ckpt"); }).code(), ErrorCode::IO);
}

TEST(Hash, Fnv1a) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
