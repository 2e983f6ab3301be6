#include <gtest/gtest.h>

#include <cmath>

#include "cinpp/cwl.hpp"
#include "cinpp/error.hpp"
#include "cinpp/gradcheck.hpp"
#include "cinpp/io.hpp"
#include "cinpp/model.hpp"
#include "oracles.hpp"

using namespace cinpp;

namespace {

struct Item {
  CellComplex complex;
  CochainFeatures features;
};

Item make_item(const Graph& g, std::size_t max_ring = 6) {
  Item it{lift(g, max_ring), {}};
  it.features = featurize(g, it.complex, RingInit::Sum);
  return it;
}

ComplexBatch batch_of(const std::vector<const Item*>& items) {
  std::vector<ComplexRef> refs;
  for (const Item* it : items) refs.push_back({&it->complex, &it->features});
  return make_batch(refs);
}

void set_identity(Linear& l, std::size_t blocks) {
  auto w = l.weight.tensor.mutable_data();
  const std::size_t d = l.out_features();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < d; ++i) w[(b * d + i) * d + i] = 1.0;
  auto bias = l.bias.tensor.mutable_data();
  std::fill(bias.begin(), bias.end(), 0.0);
}

// Message branches reduced to plain sums: outer MLP is the identity on
// non-negative inputs and the inner map adds its two halves.
CinModel stub_model(std::size_t d) {
  ModelConfig mc;
  mc.num_layers = 1;
  mc.hidden = d;
  mc.input_dims = {d, d, d};
  mc.batchnorm = false;
  CinModel m = make_model(mc);
  for (DimBlock& b : m.layers[0].dims) {
    for (auto* br : {&b.boundary, &b.upper, &b.lower}) {
      if (!*br) continue;
      for (DenseBlock& blk : (*br)->outer.blocks) set_identity(blk.linear, 1);
      if ((*br)->inner) set_identity(*(*br)->inner, 2);
    }
    set_identity(b.update.linear, 1);
  }
  return m;
}

CellFeatures constant_features(const CellComplex& c, std::size_t d, std::array<double, 3> value) {
  CellFeatures h;
  for (int k = 0; k < kNumDims; ++k) h[k] = Tensor::full({c.num_cells(k), d}, value[k]);
  return h;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ModelConfig small_config(std::uint64_t seed) {
  ModelConfig mc;
  mc.num_layers = 2;
  mc.hidden = 8;
  mc.out_dim = 2;
  mc.seed = seed;
  return mc;
}

void randomize(CinModel& m, Rng& rng) {
  for (Parameter* p : m.parameters())
    for (double& x : p->tensor.mutable_data()) x += rng.uniform(-0.1, 0.1);
  for (const NamedStats& s : m.norm_stats()) {
    for (double& x : s.stats->running_mean) x = rng.uniform(-0.3, 0.3);
    for (double& x : s.stats->running_var) x = rng.uniform(0.5, 1.5);
  }
}

}  // namespace

TEST(Messages, VerticesHaveNoBoundaryOrLower) {
  CinModel m = stub_model(2);
  const Item it = make_item(oracle::complete_graph(3));
  const ComplexBatch b = batch_of({&it});
  const CellFeatures h = constant_features(it.complex, 2, {1.0, 2.0, 3.0});
  for (double v : vec(boundary_message(m.layers[0].dims[0], b, h, 0, {}))) EXPECT_EQ(v, 0.0);
  for (double v : vec(lower_message(m.layers[0].dims[0], b, h, 0, {}))) EXPECT_EQ(v, 0.0);
  for (double v : vec(upper_message(m.layers[0].dims[2], b, h, 2, {}))) EXPECT_EQ(v, 0.0);
}

TEST(Messages, BoundaryOfSingleEdge) {
  CinModel m = stub_model(1);
  const Item it = make_item(oracle::path_graph(2));
  const ComplexBatch b = batch_of({&it});
  CellFeatures h;
  h[0] = Tensor::from({2, 1}, {2.0, 5.0});
  h[1] = Tensor::from({1, 1}, std::vector<double>{0.5});
  h[2] = Tensor::zeros({0, 1});
  EXPECT_EQ(vec(boundary_message(m.layers[0].dims[1], b, h, 1, {})), (std::vector<double>{7.5}));
}

TEST(Messages, BoundaryOfTriangleRing) {
  CinModel m = stub_model(2);
  const Item it = make_item(oracle::complete_graph(3), 3);
  const ComplexBatch b = batch_of({&it});
  const CellFeatures h = constant_features(it.complex, 2, {0.0, 1.25, 0.0});
  EXPECT_EQ(vec(boundary_message(m.layers[0].dims[2], b, h, 2, {})), (std::vector<double>{3.75, 3.75}));
}

TEST(Messages, UpperOfPathMiddleVertex) {
  CinModel m = stub_model(1);
  const Item it = make_item(oracle::path_graph(3));
  const ComplexBatch b = batch_of({&it});
  CellFeatures h;
  h[0] = Tensor::from({3, 1}, {1.0, 10.0, 100.0});
  h[1] = Tensor::from({2, 1}, {0.25, 0.5});
  h[2] = Tensor::zeros({0, 1});
  const auto up = vec(upper_message(m.layers[0].dims[0], b, h, 0, {}));
  // h_v + (h_a + h_e1) + (h_b + h_e2)
  EXPECT_DOUBLE_EQ(up[1], 10.0 + (1.0 + 0.25) + (100.0 + 0.5));
}

TEST(Messages, FusedTrianglesRingsGetOneLowerMessage) {
  CinModel m = stub_model(1);
  const Graph g = oracle::bowtie();
  const Item it = make_item(g);
  const ComplexBatch b = batch_of({&it});
  const std::size_t shared = oracle::edge_id(it.complex, g, 1, 2) - it.complex.offset(1);
  std::vector<double> edges(5, 0.0);
  edges[shared] = 4.0;
  CellFeatures h;
  h[0] = Tensor::zeros({4, 1});
  h[1] = Tensor::from({5, 1}, edges);
  h[2] = Tensor::from({2, 1}, {1.0, 2.0});
  // ring r: h_r + (h_other + h_shared)
  EXPECT_EQ(vec(lower_message(m.layers[0].dims[2], b, h, 2, {})), (std::vector<double>{1.0 + 2.0 + 4.0, 2.0 + 1.0 + 4.0}));
  EXPECT_EQ(b.lower[2].target.size(), 2u);
}

TEST(Update, IsolatedVertexUnchanged) {
  CinModel m = stub_model(3);
  const Item it = make_item(build_graph(1, std::vector<std::pair<std::int64_t, std::int64_t>>{}));
  const ComplexBatch b = batch_of({&it});
  CellFeatures h;
  h[0] = Tensor::from({1, 3}, {0.5, 1.5, 2.5});
  h[1] = Tensor::zeros({0, 3});
  h[2] = Tensor::zeros({0, 3});
  const CellFeatures out = update(m.layers[0], b, h, {});
  EXPECT_EQ(vec(out[0]), vec(h[0]));
}

TEST(Update, ShapesPreserved) {
  CinModel m = make_model(small_config(1));
  const Item it = make_item(fused_chain(2));
  const ComplexBatch b = batch_of({&it});
  const CellFeatures h0 = embed(m, b);
  const CellFeatures h1 = update(m.layers[0], b, h0, {});
  for (int k = 0; k < kNumDims; ++k) EXPECT_EQ(h1[k].shape(), (Shape{it.complex.num_cells(k), 8}));
}

TEST(MessageCounts, Examples) {
  EXPECT_EQ(count_messages(lift(oracle::complete_graph(3), 3)).boundary, 9u);
  const CellComplex hex = lift(cycle_graph(6), 6);
  std::size_t edge_upper = 0;
  for (CellId e = hex.offset(1); e < hex.offset(2); ++e) edge_upper += hex.upper_neighbors(e).size();
  EXPECT_EQ(edge_upper, 30u);
  EXPECT_EQ(count_messages(hex).upper, 30u + 12u);
  const Graph star = build_graph(5, std::vector<std::pair<std::int64_t, std::int64_t>>{{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  EXPECT_EQ(count_messages(lift(star, 6)).lower, 12u);
}

TEST(Readout, RingFreeGraphIgnoresRingMlpWeights) {
  Rng rng(31);
  CinModel m = make_model(small_config(2));
  randomize(m, rng);
  const Item tree = make_item(oracle::path_graph(5));
  const Item ring = make_item(cycle_graph(5));
  const auto before_tree = predict(m, tree.complex, tree.features);
  const auto before_ring = predict(m, ring.complex, ring.features);
  for (double& x : m.readout_blocks[2].linear.weight.tensor.mutable_data()) x += 0.5;
  EXPECT_EQ(predict(m, tree.complex, tree.features), before_tree);
  EXPECT_NE(predict(m, ring.complex, ring.features), before_ring);
}

TEST(Readout, MeanIsSumOverCount) {
  const Item it = make_item(fused_chain(2));
  const ComplexBatch b = batch_of({&it});
  ModelConfig mc = small_config(4);
  CinModel sum_model = make_model(mc);
  mc.readout = ReadoutAgg::Mean;
  CinModel mean_model = make_model(mc);
  CellFeatures rows, scaled;
  for (int k = 0; k < kNumDims; ++k) {
    const double n = static_cast<double>(it.complex.num_cells(k));
    rows[k] = Tensor::full({it.complex.num_cells(k), 8}, 0.3 * (k + 1));
    scaled[k] = Tensor::full({it.complex.num_cells(k), 8}, 0.3 * (k + 1) / n);
  }
  const auto a = vec(readout(mean_model, b, rows, {}));
  const auto s = vec(readout(sum_model, b, scaled, {}));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], s[i], 1e-12);
}

TEST(Readout, EmptyComplex) {
  CinModel m = make_model(small_config(1));
  const Item empty = make_item(build_graph(0, std::vector<std::pair<std::int64_t, std::int64_t>>{}));
  try {
    predict(m, empty.complex, empty.features);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyComplex);
  }
}

TEST(Forward, BatchOfOneMatchesPredict) {
  Rng rng(5);
  CinModel m = make_model(small_config(3));
  randomize(m, rng);
  const Item it = make_item(oracle::random_graph(rng, 8, 0.4, true));
  const auto p = predict(m, it.complex, it.features);
  NoGradGuard ng;
  EXPECT_EQ(vec(forward(m, batch_of({&it}), {})), p);
}

TEST(Forward, BatchOrderSwapsOutputs) {
  Rng rng(6);
  CinModel m = make_model(small_config(3));
  randomize(m, rng);
  const Item a = make_item(fused_chain(2));
  const Item b = make_item(oracle::random_graph(rng, 9, 0.35, true));
  NoGradGuard ng;
  const auto ab = vec(forward(m, batch_of({&a, &b}), {}));
  const auto ba = vec(forward(m, batch_of({&b, &a}), {}));
  ASSERT_EQ(ab.size(), 4u);
  // Product kernels depend on matrix sizes, so agreement is to rounding.
  auto near = [](double x, double y) { return std::fabs(x - y) <= 1e-12 * std::max(1.0, std::fabs(x)); };
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(near(ab[i], ba[2 + i])) << ab[i] << " " << ba[2 + i];
    EXPECT_TRUE(near(ab[2 + i], ba[i])) << ab[2 + i] << " " << ba[i];
  }
  const auto single = predict(m, a.complex, a.features);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(near(ab[i], single[i]));
}

TEST(Forward, BatchGradientIsSumOfParts) {
  Rng rng(7);
  CinModel m = make_model(small_config(8));
  randomize(m, rng);
  const Item a = make_item(oracle::bowtie());
  const Item b = make_item(cycle_graph(6));
  const auto params = m.parameters();
  auto grads = [&](const std::vector<const Item*>& items) {
    for (Parameter* p : params) p->tensor.zero_grad();
    sum(forward(m, batch_of(items), {})).backward();
    std::vector<double> g;
    for (Parameter* p : params) g.insert(g.end(), p->tensor.grad().begin(), p->tensor.grad().end());
    return g;
  };
  const auto both = grads({&a, &b});
  const auto ga = grads({&a});
  const auto gb = grads({&b});
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], ga[i] + gb[i], 1e-12);
}

TEST(Forward, EquivariantCellFeatures) {
  Rng rng(10);
  CinModel m = make_model(small_config(11));
  randomize(m, rng);
  for (int t = 0; t < 10; ++t) {
    const Item it = make_item(oracle::random_graph(rng, 7 + rng.below(4), 0.35, true));
    const oracle::Permuted p = oracle::permute_cells(it.complex, it.features, rng);
    const Item pi{p.complex, p.features};
    NoGradGuard ng;
    const CellFeatures h = forward_cells(m, batch_of({&it}), {});
    const CellFeatures hp = forward_cells(m, batch_of({&pi}), {});
    for (int k = 0; k < kNumDims; ++k) {
      const std::size_t n = it.complex.num_cells(k);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = p.map[it.complex.offset(k) + i] - it.complex.offset(k);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(h[k].at(i, c), hp[k].at(j, c), 1e-9);
      }
    }
    const auto y = predict(m, it.complex, it.features);
    const auto yp = predict(m, pi.complex, pi.features);
    for (std::size_t c = 0; c < y.size(); ++c) EXPECT_NEAR(y[c], yp[c], 1e-9);
  }
}

TEST(Forward, ZeroedLowerBranchMatchesCinModel) {
  Rng rng(12);
  ModelConfig mc = small_config(13);
  CinModel with = make_model(mc);
  mc.use_lower = false;
  CinModel without = make_model(mc);
  ASSERT_LT(without.num_scalars(), with.num_scalars());
  // Lower-branch contributions enter U through the last d rows of its weight.
  for (CinLayer& layer : with.layers) {
    for (int k = 1; k < kNumDims; ++k) {
      auto w = layer.dims[k].update.linear.weight.tensor.mutable_data();
      std::fill(w.end() - static_cast<std::ptrdiff_t>(8 * 8), w.end(), 0.0);
    }
  }
  for (int t = 0; t < 5; ++t) {
    const Item it = make_item(oracle::random_graph(rng, 8, 0.4, true));
    EXPECT_EQ(predict(with, it.complex, it.features), predict(without, it.complex, it.features));
  }
}

TEST(Forward, FeatureWidthMismatch) {
  CinModel m = make_model(small_config(1));
  Graph g = oracle::path_graph(3);
  g.node_features = Matrix(3, 4);
  const Item it = make_item(g);
  try {
    predict(m, it.complex, it.features);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FeatureShapeMismatch);
  }
}

TEST(Forward, GradientCheckOnFusedTriangles) {
  Rng rng(14);
  Graph g = oracle::with_random_features(oracle::bowtie(), rng, 2, 2);
  const Item it = make_item(g);
  ModelConfig mc = small_config(15);
  mc.input_dims = {2, 2, 2};
  CinModel m = make_model(mc);
  randomize(m, rng);
  const ComplexBatch b = batch_of({&it});
  Tensor y0;
  {
    NoGradGuard ng;
    y0 = forward(m, b, {});
  }
  const Tensor w = Tensor::from({1, 2}, {0.4, -0.9});
  auto loss = [&] {
    const Tensor d = add(sub(forward(m, b, {}), y0), w);
    return sum(mul(d, d));
  };
  const auto params = m.parameters();
  const GradCheckReport r = finite_difference_check(loss, params);
  EXPECT_TRUE(r.passed) << r.max_norm_rel_error;
  EXPECT_GT(r.checked, 1000u);
}

TEST(Forward, TrainingDropoutNeedsRng) {
  ModelConfig mc = small_config(1);
  mc.dropout = 0.2;
  CinModel m = make_model(mc);
  const Item it = make_item(cycle_graph(4));
  try {
    forward(m, batch_of({&it}), ForwardContext{true, nullptr});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadParams);
  }
}

TEST(Footprint, LayerZeroIsInitialColoring) {
  Rng rng(3);
  Graph g = oracle::random_graph(rng, 8, 0.4, true);
  Matrix x(8, 1);
  for (std::size_t i = 0; i < 8; ++i) x(i, 0) = static_cast<double>(rng.below(2));
  g.node_features = x;
  const Item it = make_item(g);
  const Coloring init = initial_coloring(it.complex, InitMode::FromFeatures, &it.features);
  EXPECT_TRUE(coloring_equivalent(footprint_coloring(it.complex, it.features, 0, true), init));
}

TEST(Footprint, MatchesCwlOnHexagonChains) {
  for (std::size_t n = 2; n <= 4; ++n) {
    const Item it = make_item(fused_chain(n));
    for (Scheme s : {Scheme::Cin, Scheme::CinPP}) {
      const Coloring init = initial_coloring(it.complex, InitMode::FromFeatures, &it.features);
      const auto cwl = refine_to_stable(it.complex, init, s, it.complex.size());
      const auto fp = footprint_colorings(it.complex, it.features, cwl.history.size() - 1, s == Scheme::CinPP);
      ASSERT_EQ(fp.size(), cwl.history.size());
      for (std::size_t l = 0; l < fp.size(); ++l) EXPECT_TRUE(coloring_equivalent(fp[l], cwl.history[l])) << n << " " << l;
    }
  }
}

TEST(Config, Validation) {
  ModelConfig mc;
  mc.num_layers = 0;
  EXPECT_THROW(make_model(mc), Error);
  mc = ModelConfig{};
  mc.dropout = 1.0;
  EXPECT_THROW(make_model(mc), Error);
}

TEST(Init, SameSeedSameParameters) {
  CinModel a = make_model(small_config(42));
  CinModel b = make_model(small_config(42));
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(vec(pa[i]->tensor), vec(pb[i]->tensor));
  }
  // Glorot bound.
  const Tensor& w = a.layers[0].dims[1].update.linear.weight.tensor;
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (double x : w.data()) EXPECT_LE(std::fabs(x), bound);
}
