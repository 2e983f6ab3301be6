#include <gtest/gtest.h>

#include "cinpp/cwl.hpp"
#include "cinpp/error.hpp"
#include "cinpp/io.hpp"
#include "oracles.hpp"

using namespace cinpp;

namespace {

Coloring uniform(const CellComplex& c) { return initial_coloring(c, InitMode::UniformPerDim); }

Coloring from_colors(std::vector<ColorId> v) { return Coloring{std::move(v)}; }

}  // namespace

TEST(InitialColoring, OneColorPerDimension) {
  EXPECT_EQ(uniform(lift(oracle::complete_graph(3), 3)).num_colors(), 3u);
  EXPECT_EQ(uniform(lift(oracle::path_graph(3), 6)).num_colors(), 2u);
}

TEST(InitialColoring, DistinctFeatureRowsGetDistinctColors) {
  Graph g = oracle::path_graph(4);
  Matrix x(4, 2);
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = static_cast<double>(i);
  g.node_features = x;
  const CellComplex c = lift(g, 6);
  const CochainFeatures f = featurize(g, c);
  const Coloring col = initial_coloring(c, InitMode::FromFeatures, &f);
  std::set<ColorId> vertex_colors(col.colors.begin(), col.colors.begin() + 4);
  EXPECT_EQ(vertex_colors.size(), 4u);
}

TEST(InitialColoring, MissingFeatures) {
  const CellComplex c = lift(oracle::path_graph(3), 6);
  try {
    initial_coloring(c, InitMode::FromFeatures, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFeatures);
  }
}

TEST(RefineStep, StableColoringIsFixedPoint) {
  const CellComplex c = lift(fused_chain(3), 6);
  for (Scheme s : {Scheme::Cin, Scheme::CinPP}) {
    const RefinementResult r = refine_to_stable(c, uniform(c), s, c.size() + 1);
    EXPECT_TRUE(coloring_equivalent(refine_step(c, r.coloring, s), r.coloring));
  }
}

TEST(RefineStep, HexagonVersusTwoTrianglesAfterOneStep) {
  const CellComplex a = lift(cycle_graph(6), 6);
  const CellComplex b = lift(disjoint_union(cycle_graph(3), cycle_graph(3)), 6);
  const UnionResult u = disjoint_union(a, b);
  const Coloring one = refine_step(u.complex, uniform(u.complex), Scheme::Cin);
  const ColorId hex = one.colors[u.from_a[a.offset(2)]];
  for (CellId r = b.offset(2); r < b.size(); ++r) EXPECT_NE(one.colors[u.from_b[r]], hex);
}

TEST(RefineStep, TriangleEdgesShareColor) {
  const CellComplex c = lift(oracle::complete_graph(3), 3);
  Coloring col = uniform(c);
  for (int t = 0; t < 4; ++t) {
    col = refine_step(c, col, Scheme::CinPP);
    EXPECT_EQ(col.colors[3], col.colors[4]);
    EXPECT_EQ(col.colors[4], col.colors[5]);
  }
}

TEST(RefineToStable, PathMiddleVertex) {
  const CellComplex c = lift(oracle::path_graph(3), 6);
  const RefinementResult r = refine_to_stable(c, uniform(c), Scheme::Cin, c.size());
  EXPECT_NE(r.coloring.colors[1], r.coloring.colors[0]);
  EXPECT_EQ(r.coloring.colors[0], r.coloring.colors[2]);
}

TEST(RefineToStable, ThreeHexagonChainConvergesFasterWithLower) {
  const CellComplex c = lift(fused_chain(3), 6);
  const auto cin = refine_to_stable(c, uniform(c), Scheme::Cin, c.size());
  const auto pp = refine_to_stable(c, uniform(c), Scheme::CinPP, c.size());
  EXPECT_LT(pp.stabilized_at[2], cin.stabilized_at[2]);
}

TEST(RefineToStable, IterationsBoundedByCells) {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    const CellComplex c = lift(oracle::random_graph(rng, 3 + rng.below(8), 0.4), 6);
    for (Scheme s : {Scheme::Cin, Scheme::CinPP}) {
      const auto r = refine_to_stable(c, uniform(c), s, c.size() + 1);
      EXPECT_LE(r.iterations, c.size());
      EXPECT_EQ(r.history.size(), r.iterations + 1);
    }
  }
}

TEST(Distinguishable, HexagonVersusTwoTriangles) {
  const Graph hex = cycle_graph(6);
  const Graph tri2 = disjoint_union(cycle_graph(3), cycle_graph(3));
  EXPECT_FALSE(oracle::wl1_distinguishes(hex, tri2));
  const CellComplex a = lift(hex, 6), b = lift(tri2, 6);
  EXPECT_TRUE(distinguishable(a, b, Scheme::Cin));
  EXPECT_TRUE(distinguishable(a, b, Scheme::CinPP));
}

TEST(Distinguishable, RelabeledCopyIsNot) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Graph g = oracle::random_graph(rng, 7, 0.4);
    const Graph h = relabel_nodes(g, oracle::random_permutation(rng, g.num_nodes));
    EXPECT_FALSE(distinguishable(lift(g, 6), lift(h, 6), Scheme::CinPP));
  }
}

TEST(Distinguishable, RingBound) {
  EXPECT_TRUE(distinguishable(lift(cycle_graph(6), 6), lift(cycle_graph(6), 5), Scheme::Cin));
}

TEST(Refines, Basics) {
  const Coloring id = from_colors({0, 1, 2, 3});
  const Coloring any = from_colors({5, 5, 2, 5});
  const Coloring constant = from_colors({0, 0, 0, 0});
  EXPECT_TRUE(refines(id, any));
  EXPECT_FALSE(refines(constant, id));
  EXPECT_TRUE(refines(any, any));
  EXPECT_TRUE(coloring_equivalent(any, from_colors({1, 1, 0, 1})));
  EXPECT_FALSE(coloring_equivalent(id, any));
}

TEST(Refines, DomainMismatch) {
  try {
    refines(from_colors({0, 1}), from_colors({0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DomainMismatch);
  }
}

TEST(Interner, Injective) {
  SignatureInterner in;
  const ColorId a = in.intern({1, 2, 3});
  const ColorId b = in.intern({1, 2});
  EXPECT_NE(a, b);
  EXPECT_EQ(in.intern({1, 2, 3}), a);
  EXPECT_EQ(in.size(), 2u);
}
