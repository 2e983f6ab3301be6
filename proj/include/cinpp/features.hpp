#pragma once

#include <array>

#include "cinpp/complex.hpp"
#include "cinpp/matrix.hpp"

namespace cinpp {

// Per-dimension cell signals: row i of by_dim[k] belongs to cell offset(k) + i.
struct CochainFeatures {
  std::array<Matrix, kNumDims> by_dim;

  const Matrix& operator[](int k) const { return by_dim[k]; }
  Matrix& operator[](int k) { return by_dim[k]; }
  friend bool operator==(const CochainFeatures&, const CochainFeatures&) = default;
};

enum class RingInit { Zeros, Sum, Mean };

// Vertices take the node features (a constant 1 column when the graph has
// none); edges take the edge features (a zero column when absent); rings are
// initialised from their boundary edges according to `ring_init`.
CochainFeatures featurize(const Graph& graph, const CellComplex& complex, RingInit ring_init = RingInit::Sum);

// Throws FeatureShapeMismatch or NonFinite when the features do not fit the complex.
void check_features(const CellComplex& complex, const CochainFeatures& features);

}  // namespace cinpp
