#include "cinpp/features.hpp"

#include <cmath>

#include "cinpp/error.hpp"

namespace cinpp {

CochainFeatures featurize(const Graph& graph, const CellComplex& complex, RingInit ring_init) {
  if (complex.num_cells(0) != graph.num_nodes || complex.num_cells(1) != graph.edges.size()) {
    throw Error(ErrorCode::FeatureShapeMismatch, "complex was not lifted from this graph");
  }
  CochainFeatures f;
  f[0] = graph.node_features ? *graph.node_features : Matrix(graph.num_nodes, 1, 1.0);
  f[1] = graph.edge_features ? *graph.edge_features : Matrix(graph.edges.size(), 1, 0.0);

  const std::size_t width = f[1].cols;
  const CellId edge0 = complex.offset(1);
  const CellId ring0 = complex.offset(2);
  f[2] = Matrix(complex.num_cells(2), width, 0.0);
  if (ring_init == RingInit::Zeros) return f;
  for (std::size_t r = 0; r < complex.num_cells(2); ++r) {
    const auto edges = complex.boundary(ring0 + static_cast<CellId>(r));
    auto out = f[2].row(r);
    for (CellId e : edges) {
      const auto in = f[1].row(e - edge0);
      for (std::size_t j = 0; j < width; ++j) out[j] += in[j];
    }
    if (ring_init == RingInit::Mean && !edges.empty()) {
      for (double& x : out) x /= static_cast<double>(edges.size());
    }
  }
  return f;
}

void check_features(const CellComplex& complex, const CochainFeatures& features) {
  for (int k = 0; k < kNumDims; ++k) {
    if (features[k].rows != complex.num_cells(k)) {
      throw Error(ErrorCode::FeatureShapeMismatch,
                  "dimension " + std::to_string(k) + " has " + std::to_string(features[k].rows) +
                      " feature rows for " + std::to_string(complex.num_cells(k)) + " cells");
    }
    if (features[k].data.size() != features[k].rows * features[k].cols) {
      throw Error(ErrorCode::FeatureShapeMismatch, "feature matrix storage does not match its shape");
    }
    for (double x : features[k].data) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::NonFinite, "non-finite feature at dimension " + std::to_string(k));
      }
    }
  }
}

}  // namespace cinpp
