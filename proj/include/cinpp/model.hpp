#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cinpp/complex.hpp"
#include "cinpp/cwl.hpp"
#include "cinpp/features.hpp"
#include "cinpp/nn.hpp"

namespace cinpp {

enum class ReadoutAgg { Sum, Mean };

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t hidden = 64;
  std::array<std::size_t, kNumDims> input_dims{1, 1, 1};
  std::size_t out_dim = 1;
  ReadoutAgg readout = ReadoutAgg::Sum;
  double dropout = 0.0;   // applied to each layer's output while training
  bool use_lower = true;  // false ablates lower messages (the CIN scheme)
  bool batchnorm = true;  // inside message MLPs and the update block
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  RingInit ring_init = RingInit::Sum;
  std::uint64_t seed = 0;  // parameter initialisation
};

void validate_config(const ModelConfig& config);

// A message branch: (1 + eps) h_sigma + sum of (possibly transformed)
// neighbour messages, followed by a two-layer MLP.
struct MessageBranch {
  Parameter eps;                // learnable scalar, starts at 0
  std::optional<Linear> inner;  // upper/lower only: acts on h_tau || h_delta
  Mlp outer;
};

struct DimBlock {
  std::optional<MessageBranch> boundary;  // absent for vertices
  std::optional<MessageBranch> upper;     // absent for rings
  std::optional<MessageBranch> lower;     // absent for vertices or when ablated
  DenseBlock update;                      // [h || m_B || m_up || m_low] -> h'
};

struct CinLayer {
  std::array<DimBlock, kNumDims> dims;
};

struct CinModel {
  ModelConfig config;
  std::array<Linear, kNumDims> encoders;
  std::vector<CinLayer> layers;
  std::array<DenseBlock, kNumDims> readout_blocks;  // MLP_{R,V}, MLP_{R,E}, MLP_{R,R}
  Linear head;

  std::vector<Parameter*> parameters();
  std::vector<NamedStats> norm_stats();
  std::size_t num_scalars();
};

CinModel make_model(const ModelConfig& config);

// Disjoint union of complexes with flattened index lists. All indices are
// local to their dimension (row numbers of the per-dimension feature
// matrices). Incidences are ordered by target, then by the target's own
// neighbourhood order, which fixes the summation order.
struct ComplexBatch {
  std::size_t num_complexes = 0;
  std::array<std::size_t, kNumDims> num_cells{};
  std::array<std::vector<Index>, kNumDims> segment;  // owning complex per cell
  std::array<Matrix, kNumDims> inputs;

  struct Incidences {
    std::vector<Index> target;
    std::vector<Index> neighbor;
    std::vector<Index> witness;  // unused for boundary incidences
  };
  std::array<Incidences, kNumDims> boundary;  // neighbor in dim k-1
  std::array<Incidences, kNumDims> upper;     // neighbor in dim k, witness in dim k+1
  std::array<Incidences, kNumDims> lower;     // neighbor in dim k, witness in dim k-1

  std::vector<std::vector<double>> targets;
};

struct ComplexRef {
  const CellComplex* complex;
  const CochainFeatures* features;
  const std::vector<double>* target = nullptr;
};

ComplexBatch make_batch(std::span<const ComplexRef> items);

using CellFeatures = std::array<Tensor, kNumDims>;

CellFeatures embed(CinModel& model, const ComplexBatch& batch);
Tensor boundary_message(DimBlock& block, const ComplexBatch& batch, const CellFeatures& h, int k,
                        const ForwardContext& ctx);
Tensor upper_message(DimBlock& block, const ComplexBatch& batch, const CellFeatures& h, int k,
                     const ForwardContext& ctx);
Tensor lower_message(DimBlock& block, const ComplexBatch& batch, const CellFeatures& h, int k,
                     const ForwardContext& ctx);
CellFeatures update(CinLayer& layer, const ComplexBatch& batch, const CellFeatures& h, const ForwardContext& ctx);
// Per-complex predictions [num_complexes, out_dim].
Tensor readout(CinModel& model, const ComplexBatch& batch, const CellFeatures& h, const ForwardContext& ctx);

// Cell features after all layers (before readout).
CellFeatures forward_cells(CinModel& model, const ComplexBatch& batch, const ForwardContext& ctx);
Tensor forward(CinModel& model, const ComplexBatch& batch, const ForwardContext& ctx);

// Evaluation-mode prediction for one complex.
std::vector<double> predict(CinModel& model, const CellComplex& complex, const CochainFeatures& features);

// The same message-passing dataflow as the network, with every learned map
// replaced by exact interning of its inputs. Returns colorings for layers
// 0..num_layers (layer 0 = interned input features).
std::vector<Coloring> footprint_colorings(const CellComplex& complex, const CochainFeatures& features,
                                          std::size_t num_layers, bool use_lower);
Coloring footprint_coloring(const CellComplex& complex, const CochainFeatures& features, std::size_t layer,
                            bool use_lower);

struct MessageCounts {
  std::size_t boundary = 0;
  std::size_t upper = 0;
  std::size_t lower = 0;
};
MessageCounts count_messages(const CellComplex& complex);

}  // namespace cinpp
