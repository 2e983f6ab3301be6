#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cinpp/rng.hpp"
#include "cinpp/tensor.hpp"

namespace cinpp {

struct Parameter {
  std::string name;  // slash-separated path, unique within a model
  Tensor tensor;
};

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

// Glorot-uniform weights, zero biases. Draws come from init_rng.split(name) so
// each parameter's values are independent of construction order.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, const Rng& init_rng, const std::string& name);

struct Linear {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, const std::string& name, const Rng& init_rng);
  std::size_t in_features() const { return weight.tensor.rows(); }
  std::size_t out_features() const { return weight.tensor.cols(); }
  Tensor operator()(const Tensor& x) const;
};

struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  BatchNormStats stats;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm() = default;
  BatchNorm(std::size_t width, const std::string& name, double eps, double momentum);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx);
};

// Linear, then optional batch norm, then optional ReLU.
struct DenseBlock {
  Linear linear;
  std::optional<BatchNorm> norm;
  bool activate = true;

  Tensor operator()(const Tensor& x, const ForwardContext& ctx);
};

struct Mlp {
  std::vector<DenseBlock> blocks;
  Tensor operator()(const Tensor& x, const ForwardContext& ctx);
};

struct NormOptions {
  bool enabled = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

DenseBlock make_dense(std::size_t in, std::size_t out, const std::string& name, const Rng& init_rng,
                      const NormOptions& norm, bool activate = true);
// `depth` dense blocks of width `width`, each Linear -> BN -> ReLU.
Mlp make_mlp(std::size_t in, std::size_t width, std::size_t depth, const std::string& name, const Rng& init_rng,
             const NormOptions& norm);

// Visitors used to enumerate parameters and normalisation buffers.
void collect(Linear& l, std::vector<Parameter*>& out);
void collect(BatchNorm& b, std::vector<Parameter*>& out);
void collect(DenseBlock& d, std::vector<Parameter*>& out);
void collect(Mlp& m, std::vector<Parameter*>& out);

struct NamedStats {
  std::string name;
  BatchNormStats* stats;
};
void collect_stats(DenseBlock& d, std::vector<NamedStats>& out);
void collect_stats(Mlp& m, std::vector<NamedStats>& out);

}  // namespace cinpp
