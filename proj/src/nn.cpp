#include "cinpp/nn.hpp"

#include <cmath>

namespace cinpp {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, const Rng& init_rng, const std::string& name) {
  Rng rng = init_rng.split(name);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& x : w) x = rng.uniform(-limit, limit);
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

Linear::Linear(std::size_t in, std::size_t out, const std::string& name, const Rng& init_rng)
    : weight{name + "/weight", glorot_uniform(in, out, init_rng, name + "/weight")},
      bias{name + "/bias", Tensor::zeros({out}, true)} {}

Tensor Linear::operator()(const Tensor& x) const { return add_bias(matmul(x, weight.tensor), bias.tensor); }

BatchNorm::BatchNorm(std::size_t width, const std::string& name, double eps_, double momentum_)
    : gamma{name + "/gamma", Tensor::full({width}, 1.0, true)},
      beta{name + "/beta", Tensor::zeros({width}, true)},
      stats{std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)},
      eps(eps_),
      momentum(momentum_) {}

Tensor BatchNorm::operator()(const Tensor& x, const ForwardContext& ctx) {
  return batchnorm(x, gamma.tensor, beta.tensor, stats, ctx.training, eps, momentum);
}

Tensor DenseBlock::operator()(const Tensor& x, const ForwardContext& ctx) {
  Tensor y = linear(x);
  if (norm) y = (*norm)(y, ctx);
  return activate ? relu(y) : y;
}

Tensor Mlp::operator()(const Tensor& x, const ForwardContext& ctx) {
  Tensor y = x;
  for (DenseBlock& b : blocks) y = b(y, ctx);
  return y;
}

DenseBlock make_dense(std::size_t in, std::size_t out, const std::string& name, const Rng& init_rng,
                      const NormOptions& norm, bool activate) {
  DenseBlock d;
  d.linear = Linear(in, out, name + "/linear", init_rng);
  if (norm.enabled) d.norm = BatchNorm(out, name + "/bn", norm.eps, norm.momentum);
  d.activate = activate;
  return d;
}

Mlp make_mlp(std::size_t in, std::size_t width, std::size_t depth, const std::string& name, const Rng& init_rng,
             const NormOptions& norm) {
  Mlp m;
  for (std::size_t i = 0; i < depth; ++i) {
    m.blocks.push_back(make_dense(i == 0 ? in : width, width, name + "/" + std::to_string(i), init_rng, norm));
  }
  return m;
}

void collect(Linear& l, std::vector<Parameter*>& out) {
  out.push_back(&l.weight);
  out.push_back(&l.bias);
}

void collect(BatchNorm& b, std::vector<Parameter*>& out) {
  out.push_back(&b.gamma);
  out.push_back(&b.beta);
}

void collect(DenseBlock& d, std::vector<Parameter*>& out) {
  collect(d.linear, out);
  if (d.norm) collect(*d.norm, out);
}

void collect(Mlp& m, std::vector<Parameter*>& out) {
  for (DenseBlock& b : m.blocks) collect(b, out);
}

void collect_stats(DenseBlock& d, std::vector<NamedStats>& out) {
  if (d.norm) {
    // gamma is named "<block>/bn/gamma"; strip the leaf.
    const std::string& g = d.norm->gamma.name;
    out.push_back({g.substr(0, g.rfind('/')), &d.norm->stats});
  }
}

void collect_stats(Mlp& m, std::vector<NamedStats>& out) {
  for (DenseBlock& b : m.blocks) collect_stats(b, out);
}

}  // namespace cinpp
