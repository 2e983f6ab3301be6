#include "cinpp/model.hpp"

#include <algorithm>
#include <bit>
#include <unordered_map>

#include "cinpp/error.hpp"

namespace cinpp {

void validate_config(const ModelConfig& c) {
  if (c.num_layers < 1) throw Error(ErrorCode::BadParams, "model needs at least one layer");
  if (c.hidden < 1) throw Error(ErrorCode::BadParams, "hidden width must be positive");
  if (c.out_dim < 1) throw Error(ErrorCode::BadParams, "output width must be positive");
  for (std::size_t d : c.input_dims) {
    if (d < 1) throw Error(ErrorCode::BadParams, "input widths must be positive");
  }
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw Error(ErrorCode::BadParams, "dropout must be in [0, 1)");
  if (c.bn_eps <= 0.0) throw Error(ErrorCode::BadParams, "batch norm epsilon must be positive");
}

namespace {

std::string dim_name(int k) { return "dim" + std::to_string(k); }

MessageBranch make_branch(const std::string& name, std::size_t width, bool with_inner, const Rng& init,
                          const NormOptions& norm) {
  MessageBranch b;
  b.eps = {name + "/eps", Tensor::scalar(0.0, true)};
  if (with_inner) b.inner = Linear(2 * width, width, name + "/inner", init);
  b.outer = make_mlp(width, width, 2, name + "/mlp", init, norm);
  return b;
}

void collect_branch(std::optional<MessageBranch>& b, std::vector<Parameter*>& out) {
  if (!b) return;
  out.push_back(&b->eps);
  if (b->inner) collect(*b->inner, out);
  collect(b->outer, out);
}

}  // namespace

CinModel make_model(const ModelConfig& config) {
  validate_config(config);
  const Rng init = Rng(config.seed).split("init");
  const NormOptions norm{config.batchnorm, config.bn_eps, config.bn_momentum};
  const std::size_t d = config.hidden;

  CinModel m;
  m.config = config;
  for (int k = 0; k < kNumDims; ++k) {
    m.encoders[k] = Linear(config.input_dims[k], d, "encoder/" + dim_name(k), init);
  }
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    CinLayer layer;
    for (int k = 0; k < kNumDims; ++k) {
      const std::string prefix = "layer" + std::to_string(l) + "/" + dim_name(k);
      DimBlock& block = layer.dims[k];
      if (k >= 1) block.boundary = make_branch(prefix + "/boundary", d, false, init, norm);
      if (k <= 1) block.upper = make_branch(prefix + "/upper", d, true, init, norm);
      if (k >= 1 && config.use_lower) block.lower = make_branch(prefix + "/lower", d, true, init, norm);
      block.update = make_dense(4 * d, d, prefix + "/update", init, norm);
    }
    m.layers.push_back(std::move(layer));
  }
  for (int k = 0; k < kNumDims; ++k) {
    m.readout_blocks[k] = make_dense(d, d, "readout/" + dim_name(k), init, NormOptions{false});
  }
  m.head = Linear(d, config.out_dim, "head", init);
  return m;
}

std::vector<Parameter*> CinModel::parameters() {
  std::vector<Parameter*> out;
  for (Linear& e : encoders) collect(e, out);
  for (CinLayer& layer : layers) {
    for (DimBlock& block : layer.dims) {
      collect_branch(block.boundary, out);
      collect_branch(block.upper, out);
      collect_branch(block.lower, out);
      collect(block.update, out);
    }
  }
  for (DenseBlock& r : readout_blocks) collect(r, out);
  collect(head, out);
  return out;
}

std::vector<NamedStats> CinModel::norm_stats() {
  std::vector<NamedStats> out;
  for (CinLayer& layer : layers) {
    for (DimBlock& block : layer.dims) {
      for (auto* b : {&block.boundary, &block.upper, &block.lower}) {
        if (*b) collect_stats((*b)->outer, out);
      }
      collect_stats(block.update, out);
    }
  }
  for (DenseBlock& r : readout_blocks) collect_stats(r, out);
  return out;
}

std::size_t CinModel::num_scalars() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------

ComplexBatch make_batch(std::span<const ComplexRef> items) {
  ComplexBatch b;
  b.num_complexes = items.size();
  std::array<std::size_t, kNumDims> width{};
  for (std::size_t c = 0; c < items.size(); ++c) {
    const CellComplex& cx = *items[c].complex;
    const CochainFeatures& f = *items[c].features;
    check_features(cx, f);
    for (int k = 0; k < kNumDims; ++k) {
      if (c == 0) {
        width[k] = f[k].cols;
      } else if (f[k].cols != width[k]) {
        throw Error(ErrorCode::FeatureShapeMismatch, "feature widths differ within a batch");
      }
    }
  }
  for (int k = 0; k < kNumDims; ++k) b.inputs[k] = Matrix(0, width[k]);

  for (std::size_t c = 0; c < items.size(); ++c) {
    const CellComplex& cx = *items[c].complex;
    const CochainFeatures& f = *items[c].features;
    const std::array<std::size_t, kNumDims> base = b.num_cells;
    auto local = [&](int k, CellId id) { return static_cast<Index>(base[k] + (id - cx.offset(k))); };

    for (int k = 0; k < kNumDims; ++k) {
      const std::size_t n = cx.num_cells(k);
      b.segment[k].insert(b.segment[k].end(), n, static_cast<Index>(c));
      b.inputs[k].data.insert(b.inputs[k].data.end(), f[k].data.begin(), f[k].data.end());
      b.inputs[k].rows += n;
      for (std::size_t i = 0; i < n; ++i) {
        const CellId id = cx.offset(k) + static_cast<CellId>(i);
        const Index target = local(k, id);
        if (k >= 1) {
          for (CellId t : cx.boundary(id)) {
            b.boundary[k].target.push_back(target);
            b.boundary[k].neighbor.push_back(local(k - 1, t));
          }
          for (const Incidence& inc : cx.lower_neighbors(id)) {
            b.lower[k].target.push_back(target);
            b.lower[k].neighbor.push_back(local(k, inc.cell));
            b.lower[k].witness.push_back(local(k - 1, inc.witness));
          }
        }
        if (k <= 1) {
          for (const Incidence& inc : cx.upper_neighbors(id)) {
            b.upper[k].target.push_back(target);
            b.upper[k].neighbor.push_back(local(k, inc.cell));
            b.upper[k].witness.push_back(local(k + 1, inc.witness));
          }
        }
      }
      b.num_cells[k] += n;
    }
    b.targets.push_back(items[c].target ? *items[c].target : std::vector<double>{});
  }
  return b;
}

CellFeatures embed(CinModel& model, const ComplexBatch& batch) {
  CellFeatures h;
  for (int k = 0; k < kNumDims; ++k) {
    if (batch.inputs[k].cols != model.config.input_dims[k]) {
      throw Error(ErrorCode::FeatureShapeMismatch,
                  "dimension " + std::to_string(k) + " inputs have width " + std::to_string(batch.inputs[k].cols) +
                      ", model expects " + std::to_string(model.config.input_dims[k]));
    }
    h[k] = model.encoders[k](Tensor::from(batch.inputs[k]));
  }
  return h;
}

namespace {

Tensor zeros_like_rows(const Tensor& h) { return Tensor::zeros({h.rows(), h.cols()}); }

// (1 + eps) h + aggregated, through the branch MLP.
Tensor finish_branch(MessageBranch& branch, const Tensor& h, const Tensor& aggregated, const ForwardContext& ctx) {
  const Tensor x = add(add(h, scale(h, branch.eps.tensor)), aggregated);
  return branch.outer(x, ctx);
}

// Sum over incidences of relu(W [h_tau || h_delta] + b), computed as
// relu(gather(h W_tau) + gather(h_delta W_delta) + b).
Tensor neighbour_messages(const Linear& inner, const Tensor& h_same, const Tensor& h_witness,
                          const ComplexBatch::Incidences& inc, std::size_t num_targets) {
  const std::size_t d = h_same.cols();
  const Tensor w_tau = slice_rows(inner.weight.tensor, 0, d);
  const Tensor w_delta = slice_rows(inner.weight.tensor, d, 2 * d);
  const Tensor from_tau = gather_rows(matmul(h_same, w_tau), inc.neighbor);
  const Tensor from_delta = gather_rows(matmul(h_witness, w_delta), inc.witness);
  const Tensor msg = relu(add_bias(add(from_tau, from_delta), inner.bias.tensor));
  return scatter_sum(msg, inc.target, num_targets);
}

}  // namespace

Tensor boundary_message(DimBlock& block, const ComplexBatch& batch, const CellFeatures& h, int k,
                        const ForwardContext& ctx) {
  if (k == 0 || !block.boundary) return zeros_like_rows(h[k]);
  const auto& inc = batch.boundary[k];
  const Tensor agg = scatter_sum(gather_rows(h[k - 1], inc.neighbor), inc.target, h[k].rows());
  return finish_branch(*block.boundary, h[k], agg, ctx);
}

Tensor upper_message(DimBlock& block, const ComplexBatch& batch, const CellFeatures& h, int k,
                     const ForwardContext& ctx) {
  if (k == kMaxDim || !block.upper) return zeros_like_rows(h[k]);
  const Tensor agg = neighbour_messages(*block.upper->inner, h[k], h[k + 1], batch.upper[k], h[k].rows());
  return finish_branch(*block.upper, h[k], agg, ctx);
}

Tensor lower_message(DimBlock& block, const ComplexBatch& batch, const CellFeatures& h, int k,
                     const ForwardContext& ctx) {
  if (k == 0 || !block.lower) return zeros_like_rows(h[k]);
  const Tensor agg = neighbour_messages(*block.lower->inner, h[k], h[k - 1], batch.lower[k], h[k].rows());
  return finish_branch(*block.lower, h[k], agg, ctx);
}

CellFeatures update(CinLayer& layer, const ComplexBatch& batch, const CellFeatures& h, const ForwardContext& ctx) {
  CellFeatures out;
  for (int k = 0; k < kNumDims; ++k) {
    DimBlock& block = layer.dims[k];
    // U acts on [h || m_B || m_up || m_low]. Absent branches are zero blocks,
    // so their slices of W are skipped instead of multiplied by zeros.
    const Tensor& w = block.update.linear.weight.tensor;
    const std::size_t d = h[k].cols();
    Tensor y = matmul(h[k], slice_rows(w, 0, d));
    const bool present[] = {k >= 1 && block.boundary, k <= 1 && block.upper, k >= 1 && block.lower};
    for (std::size_t b = 0; b < 3; ++b) {
      if (!present[b]) continue;
      const Tensor m = b == 0   ? boundary_message(block, batch, h, k, ctx)
                       : b == 1 ? upper_message(block, batch, h, k, ctx)
                                : lower_message(block, batch, h, k, ctx);
      y = add(y, matmul(m, slice_rows(w, (b + 1) * d, (b + 2) * d)));
    }
    y = add_bias(y, block.update.linear.bias.tensor);
    if (block.update.norm) y = (*block.update.norm)(y, ctx);
    out[k] = block.update.activate ? relu(y) : y;
  }
  return out;
}

Tensor readout(CinModel& model, const ComplexBatch& batch, const CellFeatures& h, const ForwardContext& ctx) {
  if (batch.num_complexes == 0) throw Error(ErrorCode::EmptyComplex, "readout of an empty batch");
  std::vector<std::size_t> vertices(batch.num_complexes, 0);
  for (Index s : batch.segment[0]) ++vertices[s];
  for (std::size_t c = 0; c < batch.num_complexes; ++c) {
    if (vertices[c] == 0) throw Error(ErrorCode::EmptyComplex, "complex " + std::to_string(c) + " has no cells");
  }
  Tensor pooled_sum;
  for (int k = 0; k < kNumDims; ++k) {
    Tensor pooled = scatter_sum(h[k], batch.segment[k], batch.num_complexes);
    if (model.config.readout == ReadoutAgg::Mean) {
      std::vector<double> inv(batch.num_complexes, 0.0);
      for (Index s : batch.segment[k]) inv[s] += 1.0;
      for (double& x : inv) x = x > 0.0 ? 1.0 / x : 0.0;
      pooled = scale_rows(pooled, inv);
    }
    const Tensor r = model.readout_blocks[k](pooled, ctx);
    pooled_sum = k == 0 ? r : add(pooled_sum, r);
  }
  return model.head(pooled_sum);
}

CellFeatures forward_cells(CinModel& model, const ComplexBatch& batch, const ForwardContext& ctx) {
  CellFeatures h = embed(model, batch);
  const bool drop = ctx.training && model.config.dropout > 0.0;
  if (drop && ctx.rng == nullptr) throw Error(ErrorCode::BadParams, "dropout in training mode needs an rng");
  for (CinLayer& layer : model.layers) {
    h = update(layer, batch, h, ctx);
    if (drop) {
      for (Tensor& t : h) t = dropout(t, model.config.dropout, true, *ctx.rng);
    }
  }
  return h;
}

Tensor forward(CinModel& model, const ComplexBatch& batch, const ForwardContext& ctx) {
  return readout(model, batch, forward_cells(model, batch, ctx), ctx);
}

std::vector<double> predict(CinModel& model, const CellComplex& complex, const CochainFeatures& features) {
  NoGradGuard no_grad;
  const ComplexRef ref{&complex, &features};
  const ComplexBatch batch = make_batch(std::span(&ref, 1));
  const Tensor out = forward(model, batch, ForwardContext{});
  return {out.data().begin(), out.data().end()};
}

// ---------------------------------------------------------------------------

namespace {

enum Role : std::uint64_t { kInput = 1, kBoundary, kUpperMsg, kUpper, kLowerMsg, kLower, kUpdate };
constexpr std::uint64_t kAbsent = ~std::uint64_t{0};

Coloring densify(const std::vector<std::uint64_t>& ids) {
  std::unordered_map<std::uint64_t, ColorId> remap;
  Coloring c;
  c.colors.reserve(ids.size());
  for (std::uint64_t id : ids) {
    c.colors.push_back(remap.try_emplace(id, static_cast<ColorId>(remap.size())).first->second);
  }
  return c;
}

}  // namespace

std::vector<Coloring> footprint_colorings(const CellComplex& complex, const CochainFeatures& features,
                                          std::size_t num_layers, bool use_lower) {
  check_features(complex, features);
  SignatureInterner interner;
  std::vector<std::uint64_t> h(complex.size());
  for (int k = 0; k < kNumDims; ++k) {
    const Matrix& m = features[k];
    for (std::size_t i = 0; i < m.rows; ++i) {
      std::vector<std::uint64_t> sig{kInput, static_cast<std::uint64_t>(k), m.cols};
      for (double x : m.row(i)) sig.push_back(std::bit_cast<std::uint64_t>(x == 0.0 ? 0.0 : x));
      h[complex.offset(k) + i] = interner.intern(sig);
    }
  }
  std::vector<Coloring> out{densify(h)};

  std::vector<std::uint64_t> items;
  auto multiset = [&](std::vector<std::uint64_t> sig) {
    std::sort(items.begin(), items.end());
    sig.push_back(items.size());
    sig.insert(sig.end(), items.begin(), items.end());
    items.clear();
    return static_cast<std::uint64_t>(interner.intern(sig));
  };

  for (std::size_t l = 0; l < num_layers; ++l) {
    std::vector<std::uint64_t> next(complex.size());
    for (const Cell& cell : complex.cells()) {
      const CellId id = cell.id;
      const std::uint64_t k = static_cast<std::uint64_t>(cell.dim);
      const std::uint64_t self = h[id];

      std::uint64_t m_b = kAbsent;
      if (cell.dim >= 1) {
        for (CellId t : complex.boundary(id)) items.push_back(h[t]);
        m_b = multiset({kBoundary, l, k, self});
      }
      std::uint64_t m_up = kAbsent;
      if (cell.dim <= 1) {
        for (const Incidence& inc : complex.upper_neighbors(id)) {
          items.push_back(interner.intern({kUpperMsg, l, k, h[inc.cell], h[inc.witness]}));
        }
        m_up = multiset({kUpper, l, k, self});
      }
      std::uint64_t m_low = kAbsent;
      if (cell.dim >= 1 && use_lower) {
        for (const Incidence& inc : complex.lower_neighbors(id)) {
          items.push_back(interner.intern({kLowerMsg, l, k, h[inc.cell], h[inc.witness]}));
        }
        m_low = multiset({kLower, l, k, self});
      }
      next[id] = interner.intern({kUpdate, l, k, self, m_b, m_up, m_low});
    }
    h = std::move(next);
    out.push_back(densify(h));
  }
  return out;
}

Coloring footprint_coloring(const CellComplex& complex, const CochainFeatures& features, std::size_t layer,
                            bool use_lower) {
  return footprint_colorings(complex, features, layer, use_lower).back();
}

MessageCounts count_messages(const CellComplex& complex) {
  MessageCounts c;
  for (const Cell& cell : complex.cells()) {
    c.boundary += complex.boundary(cell.id).size();
    c.upper += complex.upper_neighbors(cell.id).size();
    c.lower += complex.lower_neighbors(cell.id).size();
  }
  return c;
}

}  // namespace cinpp
