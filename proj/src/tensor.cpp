#include "cinpp/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "cinpp/error.hpp"

namespace cinpp {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

thread_local bool g_grad_enabled = true;

std::vector<double>& grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void check_finite(const std::vector<double>& values, const char* op) {
  // x * 0 is NaN exactly for inf and NaN; the reduction vectorizes.
  const double probe = Eigen::Map<const Eigen::ArrayXd>(values.data(), static_cast<Eigen::Index>(values.size()))
                           .unaryExpr([](double x) { return x * 0.0; })
                           .sum();
  if (probe != 0.0) throw Error(ErrorCode::NonFinite, std::string("non-finite value produced by ") + op);
}

const NodePtr& node_of(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": undefined tensor");
  return TensorAccess::node(t);
}

void require_rank2(const Tensor& t, const char* op) {
  if (node_of(t, op)->shape.size() != 2) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
  }
}

// Builds the output node; the backward rule is kept only when some input
// needs a gradient and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward, const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(n));
}

ConstMap as_matrix(const Node& n) {
  return ConstMap(n.value.data(), static_cast<Eigen::Index>(n.shape[0]), static_cast<Eigen::Index>(n.shape[1]));
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (node_of(a, op)->shape != node_of(b, op)->shape) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                                              shape_string(b.shape()));
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (cinpp::numel(shape) != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(values.size()) +
                                              " does not match shape " + shape_string(shape));
  }
  check_finite(values, "tensor construction");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t count = cinpp::numel(shape);
  return from(std::move(shape), std::vector<double>(count, value), requires_grad);
}

Tensor Tensor::from(const Matrix& m, bool requires_grad) { return from({m.rows, m.cols}, m.data, requires_grad); }

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_of(*this, "shape")->shape; }
std::size_t Tensor::numel() const { return node_of(*this, "numel")->value.size(); }

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return node_->shape[1];
}

std::span<const double> Tensor::data() const { return node_of(*this, "data")->value; }
std::span<double> Tensor::mutable_data() { return node_of(*this, "data")->value; }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

Matrix Tensor::to_matrix() const {
  Matrix m;
  m.rows = rows();
  m.cols = cols();
  m.data = node_->value;
  return m;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return grad_of(*node_of(*this, "grad")); }
std::span<double> Tensor::mutable_grad() { return grad_of(*node_of(*this, "grad")); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from(shape(), node_of(*this, "detach")->value, false); }

void Tensor::backward() const {
  const NodePtr& root = node_of(*this, "backward");
  if (root->value.size() != 1) {
    throw Error(ErrorCode::NotScalar, "backward() needs a scalar loss, got shape " + shape_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  std::unordered_set<const Node*> visited{root.get()};
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  grad_of(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw Error(ErrorCode::ShapeMismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  if (n && m && k) {
    MutMap(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)).noalias() =
        as_matrix(*node_of(a, "matmul")) * as_matrix(*node_of(b, "matmul"));
  }
  return make_result(
      {n, m}, std::move(out), {node_of(a, "matmul"), node_of(b, "matmul")},
      [n, k, m](Node& self) {
        if (n == 0 || m == 0 || k == 0) return;
        ConstMap dy(self.grad.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          MutMap(grad_of(pa).data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)).noalias() +=
              dy * as_matrix(pb).transpose();
        }
        if (pb.requires_grad) {
          MutMap(grad_of(pb).data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)).noalias() +=
              as_matrix(pa).transpose() * dy;
        }
      },
      "matmul");
}

namespace {

Tensor linear_combine(const Tensor& a, const Tensor& b, double sb, const char* op) {
  same_shape(a, b, op);
  const auto& va = node_of(a, op)->value;
  const auto& vb = node_of(b, op)->value;
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + sb * vb[i];
  return make_result(
      a.shape(), std::move(out), {node_of(a, op), node_of(b, op)},
      [sb](Node& self) {
        for (int p = 0; p < 2; ++p) {
          Node& parent = *self.parents[p];
          if (!parent.requires_grad) continue;
          auto& g = grad_of(parent);
          const double f = p == 0 ? 1.0 : sb;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * self.grad[i];
        }
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return linear_combine(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return linear_combine(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  const auto& va = node_of(a, "mul")->value;
  const auto& vb = node_of(b, "mul")->value;
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return make_result(
      a.shape(), std::move(out), {node_of(a, "mul"), node_of(b, "mul")},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto& g = grad_of(pa);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
          auto& g = grad_of(pb);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
      },
      "mul");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  const std::size_t n = x.rows(), m = x.cols();
  if (bias.numel() != m) {
    throw Error(ErrorCode::ShapeMismatch,
                "add_bias: bias " + shape_string(bias.shape()) + " for input " + shape_string(x.shape()));
  }
  const auto& vx = node_of(x, "add_bias")->value;
  const auto& vb = node_of(bias, "add_bias")->value;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = vx[i * m + j] + vb[j];
  return make_result(
      {n, m}, std::move(out), {node_of(x, "add_bias"), node_of(bias, "add_bias")},
      [n, m](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.requires_grad) {
          auto& g = grad_of(px);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          auto& g = grad_of(pb);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
        }
      },
      "add_bias");
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw Error(ErrorCode::ShapeMismatch, "scale: factor must be a scalar");
  const auto& vx = node_of(x, "scale")->value;
  const double f = node_of(s, "scale")->value[0];
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f * vx[i];
  return make_result(
      x.shape(), std::move(out), {node_of(x, "scale"), node_of(s, "scale")},
      [](Node& self) {
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        if (px.requires_grad) {
          auto& g = grad_of(px);
          const double f = ps.value[0];
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * self.grad[i];
        }
        if (ps.requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < px.value.size(); ++i) acc += self.grad[i] * px.value[i];
          grad_of(ps)[0] += acc;
        }
      },
      "scale");
}

Tensor mul_const(const Tensor& x, double c) {
  const auto& vx = node_of(x, "mul_const")->value;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * vx[i];
  return make_result(
      x.shape(), std::move(out), {node_of(x, "mul_const")},
      [c](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
      },
      "mul_const");
}

Tensor scale_rows(const Tensor& x, std::span<const double> factors) {
  require_rank2(x, "scale_rows");
  const std::size_t n = x.rows(), m = x.cols();
  if (factors.size() != n) throw Error(ErrorCode::ShapeMismatch, "scale_rows: one factor per row required");
  std::vector<double> f(factors.begin(), factors.end());
  const auto& vx = node_of(x, "scale_rows")->value;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = f[i] * vx[i * m + j];
  return make_result(
      {n, m}, std::move(out), {node_of(x, "scale_rows")},
      [f = std::move(f), n, m](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) g[i * m + j] += f[i] * self.grad[i * m + j];
      },
      "scale_rows");
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat: no inputs");
  if (axis != 0 && axis != 1) throw Error(ErrorCode::ShapeMismatch, "concat: axis must be 0 or 1");
  std::vector<NodePtr> parents;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat");
    parents.push_back(node_of(p, "concat"));
  }
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    const std::size_t f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) throw Error(ErrorCode::ShapeMismatch, "concat: incompatible shapes");
    widths.push_back(axis == 0 ? p.rows() : p.cols());
    total += widths.back();
  }
  Shape shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(total * fixed);
  if (axis == 0) {
    auto dst = out.begin();
    for (const NodePtr& p : parents) dst = std::copy(p->value.begin(), p->value.end(), dst);
  } else {
    std::size_t col = 0;
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const std::size_t w = widths[p];
      for (std::size_t i = 0; i < fixed; ++i) {
        std::copy_n(parents[p]->value.begin() + static_cast<std::ptrdiff_t>(i * w), w,
                    out.begin() + static_cast<std::ptrdiff_t>(i * total + col));
      }
      col += w;
    }
  }
  return make_result(
      std::move(shape), std::move(out), std::move(parents),
      [axis, widths, fixed, total](Node& self) {
        std::size_t pos = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          Node& parent = *self.parents[p];
          const std::size_t w = widths[p];
          if (parent.requires_grad) {
            auto& g = grad_of(parent);
            if (axis == 0) {
              for (std::size_t i = 0; i < w * fixed; ++i) g[i] += self.grad[pos * fixed + i];
            } else {
              for (std::size_t i = 0; i < fixed; ++i)
                for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + pos + j];
            }
          }
          pos += w;
        }
      },
      "concat");
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const Tensor parts[] = {a, b};
  return concat(parts, axis);
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  const std::size_t m = x.cols();
  if (begin > end || end > x.rows()) throw Error(ErrorCode::ShapeMismatch, "slice_rows: range out of bounds");
  const auto& vx = node_of(x, "slice_rows")->value;
  std::vector<double> out(vx.begin() + static_cast<std::ptrdiff_t>(begin * m),
                          vx.begin() + static_cast<std::ptrdiff_t>(end * m));
  return make_result(
      {end - begin, m}, std::move(out), {node_of(x, "slice_rows")},
      [begin, m](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * m + i] += self.grad[i];
      },
      "slice_rows");
}

Tensor gather_rows(const Tensor& x, std::span<const Index> index) {
  require_rank2(x, "gather_rows");
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<Index> idx(index.begin(), index.end());
  const auto& vx = node_of(x, "gather_rows")->value;
  std::vector<double> out(idx.size() * m);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw Error(ErrorCode::IndexOutOfRange, "gather_rows: row " + std::to_string(idx[i]));
    std::copy_n(vx.begin() + static_cast<std::ptrdiff_t>(idx[i] * m), m,
                out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  const std::size_t count = idx.size();
  return make_result(
      {count, m}, std::move(out), {node_of(x, "gather_rows")},
      [idx = std::move(idx), m](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < m; ++j) g[idx[i] * m + j] += self.grad[i * m + j];
      },
      "gather_rows");
}

Tensor scatter_sum(const Tensor& rows, std::span<const Index> index, std::size_t num_segments) {
  require_rank2(rows, "scatter_sum");
  const std::size_t n = rows.rows(), m = rows.cols();
  if (index.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "scatter_sum: " + std::to_string(index.size()) + " indices for " +
                                              std::to_string(n) + " rows");
  }
  std::vector<Index> idx(index.begin(), index.end());
  const auto& vx = node_of(rows, "scatter_sum")->value;
  std::vector<double> out(num_segments * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= num_segments) {
      throw Error(ErrorCode::IndexOutOfRange, "scatter_sum: segment " + std::to_string(idx[i]));
    }
    for (std::size_t j = 0; j < m; ++j) out[idx[i] * m + j] += vx[i * m + j];
  }
  return make_result(
      {num_segments, m}, std::move(out), {node_of(rows, "scatter_sum")},
      [idx = std::move(idx), m](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[idx[i] * m + j];
      },
      "scatter_sum");
}

Tensor relu(const Tensor& x) {
  const auto& vx = node_of(x, "relu")->value;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > 0.0 ? vx[i] : 0.0;
  return make_result(
      x.shape(), std::move(out), {node_of(x, "relu")},
      [](Node& self) {
        Node& px = *self.parents[0];
        auto& g = grad_of(px);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (px.value[i] > 0.0) g[i] += self.grad[i];
        }
      },
      "relu");
}

Tensor abs(const Tensor& x) {
  const auto& vx = node_of(x, "abs")->value;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(vx[i]);
  return make_result(
      x.shape(), std::move(out), {node_of(x, "abs")},
      [](Node& self) {
        Node& px = *self.parents[0];
        auto& g = grad_of(px);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = px.value[i];
          g[i] += (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)) * self.grad[i];
        }
      },
      "abs");
}

Tensor sum(const Tensor& x) {
  const auto& vx = node_of(x, "sum")->value;
  const double total = std::accumulate(vx.begin(), vx.end(), 0.0);
  return make_result(
      {}, {total}, {node_of(x, "sum")},
      [](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (double& gi : g) gi += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  const std::size_t count = x.numel();
  if (count == 0) throw Error(ErrorCode::ShapeMismatch, "mean of an empty tensor");
  return mul_const(sum(x), 1.0 / static_cast<double>(count));
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  same_shape(logits, targets, "bce_with_logits");
  const auto& z = node_of(logits, "bce_with_logits")->value;
  const auto& y = node_of(targets, "bce_with_logits")->value;
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::fabs(z[i])));
  }
  return make_result(
      logits.shape(), std::move(out), {node_of(logits, "bce_with_logits"), node_of(targets, "bce_with_logits")},
      [](Node& self) {
        Node& pz = *self.parents[0];
        Node& py = *self.parents[1];
        if (pz.requires_grad) {
          auto& g = grad_of(pz);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-pz.value[i]));
            g[i] += (sig - py.value[i]) * self.grad[i];
          }
        }
        if (py.requires_grad) {
          auto& g = grad_of(py);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= pz.value[i] * self.grad[i];
        }
      },
      "bce_with_logits");
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error(ErrorCode::BadParams, "dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const auto& vx = node_of(x, "dropout")->value;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(vx.size());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] * mask[i];
  return make_result(
      x.shape(), std::move(out), {node_of(x, "dropout")},
      [mask = std::move(mask)](Node& self) {
        auto& g = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self.grad[i];
      },
      "dropout");
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool training,
                 double eps, double momentum) {
  require_rank2(x, "batchnorm");
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.numel() != d || beta.numel() != d || stats.running_mean.size() != d ||
      stats.running_var.size() != d) {
    throw Error(ErrorCode::ShapeMismatch, "batchnorm: parameter width does not match input " + shape_string(x.shape()));
  }
  const auto& vx = node_of(x, "batchnorm")->value;
  const auto& vg = node_of(gamma, "batchnorm")->value;
  const auto& vb = node_of(beta, "batchnorm")->value;

  std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
  if (training) {
    if (n > 0) {
      std::vector<double> var(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += vx[i * d + j];
      for (double& m : mu) m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double c = vx[i * d + j] - mu[j];
          var[j] += c * c;
        }
      for (std::size_t j = 0; j < d; ++j) {
        const double biased = var[j] / static_cast<double>(n);
        inv_std[j] = 1.0 / std::sqrt(biased + eps);
        // A single row has no variance estimate; running stats stay put.
        if (n > 1) {
          const double unbiased = var[j] / static_cast<double>(n - 1);
          stats.running_mean[j] = (1.0 - momentum) * stats.running_mean[j] + momentum * mu[j];
          stats.running_var[j] = (1.0 - momentum) * stats.running_var[j] + momentum * unbiased;
        }
      }
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + eps);
    }
  }

  std::vector<double> xhat(n * d), out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (vx[i * d + j] - mu[j]) * inv_std[j];
      out[i * d + j] = vg[j] * xhat[i * d + j] + vb[j];
    }
  return make_result(
      {n, d}, std::move(out), {node_of(x, "batchnorm"), node_of(gamma, "batchnorm"), node_of(beta, "batchnorm")},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), n, d, training](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& dy = self.grad;
        if (pg.requires_grad) {
          auto& g = grad_of(pg);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j] * xhat[i * d + j];
        }
        if (pb.requires_grad) {
          auto& g = grad_of(pb);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j];
        }
        if (!px.requires_grad) return;
        auto& g = grad_of(px);
        if (!training) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[i * d + j] += dy[i * d + j] * pg.value[j] * inv_std[j];
          return;
        }
        std::vector<double> sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[i * d + j] * pg.value[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xhat[i * d + j];
          }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[i * d + j] * pg.value[j];
            g[i * d + j] += inv_std[j] * inv_n *
                            (static_cast<double>(n) * dxh - sum_dxhat[j] - xhat[i * d + j] * sum_dxhat_xhat[j]);
          }
      },
      "batchnorm");
}

}  // namespace cinpp
