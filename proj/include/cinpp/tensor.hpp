#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cinpp/matrix.hpp"
#include "cinpp/rng.hpp"

namespace cinpp {

using Shape = std::vector<std::size_t>;
using Index = std::uint32_t;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

// Dense row-major float64 array that records the operations producing it.
// Copies share storage; operations never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from(const Matrix& m, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const double> data() const;
  // Direct write access, meant for leaves (optimizer updates, perturbation
  // in finite-difference checks). Never call on a tensor that is part of a
  // graph whose backward pass is still pending.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
  Matrix to_matrix() const;

  bool requires_grad() const;
  bool has_grad() const;
  // Zero-filled span of numel() when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate.
  void backward() const;

  // Same values, detached from the graph.
  Tensor detach() const;

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend struct TensorAccess;

  std::shared_ptr<detail::Node> node_;
};

// While alive, newly created tensors do not record backward rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
// x[n, m] + b[m] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// s * x with s a learnable scalar tensor.
Tensor scale(const Tensor& x, const Tensor& s);
Tensor mul_const(const Tensor& x, double c);
// Multiplies row i by factors[i].
Tensor scale_rows(const Tensor& x, std::span<const double> factors);
// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// out[i] = x[index[i]].
Tensor gather_rows(const Tensor& x, std::span<const Index> index);
// out[s] = sum of rows[i] with index[i] == s; segments without rows are zero.
// Rows are accumulated in input order.
Tensor scatter_sum(const Tensor& rows, std::span<const Index> index, std::size_t num_segments);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Elementwise binary cross-entropy between logits and {0,1} targets.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

// Normalises each column of x[n, d] over its rows. Training mode uses batch
// statistics (biased variance) and updates the running statistics with the
// unbiased variance; evaluation mode uses the running statistics.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                 bool training, double eps, double momentum);

}  // namespace cinpp
