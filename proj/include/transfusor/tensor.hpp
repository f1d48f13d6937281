#pragma once
// Dense row-major tensors of 64-bit floats with reverse-mode differentiation.
//
// A Tensor is a cheap handle to a shared node. Operations on tensors that
// require gradients record their inputs and a backward rule on the output
// node; backward(loss) walks the recorded graph once in reverse topological
// order. Values are never modified by operations; only leaf values are
// rewritten in place by the optimizer or initializers.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "transfusor/rng.hpp"

namespace transfusor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // pushes this->grad into parents
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;

  std::span<const double> values() const;
  // Leaf storage; used by initializers, the optimizer and checkpoint loading.
  std::span<double> mutable_values();
  double operator[](std::size_t flat) const { return values()[flat]; }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Empty span until a backward pass reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, cut from the graph.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Disables graph recording on this thread for its lifetime.
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

// ---- operations ---------------------------------------------------------
//
// Binary elementwise ops accept b whose shape equals a trailing suffix of a's
// shape; b is then repeated over a's leading axes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor exp(const Tensor& x);

// a[..., m, n] x b[n, p] (b shared over leading axes), or
// a[..., m, n] x b[..., n, p] with identical leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);
// a[..., m, n] x b[..., p, n]^T -> [..., m, p]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// x * W + b over the last axis; W is [in, out], b is [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Negative axes count from the back.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);

Tensor reshape(const Tensor& x, Shape shape);
// [a, b, c, d] -> [a, c, b, d]
Tensor swap_axes12(const Tensor& x);
// [B, D] -> [B, S, D]
Tensor repeat_positions(const Tensor& x, std::size_t positions);
// [B, S, D] -> [B, D]
Tensor mean_positions(const Tensor& x);
// table[R, D] rows selected by index -> [n, D]
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

Tensor randn(Shape shape, SeededRng& rng, bool requires_grad = false);

// Populates d(loss)/d(leaf) on every reachable leaf that requires gradients.
// Leaf gradients accumulate across calls; intermediate gradients are reset.
void backward(const Tensor& loss);

}  // namespace transfusor
