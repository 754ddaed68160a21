#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major arrays.
//
// A Tensor is a cheap handle onto a graph node. Operations on tensors that
// require gradients record their inputs and a backward closure; calling
// backward() on a scalar result walks the recorded graph once in reverse
// topological order and accumulates gradients into every tensor that
// requires them. Tensors that do not require gradients (including the
// result of detach()) neither receive nor propagate gradient.
//
// Element type is a template parameter: float for training, double for
// finite-difference verification. Both are explicitly instantiated.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ess::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised when a forward value or a gradient becomes NaN or infinite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Direct writes are only meaningful on leaves (parameters, inputs).
  std::span<T> mutable_data() { return node_->data; }
  // Empty when no gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const std::string& op() const { return node_->op; }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  // Seeds d(this)/d(this) = 1 and propagates. Throws ShapeError unless
  // this tensor has exactly one element.
  void backward() const;

  // Op tags of every node visited by backward(), in visit order.
  std::vector<std::string> backward_trace() const;

  // New leaf holding a copy of the values, cut off from the graph.
  Tensor detach() const;
  // Deep copy preserving requires_grad; for parameter cloning.
  Tensor clone() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op result. If no parent requires grad the backward closure is
// dropped and the result is a constant. Throws NumericError naming the op if
// any value is non-finite.
template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> parents, std::function<void(Node<T>&)> backward_fn);

// Elementwise, same-shape operands.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> relu(const Tensor<T>& a);

// [m x k] * [k x n] -> [m x n].
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x [n x in], weight [out x in], bias [out] (may be undefined) -> [n x out].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// 3x3 convolution with zero padding 1. input [c_in x h x w] or
// [n x c_in x h x w]; kernels [c_out x c_in x 3 x 3]; bias [c_out] or
// undefined. Output spatial extent is (h - 1) / stride + 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride = 1);
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride = 1) {
  return conv2d(input, kernels, Tensor<T>(), stride);
}

// 2x2 mean pooling over the last two axes (odd trailing row/column dropped).
template <class T> Tensor<T> avg_pool2(const Tensor<T>& x);

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Concatenation along axis 0; trailing extents must agree.
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);

// Unit-norm along the last axis ([d] or [n x d]). Throws std::domain_error
// if any row has norm <= 1e-12.
template <class T> Tensor<T> l2_normalize(const Tensor<T>& x);

// [n] -> scalar, or [rows x n] -> [rows]. Max-shifted.
template <class T> Tensor<T> log_sum_exp(const Tensor<T>& logits);

// logits [n] with one label -> scalar; logits [rows x n] with one label per
// row -> mean over rows.
template <class T> Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label);
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels);

// Mean over rows of (log_sum_exp(row) - sum_j target_ij * logit_ij) where
// each target row sums to one. targets has the same shape as logits.
template <class T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, std::span<const T> targets);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

template <class T> Tensor<T> stop_gradient(const Tensor<T>& x) { return x.detach(); }

}  // namespace ess::ad
