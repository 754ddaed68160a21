#include "ess/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ess::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <class T>
void check_finite(const std::vector<T>& v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << "non-finite value " << v[i] << " at element " << i << " in " << what;
      throw NumericError(os.str());
    }
  }
}

template <class T>
void check_shape(const Shape& shape, std::size_t n) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != n) {
    throw ShapeError("data length " + std::to_string(n) + " does not match shape " + shape_str(shape));
  }
}

// Reverse-topological list of nodes reachable from root through nodes that
// require grad. Iterative to survive deep graphs.
template <class T>
std::vector<Node<T>*> backward_order(Node<T>* root) {
  std::vector<Node<T>*> post;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

}  // namespace

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  check_shape<T>(shape, data.size());
  check_finite(data, "leaf tensor");
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v >= node_->shape[i]) throw ShapeError("index out of range for " + shape_str(shape()));
    flat = flat * node_->shape[i] + v;
    ++i;
  }
  return node_->data[flat];
}

template <class T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;
  auto order = backward_order(node_.get());
  node_->ensure_grad()[0] += T(1);
  for (Node<T>* n : order) {
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
    }
  }
  for (Node<T>* n : order) {
    if (!n->grad.empty()) check_finite(n->grad, "gradient of " + n->op);
  }
}

template <class T>
std::vector<std::string> Tensor<T>::backward_trace() const {
  std::vector<std::string> ops;
  if (!node_->requires_grad) return ops;
  for (Node<T>* n : backward_order(node_.get())) ops.push_back(n->op);
  return ops;
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->data, false);
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  return from_data(node_->shape, node_->data, node_->requires_grad);
}

template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> parents, std::function<void(Node<T>&)> backward_fn) {
  check_shape<T>(shape, data.size());
  check_finite(data, op);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = std::move(op);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(std::string, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(std::string, Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);

}  // namespace ess::ad
