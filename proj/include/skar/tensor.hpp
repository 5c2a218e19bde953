#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// Every operation that sees an input with requires_grad records a node whose
// closure accumulates into the inputs' gradient buffers. Nothing is recorded
// when no input requires a gradient, so frozen parameters cost nothing on
// the backward pass. All templates are instantiated for double (working
// precision) and long double (extended precision for gradient checks).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace skar {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class Real>
class Tensor;

namespace detail {

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool consumed = false;  // set on a loss once backward has run
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward;

  std::vector<Real>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

template <class Real>
class Tensor {
 public:
  using value_type = Real;
  using NodePtr = std::shared_ptr<detail::Node<Real>>;

  Tensor();
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<Real> values);
  static Tensor scalar(Real value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const Real> values() const { return node_->value; }
  // In-place write access for leaves (parameter updates, initialization).
  std::span<Real> mutable_values() { return node_->value; }
  Real item() const;
  Real operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; empty span until backward reaches this tensor.
  std::span<const Real> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), Real(0)); }
  void clear_grad() { node_->grad.clear(); }

  // Copy of the values as a new leaf with no history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Records an operation result. The backward closure receives the output
  // node and must only touch inputs that require a gradient.
  static Tensor record(Shape shape, std::vector<Real> value, const std::vector<Tensor>& inputs,
                       std::function<void(const detail::Node<Real>&)> backward, const char* op_name);

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

// While alive, operations on this thread record no history (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// Runs reverse-mode accumulation from a scalar loss. Each recorded graph may
// be differentiated once.
template <class Real>
void backward(const Tensor<Real>& loss);

// Elementwise arithmetic. When shapes differ, the lower-rank operand must be
// a suffix of the other and is broadcast over the leading axes.
template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);
template <class Real>
Tensor<Real> relu(const Tensor<Real>& x);
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);
// Mean over the listed axes, which are removed from the shape.
template <class Real>
Tensor<Real> mean(const Tensor<Real>& x, const std::vector<std::size_t>& axes);
template <class Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);
// Swaps the last two axes.
template <class Real>
Tensor<Real> transpose(const Tensor<Real>& x);
// a: [..., m, k]; b: [k, n] or [..., k, n] with the same leading axes.
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

// Joint aggregation over (N, C, T, V, M) features:
//   out[n,c,t,v,m] = sum_u A[v][u] * X[n,c,t,u,m]
// A is [V_out, V_in] shared by the batch, or [N, V_out, V_in].
template <class Real>
Tensor<Real> graph_contract(const Tensor<Real>& x, const Tensor<Real>& adjacency);

// Channel mixing: out[n,o,...] = sum_c W[o][c] * X[n,c,...].
template <class Real>
Tensor<Real> channel_mix(const Tensor<Real>& x, const Tensor<Real>& weight);

// Per-joint 1-D convolution along frames, kernel [C_out, C_in, K] with K odd,
// symmetric zero padding (K-1)/2; output has ceil(T/stride) frames.
template <class Real>
Tensor<Real> temporal_conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel, std::size_t stride);

// Gathers the `window` frames centered on each frame (zero outside the
// sequence) into the joint axis: [N,C,T,V,M] -> [N,C,T,window*V,M], with
// windowed joint index f*V + v for window offset f.
template <class Real>
Tensor<Real> temporal_window(const Tensor<Real>& x, std::size_t window);

// Mean negative log-likelihood of softmax(logits[N, K]) at the labels.
template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, const std::vector<std::size_t>& labels);

}  // namespace skar
