#include "skar/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "skar/error.hpp"

namespace skar {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

template <class Real>
using Node = detail::Node<Real>;

// Layout of a broadcast binary operation: the smaller operand repeats over
// `outer` blocks of `inner` elements.
struct Broadcast {
  Shape shape;
  std::size_t outer;
  std::size_t inner;
  bool a_small;
  bool b_small;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return {a, 1, numel(a), false, false};
  if (b.size() < a.size() && is_suffix(b, a)) return {a, numel(a) / numel(b), numel(b), false, true};
  if (a.size() < b.size() && is_suffix(a, b)) return {b, numel(b) / numel(a), numel(a), true, false};
  shape_mismatch(op, a, b);
}

template <class Real>
inline void axpy(std::size_t n, Real w, const Real* __restrict x, Real* __restrict y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += w * x[i];
}

// Dot product with eight interleaved partial sums so the loop vectorizes
// without reassociation flags; the summation order is fixed.
template <class Real>
inline Real dot(std::size_t n, const Real* __restrict x, const Real* __restrict y) {
  Real acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += x[i + j] * y[i + j];
  }
  for (; i < n; ++i) acc[i % 8] += x[i] * y[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Calls f.template operator()<Big>(i) on blocks of Big and <1> on the rest.
template <int Big, class F>
inline void for_blocks(std::size_t count, F&& f) {
  std::size_t i = 0;
  for (; i + Big <= count; i += Big) f.template operator()<Big>(i);
  for (; i < count; ++i) f.template operator()<1>(i);
}

// y[j][0..L) += sum_r w[r][j] * x[r][0..L) with the B x L accumulator tile
// held in registers; rows r are visited in order.
template <int B, int L, class Real>
inline void tile_accumulate(std::size_t rows, const Real* const* x, const Real* const* w, Real* const* y) {
  Real acc[B][L] = {};
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* __restrict xr = x[r];
    for (int j = 0; j < B; ++j) {
      const Real wj = w[r][j];
      for (int l = 0; l < L; ++l) acc[j][l] += wj * xr[l];
    }
  }
  for (int j = 0; j < B; ++j) {
    for (int l = 0; l < L; ++l) y[j][l] += acc[j][l];
  }
}

// Tap k reads input frame t*stride + k - pad == (t + shift)*stride + phase.
struct ConvTap {
  std::size_t phase = 0;
  std::ptrdiff_t shift = 0;
};

// Input frames are regrouped by phase (frame mod stride) and zero-padded by
// `margin` frames on both sides, so every tap of every output frame reads a
// contiguous, in-bounds run.
struct ConvGeometry {
  std::size_t batch, cin, frames, cout, span, taps, pad, stride, out_frames, margin;
  std::vector<ConvTap> tap;

  ConvGeometry(const Shape& xs, const Shape& ks, std::size_t stride_)
      : batch(xs[0]),
        cin(xs[1]),
        frames(xs[2]),
        cout(ks[0]),
        span(xs[3] * xs[4]),
        taps(ks[2]),
        pad((ks[2] - 1) / 2),
        stride(stride_),
        out_frames((xs[2] + stride_ - 1) / stride_),
        margin(pad / stride_ + 1) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    for (std::size_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t d = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
      std::ptrdiff_t q = d / s;
      if (d % s != 0 && d < 0) --q;
      tap.push_back({static_cast<std::size_t>(d - q * s), q});
    }
  }

  // Padded frames per phase plane; out_frames equals frames per phase.
  std::size_t plane_frames() const { return out_frames + 2 * margin; }
  std::size_t plane_size() const { return plane_frames() * span; }
  // Start of the (n, c) group of `stride` phase planes.
  std::size_t group(std::size_t n, std::size_t c) const { return (n * cin + c) * stride * plane_size(); }
  std::size_t input_size() const { return batch * cin * stride * plane_size(); }
  // Offset of tap k's run relative to a group, for output column 0.
  std::size_t tap_offset(std::size_t k) const {
    return tap[k].phase * plane_size() +
           static_cast<std::size_t>(tap[k].shift + static_cast<std::ptrdiff_t>(margin)) * span;
  }
  // Position of input frame f inside its group.
  std::size_t frame_offset(std::size_t f) const { return (f % stride) * plane_size() + (f / stride + margin) * span; }

  template <class Real>
  std::vector<Real> to_phases(std::span<const Real> x) const {
    std::vector<Real> out(input_size(), Real(0));
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t f = 0; f < frames; ++f) {
          const Real* src = x.data() + ((n * cin + c) * frames + f) * span;
          std::copy(src, src + span, out.data() + group(n, c) + frame_offset(f));
        }
      }
    }
    return out;
  }

  template <class Real>
  void add_from_phases(const std::vector<Real>& phased, std::vector<Real>& x) const {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t f = 0; f < frames; ++f) {
          const Real* src = phased.data() + group(n, c) + frame_offset(f);
          Real* dst = x.data() + ((n * cin + c) * frames + f) * span;
          for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
        }
      }
    }
  }
};

// Runs body.template operator()<L>(col) over [begin, end) in tiles of 8
// columns, then single columns.
template <class F>
inline void for_columns(std::size_t begin, std::size_t end, F&& body) {
  std::size_t col = begin;
  for (; col + 8 <= end; col += 8) body.template operator()<8>(col);
  for (; col < end; ++col) body.template operator()<1>(col);
}

}  // namespace

namespace {
thread_local bool recording_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(recording_enabled) { recording_enabled = false; }
NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }
bool grad_recording_enabled() { return recording_enabled; }

template <class Real>
Tensor<Real>::Tensor() : Tensor(Shape{1}) {}

template <class Real>
Tensor<Real>::Tensor(Shape shape) : node_(std::make_shared<Node<Real>>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  node_->value.assign(skar::numel(shape), Real(0));
  node_->shape = std::move(shape);
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values) : node_(std::make_shared<Node<Real>>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (values.size() != skar::numel(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " + std::to_string(skar::numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <class Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return Tensor(Shape{1}, std::vector<Real>{value});
}

template <class Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <class Real>
void Tensor<Real>::set_requires_grad(bool flag) {
  if (node_->backward) throw NumericalError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
}

template <class Real>
Tensor<Real> Tensor<Real>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <class Real>
Tensor<Real> Tensor<Real>::record(Shape shape, std::vector<Real> value, const std::vector<Tensor>& inputs,
                                  std::function<void(const detail::Node<Real>&)> backward, const char* op_name) {
  // x * 0 is NaN exactly when x is NaN or infinite.
  Real probe[8] = {};
  const std::size_t count = value.size();
  std::size_t i = 0;
  for (; i + 8 <= count; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) probe[j] += value[i + j] * Real(0);
  }
  for (; i < count; ++i) probe[0] += value[i] * Real(0);
  for (const Real& p : probe) {
    if (p != p) throw NumericalError(std::string(op_name) + " produced a non-finite value");
  }
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_recording_enabled()) {
    for (const Tensor& in : inputs) {
      if (in.requires_grad()) node->parents.push_back(in.node_);
    }
  }
  if (!node->parents.empty()) {
    node->requires_grad = true;
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

template <class Real>
void backward(const Tensor<Real>& loss) {
  if (loss.numel() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  auto& root = *loss.node();
  if (root.consumed) throw NumericalError("backward called twice on the same graph");
  root.consumed = true;
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Real>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (!node->backward) continue;
    node->grad_buffer();
    for (auto& parent : node->parents) parent->grad_buffer();
    node->backward(*node);
  }
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Broadcast bc = broadcast("add", a.shape(), b.shape());
  std::vector<Real> out(numel(bc.shape));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) {
      const std::size_t k = o * bc.inner + i;
      out[k] = av[bc.a_small ? i : k] + bv[bc.b_small ? i : k];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor<Real>::record(
      bc.shape, std::move(out), {a, b},
      [an, bn, bc](const Node<Real>& self) {
        for (auto [in, small] : std::array{std::pair{an.get(), bc.a_small}, std::pair{bn.get(), bc.b_small}}) {
          if (!in->requires_grad) continue;
          auto& g = in->grad;
          for (std::size_t o = 0; o < bc.outer; ++o) {
            for (std::size_t i = 0; i < bc.inner; ++i) {
              const std::size_t k = o * bc.inner + i;
              g[small ? i : k] += self.grad[k];
            }
          }
        }
      },
      "add");
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Broadcast bc = broadcast("mul", a.shape(), b.shape());
  std::vector<Real> out(numel(bc.shape));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) {
      const std::size_t k = o * bc.inner + i;
      out[k] = av[bc.a_small ? i : k] * bv[bc.b_small ? i : k];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor<Real>::record(
      bc.shape, std::move(out), {a, b},
      [an, bn, bc](const Node<Real>& self) {
        for (std::size_t o = 0; o < bc.outer; ++o) {
          for (std::size_t i = 0; i < bc.inner; ++i) {
            const std::size_t k = o * bc.inner + i;
            const std::size_t ka = bc.a_small ? i : k;
            const std::size_t kb = bc.b_small ? i : k;
            if (an->requires_grad) an->grad[ka] += self.grad[k] * bn->value[kb];
            if (bn->requires_grad) bn->grad[kb] += self.grad[k] * an->value[ka];
          }
        }
      },
      "mul");
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.values().begin(), a.values().end());
  for (Real& v : out) v *= factor;
  auto an = a.node();
  return Tensor<Real>::record(
      a.shape(), std::move(out), {a},
      [an, factor](const Node<Real>& self) {
        for (std::size_t k = 0; k < self.grad.size(); ++k) an->grad[k] += factor * self.grad[k];
      },
      "scale");
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (Real& v : out) v = v > Real(0) ? v : Real(0);
  auto xn = x.node();
  return Tensor<Real>::record(
      x.shape(), std::move(out), {x},
      [xn](const Node<Real>& self) {
        for (std::size_t k = 0; k < self.grad.size(); ++k) {
          if (xn->value[k] > Real(0)) xn->grad[k] += self.grad[k];
        }
      },
      "relu");
}

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) throw ShapeError("softmax axis out of range for shape " + shape_string(shape));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  const auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      Real peak = xv[base];
      for (std::size_t j = 1; j < len; ++j) peak = std::max(peak, xv[base + j * inner]);
      Real total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        out[base + j * inner] = std::exp(xv[base + j * inner] - peak);
        total += out[base + j * inner];
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  auto xn = x.node();
  return Tensor<Real>::record(
      shape, std::move(out), {x},
      [xn, outer, inner, len](const Node<Real>& self) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            Real dot = 0;
            for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t k = base + j * inner;
              xn->grad[k] += self.value[k] * (self.grad[k] - dot);
            }
          }
        }
      },
      "softmax");
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  const Shape& shape = x.shape();
  std::vector<bool> reduced(shape.size(), false);
  for (std::size_t a : axes) {
    if (a >= shape.size()) throw ShapeError("mean axis out of range for shape " + shape_string(shape));
    reduced[a] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (reduced[i]) {
      count *= shape[i];
    } else {
      out_shape.push_back(shape[i]);
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);

  // Output stride seen by each input axis (0 along reduced axes).
  std::vector<std::size_t> out_stride(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    if (!reduced[i]) {
      out_stride[i] = stride;
      stride *= shape[i];
    }
  }
  const std::size_t total = x.numel();
  std::vector<std::size_t> target(total);
  std::vector<std::size_t> index(shape.size(), 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < total; ++k) {
    target[k] = offset;
    for (std::size_t i = shape.size(); i-- > 0;) {
      offset += out_stride[i];
      if (++index[i] < shape[i]) break;
      offset -= out_stride[i] * shape[i];
      index[i] = 0;
    }
  }

  std::vector<Real> out(numel(out_shape), Real(0));
  const auto xv = x.values();
  for (std::size_t k = 0; k < total; ++k) out[target[k]] += xv[k];
  const Real inv = Real(1) / static_cast<Real>(count);
  for (Real& v : out) v *= inv;
  auto xn = x.node();
  return Tensor<Real>::record(
      out_shape, std::move(out), {x},
      [xn, target = std::move(target), inv](const Node<Real>& self) {
        for (std::size_t k = 0; k < target.size(); ++k) xn->grad[k] += self.grad[target[k]] * inv;
      },
      "mean");
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.values()) total += v;
  auto xn = x.node();
  return Tensor<Real>::record(
      Shape{1}, std::vector<Real>{total}, {x},
      [xn](const Node<Real>& self) {
        for (Real& g : xn->grad) g += self.grad[0];
      },
      "sum");
}

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  auto xn = x.node();
  return Tensor<Real>::record(
      std::move(shape), std::vector<Real>(x.values().begin(), x.values().end()), {x},
      [xn](const Node<Real>& self) {
        for (std::size_t k = 0; k < self.grad.size(); ++k) xn->grad[k] += self.grad[k];
      },
      "reshape");
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& x) {
  const Shape& shape = x.shape();
  if (shape.size() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_string(shape));
  const std::size_t rows = shape[shape.size() - 2];
  const std::size_t cols = shape.back();
  const std::size_t batch = x.numel() / (rows * cols);
  Shape out_shape = shape;
  std::swap(out_shape[shape.size() - 2], out_shape.back());
  std::vector<Real> out(x.numel());
  const auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out[b * rows * cols + j * rows + i] = xv[b * rows * cols + i * cols + j];
    }
  }
  auto xn = x.node();
  return Tensor<Real>::record(
      out_shape, std::move(out), {x},
      [xn, batch, rows, cols](const Node<Real>& self) {
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              xn->grad[b * rows * cols + i * cols + j] += self.grad[b * rows * cols + j * rows + i];
            }
          }
        }
      },
      "transpose");
}

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) shape_mismatch("matmul", as, bs);
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != k) shape_mismatch("matmul", as, bs);
  const bool shared_b = bs.size() == 2;
  if (!shared_b && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()))) {
    shape_mismatch("matmul", as, bs);
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  std::vector<Real> out(batch * m * n, Real(0));
  const Real* av = a.values().data();
  const Real* bv = b.values().data();
  for (std::size_t p = 0; p < batch; ++p) {
    const Real* ap = av + p * m * k;
    const Real* bp = bv + (shared_b ? 0 : p * k * n);
    Real* op = out.data() + p * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        const Real s = ap[i * k + l];
        for (std::size_t j = 0; j < n; ++j) op[i * n + j] += s * bp[l * n + j];
      }
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor<Real>::record(
      out_shape, std::move(out), {a, b},
      [an, bn, batch, m, k, n, shared_b](const Node<Real>& self) {
        for (std::size_t p = 0; p < batch; ++p) {
          const Real* g = self.grad.data() + p * m * n;
          const std::size_t boff = shared_b ? 0 : p * k * n;
          if (an->requires_grad) {
            Real* ga = an->grad.data() + p * m * k;
            const Real* bp = bn->value.data() + boff;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t l = 0; l < k; ++l) {
                Real acc = 0;
                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bp[l * n + j];
                ga[i * k + l] += acc;
              }
            }
          }
          if (bn->requires_grad) {
            Real* gb = bn->grad.data() + boff;
            const Real* ap = an->value.data() + p * m * k;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t l = 0; l < k; ++l) {
                const Real s = ap[i * k + l];
                for (std::size_t j = 0; j < n; ++j) gb[l * n + j] += s * g[i * n + j];
              }
            }
          }
        }
      },
      "matmul");
}

template <class Real>
Tensor<Real> graph_contract(const Tensor<Real>& x, const Tensor<Real>& adjacency) {
  const Shape& xs = x.shape();
  const Shape& as = adjacency.shape();
  if (xs.size() != 5) shape_mismatch("graph_contract", xs, as);
  const std::size_t batch = xs[0];
  const std::size_t vin = xs[3];
  const std::size_t bodies = xs[4];
  const bool per_sample = as.size() == 3;
  if (!(as.size() == 2 || (per_sample && as[0] == batch)) || as.back() != vin) {
    shape_mismatch("graph_contract", xs, as);
  }
  const std::size_t vout = as[as.size() - 2];
  const std::size_t rows = xs[1] * xs[2];  // (channel, frame) blocks per sample
  Shape out_shape = xs;
  out_shape[3] = vout;
  std::vector<Real> out(numel(out_shape), Real(0));
  const Real* xv = x.values().data();
  const Real* av = adjacency.values().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const Real* ap = av + (per_sample ? n * vout * vin : 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* __restrict xb = xv + (n * rows + r) * vin * bodies;
      Real* __restrict ob = out.data() + (n * rows + r) * vout * bodies;
      for (std::size_t v = 0; v < vout; ++v) {
        for (std::size_t u = 0; u < vin; ++u) {
          const Real w = ap[v * vin + u];
          if (w == Real(0)) continue;
          for (std::size_t m = 0; m < bodies; ++m) ob[v * bodies + m] += w * xb[u * bodies + m];
        }
      }
    }
  }
  auto xn = x.node();
  auto an = adjacency.node();
  return Tensor<Real>::record(
      std::move(out_shape), std::move(out), {x, adjacency},
      [xn, an, batch, rows, vin, vout, bodies, per_sample](const Node<Real>& self) {
        for (std::size_t n = 0; n < batch; ++n) {
          const Real* ap = an->value.data() + (per_sample ? n * vout * vin : 0);
          Real* gap = an->requires_grad ? an->grad.data() + (per_sample ? n * vout * vin : 0) : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t xoff = (n * rows + r) * vin * bodies;
            const Real* gb = self.grad.data() + (n * rows + r) * vout * bodies;
            if (xn->requires_grad) {
              Real* gx = xn->grad.data() + xoff;
              for (std::size_t v = 0; v < vout; ++v) {
                for (std::size_t u = 0; u < vin; ++u) {
                  const Real w = ap[v * vin + u];
                  if (w == Real(0)) continue;
                  for (std::size_t m = 0; m < bodies; ++m) gx[u * bodies + m] += w * gb[v * bodies + m];
                }
              }
            }
            if (gap) {
              const Real* xb = xn->value.data() + xoff;
              for (std::size_t v = 0; v < vout; ++v) {
                for (std::size_t u = 0; u < vin; ++u) {
                  Real acc = 0;
                  for (std::size_t m = 0; m < bodies; ++m) acc += gb[v * bodies + m] * xb[u * bodies + m];
                  gap[v * vin + u] += acc;
                }
              }
            }
          }
        }
      },
      "graph_contract");
}

template <class Real>
Tensor<Real> channel_mix(const Tensor<Real>& x, const Tensor<Real>& weight) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() < 2 || ws.size() != 2 || ws[1] != xs[1]) shape_mismatch("channel_mix", xs, ws);
  const std::size_t batch = xs[0];
  const std::size_t cin = xs[1];
  const std::size_t cout = ws[0];
  const std::size_t inner = x.numel() / (batch * cin);
  Shape out_shape = xs;
  out_shape[1] = cout;
  std::vector<Real> out(batch * cout * inner, Real(0));
  const Real* xv = x.values().data();
  const Real* wv = weight.values().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      Real* __restrict ob = out.data() + (n * cout + o) * inner;
      for (std::size_t c = 0; c < cin; ++c) {
        const Real w = wv[o * cin + c];
        axpy(inner, w, xv + (n * cin + c) * inner, ob);
      }
    }
  }
  auto xn = x.node();
  auto wn = weight.node();
  return Tensor<Real>::record(
      std::move(out_shape), std::move(out), {x, weight},
      [xn, wn, batch, cin, cout, inner](const Node<Real>& self) {
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t o = 0; o < cout; ++o) {
            const Real* gb = self.grad.data() + (n * cout + o) * inner;
            for (std::size_t c = 0; c < cin; ++c) {
              if (xn->requires_grad) {
                axpy(inner, wn->value[o * cin + c], gb, xn->grad.data() + (n * cin + c) * inner);
              }
              if (wn->requires_grad) {
                wn->grad[o * cin + c] += dot(inner, gb, xn->value.data() + (n * cin + c) * inner);
              }
            }
          }
        }
      },
      "channel_mix");
}

template <class Real>
Tensor<Real> temporal_conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel, std::size_t stride) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 5 || ks.size() != 3 || ks[1] != xs[1]) shape_mismatch("temporal_conv1d", xs, ks);
  if (ks[2] % 2 == 0) throw ShapeError("temporal_conv1d: kernel size must be odd, got " + std::to_string(ks[2]));
  if (stride == 0) throw ShapeError("temporal_conv1d: stride must be positive");
  const ConvGeometry geo(xs, ks, stride);
  Shape out_shape{geo.batch, geo.cout, geo.out_frames, xs[3], xs[4]};
  const std::size_t cols = geo.out_frames * geo.span;
  const std::size_t rows = geo.cin * geo.taps;

  std::vector<Real> phased = geo.to_phases(x.values());
  std::vector<Real> out(numel(out_shape), Real(0));
  const Real* kv = kernel.values().data();
  // Row r = c*taps + k of the reduction; weights of row r for output o sit at
  // kv[o*rows + r].
  std::vector<std::size_t> row_offset(rows);
  for (std::size_t c = 0; c < geo.cin; ++c) {
    for (std::size_t k = 0; k < geo.taps; ++k) row_offset[c * geo.taps + k] = geo.group(0, c) + geo.tap_offset(k);
  }
  std::vector<const Real*> xr(rows);
  std::vector<const Real*> wr(rows);
  std::vector<Real> wt(rows * 4);
  for (std::size_t n = 0; n < geo.batch; ++n) {
    const Real* xbase = phased.data() + geo.group(n, 0);
    for_blocks<4>(geo.cout, [&]<int B>(std::size_t o) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < B; ++j) wt[r * B + j] = kv[(o + j) * rows + r];
        wr[r] = wt.data() + r * B;
      }
      for_columns(0, cols, [&]<int L>(std::size_t col) {
        for (std::size_t r = 0; r < rows; ++r) xr[r] = xbase + row_offset[r] + col;
        Real* y[B];
        for (int j = 0; j < B; ++j) y[j] = out.data() + (n * geo.cout + o + j) * cols + col;
        tile_accumulate<B, L>(rows, xr.data(), wr.data(), y);
      });
    });
  }
  auto xn = x.node();
  auto kn = kernel.node();
  return Tensor<Real>::record(
      std::move(out_shape), std::move(out), {x, kernel},
      [xn, kn, geo, phased = std::move(phased)](const Node<Real>& self) {
        const std::size_t cols = geo.out_frames * geo.span;
        const std::size_t rows = geo.cin * geo.taps;
        const Real* kv = kn->value.data();
        // Output gradient padded by `margin` frames on both sides.
        const std::size_t gplane = geo.plane_size();
        const std::size_t gmargin = geo.margin * geo.span;
        std::vector<Real> gp(geo.batch * geo.cout * gplane, Real(0));
        for (std::size_t b = 0; b < geo.batch * geo.cout; ++b) {
          std::copy(self.grad.data() + b * cols, self.grad.data() + (b + 1) * cols, gp.data() + b * gplane + gmargin);
        }
        if (xn->requires_grad) {
          std::vector<Real> gx(geo.input_size(), Real(0));
          const std::size_t first = geo.margin * geo.span;
          const std::size_t last = first + cols;
          for (std::size_t p = 0; p < geo.stride; ++p) {
            std::vector<std::size_t> phase_taps;
            for (std::size_t k = 0; k < geo.taps; ++k) {
              if (geo.tap[k].phase == p) phase_taps.push_back(k);
            }
            const std::size_t prow = geo.cout * phase_taps.size();
            if (prow == 0) continue;
            std::vector<const Real*> gr(prow);
            std::vector<const Real*> wr(prow);
            std::vector<Real> wt(prow * 4);
            for (std::size_t n = 0; n < geo.batch; ++n) {
              for_blocks<4>(geo.cin, [&]<int B>(std::size_t c) {
                for (std::size_t o = 0; o < geo.cout; ++o) {
                  for (std::size_t i = 0; i < phase_taps.size(); ++i) {
                    const std::size_t r = o * phase_taps.size() + i;
                    for (int j = 0; j < B; ++j) wt[r * B + j] = kv[(o * geo.cin + c + j) * geo.taps + phase_taps[i]];
                    wr[r] = wt.data() + r * B;
                  }
                }
                for_columns(first, last, [&]<int L>(std::size_t col) {
                  for (std::size_t o = 0; o < geo.cout; ++o) {
                    for (std::size_t i = 0; i < phase_taps.size(); ++i) {
                      const std::ptrdiff_t shift = geo.tap[phase_taps[i]].shift * static_cast<std::ptrdiff_t>(geo.span);
                      gr[o * phase_taps.size() + i] =
                          gp.data() + (n * geo.cout + o) * gplane + static_cast<std::ptrdiff_t>(col) - shift;
                    }
                  }
                  Real* y[B];
                  for (int j = 0; j < B; ++j) y[j] = gx.data() + geo.group(n, c + j) + p * geo.plane_size() + col;
                  tile_accumulate<B, L>(prow, gr.data(), wr.data(), y);
                });
              });
            }
          }
          geo.add_from_phases(gx, xn->grad);
        }
        if (kn->requires_grad) {
          for (std::size_t n = 0; n < geo.batch; ++n) {
            for (std::size_t o = 0; o < geo.cout; ++o) {
              const Real* g = gp.data() + (n * geo.cout + o) * gplane + gmargin;
              for (std::size_t c = 0; c < geo.cin; ++c) {
                for (std::size_t k = 0; k < geo.taps; ++k) {
                  const Real* xrun = phased.data() + geo.group(n, c) + geo.tap_offset(k);
                  kn->grad[o * rows + c * geo.taps + k] += dot(cols, g, xrun);
                }
              }
            }
          }
        }
      },
      "temporal_conv1d");
}

template <class Real>
Tensor<Real> temporal_window(const Tensor<Real>& x, std::size_t window) {
  const Shape& xs = x.shape();
  if (xs.size() != 5) throw ShapeError("temporal_window expects (N,C,T,V,M), got " + shape_string(xs));
  if (window % 2 == 0) throw ShapeError("temporal_window: window must be odd, got " + std::to_string(window));
  const std::size_t blocks = xs[0] * xs[1];
  const std::size_t frames = xs[2];
  const std::size_t span = xs[3] * xs[4];
  const std::size_t pad = (window - 1) / 2;
  Shape out_shape{xs[0], xs[1], frames, window * xs[3], xs[4]};
  std::vector<Real> out(numel(out_shape), Real(0));
  const Real* xv = x.values().data();
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f < window; ++f) {
        if (t + f < pad || t + f - pad >= frames) continue;
        const Real* src = xv + (b * frames + t + f - pad) * span;
        Real* dst = out.data() + ((b * frames + t) * window + f) * span;
        std::copy(src, src + span, dst);
      }
    }
  }
  auto xn = x.node();
  return Tensor<Real>::record(
      std::move(out_shape), std::move(out), {x},
      [xn, blocks, frames, span, window, pad](const Node<Real>& self) {
        for (std::size_t b = 0; b < blocks; ++b) {
          for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t f = 0; f < window; ++f) {
              if (t + f < pad || t + f - pad >= frames) continue;
              Real* dst = xn->grad.data() + (b * frames + t + f - pad) * span;
              const Real* src = self.grad.data() + ((b * frames + t) * window + f) * span;
              for (std::size_t s = 0; s < span; ++s) dst[s] += src[s];
            }
          }
        }
      },
      "temporal_window");
}

template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, const std::vector<std::size_t>& labels) {
  const Shape& ls = logits.shape();
  if (ls.size() != 2 || ls[0] != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_string(ls) + " do not match " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t batch = ls[0];
  const std::size_t classes = ls[1];
  for (std::size_t label : labels) {
    if (label >= classes) {
      throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
  const auto lv = logits.values();
  std::vector<Real> probs(lv.size());
  Real loss = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    const Real* row = lv.data() + n * classes;
    const Real peak = *std::max_element(row, row + classes);
    Real total = 0;
    for (std::size_t j = 0; j < classes; ++j) total += std::exp(row[j] - peak);
    for (std::size_t j = 0; j < classes; ++j) probs[n * classes + j] = std::exp(row[j] - peak) / total;
    loss += std::log(total) + peak - row[labels[n]];
  }
  loss /= static_cast<Real>(batch);
  auto ln = logits.node();
  return Tensor<Real>::record(
      Shape{1}, std::vector<Real>{loss}, {logits},
      [ln, probs = std::move(probs), labels, batch, classes](const Node<Real>& self) {
        const Real g = self.grad[0] / static_cast<Real>(batch);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t j = 0; j < classes; ++j) {
            const Real target = j == labels[n] ? Real(1) : Real(0);
            ln->grad[n * classes + j] += g * (probs[n * classes + j] - target);
          }
        }
      },
      "cross_entropy");
}

#define SKAR_INSTANTIATE(Real)                                                                          \
  template class Tensor<Real>;                                                                          \
  template void backward(const Tensor<Real>&);                                                          \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                               \
  template Tensor<Real> relu(const Tensor<Real>&);                                                      \
  template Tensor<Real> softmax(const Tensor<Real>&, std::size_t);                                      \
  template Tensor<Real> mean(const Tensor<Real>&, const std::vector<std::size_t>&);                     \
  template Tensor<Real> sum(const Tensor<Real>&);                                                       \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                            \
  template Tensor<Real> transpose(const Tensor<Real>&);                                                 \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                               \
  template Tensor<Real> graph_contract(const Tensor<Real>&, const Tensor<Real>&);                       \
  template Tensor<Real> channel_mix(const Tensor<Real>&, const Tensor<Real>&);                          \
  template Tensor<Real> temporal_conv1d(const Tensor<Real>&, const Tensor<Real>&, std::size_t);         \
  template Tensor<Real> temporal_window(const Tensor<Real>&, std::size_t);                              \
  template Tensor<Real> cross_entropy(const Tensor<Real>&, const std::vector<std::size_t>&);

SKAR_INSTANTIATE(double)
SKAR_INSTANTIATE(long double)

#undef SKAR_INSTANTIATE

}  // namespace skar
