#pragma once

// Spatial aggregation rules (fixed, adaptive, multi-scale, windowed
// spatial-temporal), the temporal convolution and the classification head,
// all over features laid out as (N, C, T, V, M).

#include <cstddef>
#include <string>
#include <vector>

#include "skar/skelgraph.hpp"
#include "skar/tensor.hpp"

namespace skar {

enum class LayerKind { spatial_gcn, adaptive_gcn, ms_gcn, g3d, temporal_conv, head };
enum class Activation { relu, none };
enum class RoleTag { spatial, temporal, adaptive, head, embedding };

std::string to_string(LayerKind kind);
std::string to_string(RoleTag role);
RoleTag parse_role_tag(const std::string& text);

struct LayerSpec {
  LayerKind kind = LayerKind::spatial_gcn;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t temporal_kernel = 9;
  std::size_t temporal_stride = 1;
  std::size_t num_scales = 1;  // ms_gcn
  std::size_t window = 1;      // g3d
  Activation activation = Activation::relu;
  bool residual = true;  // identity shortcut, used only when shapes allow

  void validate() const;
};

template <class Real>
class Parameter {
 public:
  Parameter(std::string name, Tensor<Real> tensor, RoleTag role)
      : name_(std::move(name)), tensor_(std::move(tensor)), role_(role) {
    tensor_.set_requires_grad(true);
  }

  const std::string& name() const { return name_; }
  RoleTag role() const { return role_; }
  Tensor<Real>& tensor() { return tensor_; }
  const Tensor<Real>& tensor() const { return tensor_; }
  bool trainable() const { return tensor_.requires_grad(); }
  void set_trainable(bool flag) { tensor_.set_requires_grad(flag); }

 private:
  std::string name_;
  Tensor<Real> tensor_;
  RoleTag role_;
};

template <class Real>
Tensor<Real> adjacency_tensor(const NormalizedAdjacency& a);

// normalize(k_adjacency(A, k)) for k = 1..scales.
std::vector<NormalizedAdjacency> multiscale_operators(const AdjacencyMatrix& a, std::size_t scales);

// Center-frame rows of the normalized windowed adjacency: a [V, window*V]
// operator applied to temporal_window(X, window).
NormalizedAdjacency g3d_operator(const AdjacencyMatrix& a, std::size_t window);

template <class Real>
Tensor<Real> activate(const Tensor<Real>& x, Activation activation);

// sigma(W . (A_hat X)), aggregating joints first and then mixing channels.
template <class Real>
Tensor<Real> spatial_gcn_forward(const Tensor<Real>& x, const Tensor<Real>& a_hat, const Tensor<Real>& weight,
                                 Activation activation);

// Row-softmax of the embedded dot product between joints, computed per batch
// element from features pooled over frames and bodies. theta, phi: [C, C_e].
template <class Real>
Tensor<Real> similarity_matrix(const Tensor<Real>& x, const Tensor<Real>& theta, const Tensor<Real>& phi);

template <class Real>
struct AdaptiveGcParams {
  Tensor<Real> b;      // [V, V], learned, starts at zero
  Tensor<Real> theta;  // [C, C_e]
  Tensor<Real> phi;    // [C, C_e]
  Tensor<Real> weight; // [C_out, C]
};

// sigma(W . ((A_hat + B + C) X)). With use_similarity false the C term is
// left out entirely.
template <class Real>
Tensor<Real> adaptive_gcn_forward(const Tensor<Real>& x, const Tensor<Real>& a_hat, const AdaptiveGcParams<Real>& params,
                                  Activation activation, bool use_similarity = true);

// sigma(sum_k W_k . (A_k X)) over precomputed per-scale operators.
template <class Real>
Tensor<Real> ms_gcn_forward(const Tensor<Real>& x, const std::vector<Tensor<Real>>& scale_operators,
                            const std::vector<Tensor<Real>>& weights, Activation activation);

template <class Real>
Tensor<Real> ms_gcn_forward(const Tensor<Real>& x, const AdjacencyMatrix& a, const std::vector<Tensor<Real>>& weights,
                            Activation activation);

// Windowed spatial-temporal aggregation with a dense temporal window.
template <class Real>
Tensor<Real> g3d_forward(const Tensor<Real>& x, const Tensor<Real>& window_operator, std::size_t window,
                         const Tensor<Real>& weight, Activation activation);

template <class Real>
Tensor<Real> g3d_forward(const Tensor<Real>& x, const AdjacencyMatrix& a, std::size_t window,
                         const Tensor<Real>& weight, Activation activation);

// Fixed graph operators shared by every block of a model.
template <class Real>
struct GraphOperators {
  Tensor<Real> a_hat;                      // normalize(A + I)
  std::vector<Tensor<Real>> scales;        // ms_gcn operators
  Tensor<Real> window_operator;            // g3d operator
  std::size_t window = 1;

  static GraphOperators build(const AdjacencyMatrix& a, std::size_t num_scales, std::size_t window);
};

// Trainable tensors of one block; unused members stay empty.
template <class Real>
struct BlockParams {
  std::vector<Tensor<Real>> spatial;  // one W, or one per scale for ms_gcn
  Tensor<Real> g3d_weight;
  Tensor<Real> b;
  Tensor<Real> theta;
  Tensor<Real> phi;
  Tensor<Real> temporal;  // [C_out, C_out, K]
};

// spatial rule -> activation -> temporal_conv1d -> (+ identity) -> activation.
// For kind == ms_gcn the block sums the multi-scale and windowed pathways.
template <class Real>
Tensor<Real> stgcn_block(const Tensor<Real>& x, const LayerSpec& spec, const GraphOperators<Real>& ops,
                         const BlockParams<Real>& params);

// Global average pool over (T, V, M) then a fully connected map to
// class logits; weight is [classes, C].
template <class Real>
Tensor<Real> head_logits(const Tensor<Real>& x, const Tensor<Real>& weight);

template <class Real>
Tensor<Real> head_forward(const Tensor<Real>& x, const Tensor<Real>& weight);

}  // namespace skar
