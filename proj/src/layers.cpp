#include "skar/layers.hpp"

#include "skar/error.hpp"

namespace skar {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::spatial_gcn: return "spatial_gcn";
    case LayerKind::adaptive_gcn: return "adaptive_gcn";
    case LayerKind::ms_gcn: return "ms_gcn";
    case LayerKind::g3d: return "g3d";
    case LayerKind::temporal_conv: return "temporal_conv";
    case LayerKind::head: return "head";
  }
  return "unknown";
}

std::string to_string(RoleTag role) {
  switch (role) {
    case RoleTag::spatial: return "spatial";
    case RoleTag::temporal: return "temporal";
    case RoleTag::adaptive: return "adaptive";
    case RoleTag::head: return "head";
    case RoleTag::embedding: return "embedding";
  }
  return "unknown";
}

RoleTag parse_role_tag(const std::string& text) {
  for (RoleTag role : {RoleTag::spatial, RoleTag::temporal, RoleTag::adaptive, RoleTag::head, RoleTag::embedding}) {
    if (to_string(role) == text) return role;
  }
  throw DataError("unknown role tag '" + text + "'");
}

void LayerSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ShapeError("layer channel counts must be positive");
  if (temporal_kernel % 2 == 0) throw ShapeError("temporal kernel must be odd");
  if (window % 2 == 0) throw ShapeError("g3d window must be odd");
  if (temporal_stride == 0) throw ShapeError("temporal stride must be positive");
  if (num_scales == 0) throw ShapeError("ms_gcn needs at least one scale");
}

template <class Real>
Tensor<Real> adjacency_tensor(const NormalizedAdjacency& a) {
  std::vector<Real> values(a.entries().begin(), a.entries().end());
  return Tensor<Real>(Shape{a.rows(), a.cols()}, std::move(values));
}

std::vector<NormalizedAdjacency> multiscale_operators(const AdjacencyMatrix& a, std::size_t scales) {
  std::vector<NormalizedAdjacency> out;
  out.reserve(scales);
  for (std::size_t k = 1; k <= scales; ++k) out.push_back(normalize_adjacency(k_adjacency(a, k), false));
  return out;
}

NormalizedAdjacency g3d_operator(const AdjacencyMatrix& a, std::size_t window) {
  if (window % 2 == 0) throw ShapeError("g3d window must be odd, got " + std::to_string(window));
  const std::size_t m = a.size();
  const NormalizedAdjacency full = normalize_adjacency(windowed_adjacency(a, window), false);
  const std::size_t center = (window - 1) / 2;
  NormalizedAdjacency rows(m, window * m);
  for (std::size_t v = 0; v < m; ++v) {
    for (std::size_t j = 0; j < window * m; ++j) rows(v, j) = full(center * m + v, j);
  }
  return rows;
}

template <class Real>
Tensor<Real> activate(const Tensor<Real>& x, Activation activation) {
  return activation == Activation::relu ? relu(x) : x;
}

template <class Real>
Tensor<Real> spatial_gcn_forward(const Tensor<Real>& x, const Tensor<Real>& a_hat, const Tensor<Real>& weight,
                                 Activation activation) {
  return activate(channel_mix(graph_contract(x, a_hat), weight), activation);
}

template <class Real>
Tensor<Real> similarity_matrix(const Tensor<Real>& x, const Tensor<Real>& theta, const Tensor<Real>& phi) {
  const Tensor<Real> joints = transpose(mean(x, {2, 4}));  // [N, V, C]
  const Tensor<Real> query = matmul(joints, theta);
  const Tensor<Real> key = matmul(joints, phi);
  return softmax(matmul(query, transpose(key)), 2);
}

template <class Real>
Tensor<Real> adaptive_gcn_forward(const Tensor<Real>& x, const Tensor<Real>& a_hat, const AdaptiveGcParams<Real>& params,
                                  Activation activation, bool use_similarity) {
  Tensor<Real> adjacency = add(a_hat, params.b);
  if (use_similarity) adjacency = add(similarity_matrix(x, params.theta, params.phi), adjacency);
  return activate(channel_mix(graph_contract(x, adjacency), params.weight), activation);
}

template <class Real>
Tensor<Real> ms_gcn_forward(const Tensor<Real>& x, const std::vector<Tensor<Real>>& scale_operators,
                            const std::vector<Tensor<Real>>& weights, Activation activation) {
  if (scale_operators.empty() || scale_operators.size() != weights.size()) {
    throw ShapeError("ms_gcn: " + std::to_string(scale_operators.size()) + " scales but " +
                     std::to_string(weights.size()) + " weights");
  }
  Tensor<Real> total = channel_mix(graph_contract(x, scale_operators[0]), weights[0]);
  for (std::size_t k = 1; k < weights.size(); ++k) {
    total = add(total, channel_mix(graph_contract(x, scale_operators[k]), weights[k]));
  }
  return activate(total, activation);
}

template <class Real>
Tensor<Real> ms_gcn_forward(const Tensor<Real>& x, const AdjacencyMatrix& a, const std::vector<Tensor<Real>>& weights,
                            Activation activation) {
  std::vector<Tensor<Real>> operators;
  for (const auto& op : multiscale_operators(a, weights.size())) operators.push_back(adjacency_tensor<Real>(op));
  return ms_gcn_forward(x, operators, weights, activation);
}

template <class Real>
Tensor<Real> g3d_forward(const Tensor<Real>& x, const Tensor<Real>& window_operator, std::size_t window,
                         const Tensor<Real>& weight, Activation activation) {
  if (window > x.dim(2)) {
    throw ShapeError("g3d window " + std::to_string(window) + " exceeds " + std::to_string(x.dim(2)) + " frames");
  }
  return activate(channel_mix(graph_contract(temporal_window(x, window), window_operator), weight), activation);
}

template <class Real>
Tensor<Real> g3d_forward(const Tensor<Real>& x, const AdjacencyMatrix& a, std::size_t window,
                         const Tensor<Real>& weight, Activation activation) {
  return g3d_forward(x, adjacency_tensor<Real>(g3d_operator(a, window)), window, weight, activation);
}

template <class Real>
GraphOperators<Real> GraphOperators<Real>::build(const AdjacencyMatrix& a, std::size_t num_scales,
                                                 std::size_t window) {
  GraphOperators ops;
  ops.a_hat = adjacency_tensor<Real>(normalize_adjacency(a, true));
  for (const auto& op : multiscale_operators(a, num_scales)) ops.scales.push_back(adjacency_tensor<Real>(op));
  ops.window_operator = adjacency_tensor<Real>(g3d_operator(a, window));
  ops.window = window;
  return ops;
}

template <class Real>
Tensor<Real> stgcn_block(const Tensor<Real>& x, const LayerSpec& spec, const GraphOperators<Real>& ops,
                         const BlockParams<Real>& params) {
  spec.validate();
  if (x.dim(1) != spec.in_channels) {
    throw ShapeError("block expects " + std::to_string(spec.in_channels) + " channels, input has shape " +
                     shape_string(x.shape()));
  }
  Tensor<Real> hidden;
  switch (spec.kind) {
    case LayerKind::spatial_gcn:
      hidden = spatial_gcn_forward(x, ops.a_hat, params.spatial.at(0), spec.activation);
      break;
    case LayerKind::adaptive_gcn:
      hidden = adaptive_gcn_forward(x, ops.a_hat, {params.b, params.theta, params.phi, params.spatial.at(0)},
                                    spec.activation);
      break;
    case LayerKind::ms_gcn: {
      Tensor<Real> multiscale = ms_gcn_forward(x, ops.scales, params.spatial, Activation::none);
      Tensor<Real> windowed = g3d_forward(x, ops.window_operator, ops.window, params.g3d_weight, Activation::none);
      hidden = activate(add(multiscale, windowed), spec.activation);
      break;
    }
    case LayerKind::g3d:
      hidden = g3d_forward(x, ops.window_operator, ops.window, params.g3d_weight, spec.activation);
      break;
    case LayerKind::temporal_conv:
      hidden = x;
      break;
    case LayerKind::head:
      throw ShapeError("the head is not a block kind");
  }
  Tensor<Real> out = temporal_conv1d(hidden, params.temporal, spec.temporal_stride);
  if (spec.residual && spec.in_channels == spec.out_channels && spec.temporal_stride == 1) out = add(out, x);
  return activate(out, spec.activation);
}

template <class Real>
Tensor<Real> head_logits(const Tensor<Real>& x, const Tensor<Real>& weight) {
  return matmul(mean(x, {2, 3, 4}), transpose(weight));
}

template <class Real>
Tensor<Real> head_forward(const Tensor<Real>& x, const Tensor<Real>& weight) {
  return softmax(head_logits(x, weight), 1);
}

#define SKAR_INSTANTIATE(Real)                                                                                     \
  template Tensor<Real> adjacency_tensor<Real>(const NormalizedAdjacency&);                                        \
  template Tensor<Real> activate(const Tensor<Real>&, Activation);                                                 \
  template Tensor<Real> spatial_gcn_forward(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,         \
                                            Activation);                                                           \
  template Tensor<Real> similarity_matrix(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);          \
  template Tensor<Real> adaptive_gcn_forward(const Tensor<Real>&, const Tensor<Real>&,                             \
                                             const AdaptiveGcParams<Real>&, Activation, bool);                     \
  template Tensor<Real> ms_gcn_forward(const Tensor<Real>&, const std::vector<Tensor<Real>>&,                      \
                                       const std::vector<Tensor<Real>>&, Activation);                              \
  template Tensor<Real> ms_gcn_forward(const Tensor<Real>&, const AdjacencyMatrix&,                                \
                                       const std::vector<Tensor<Real>>&, Activation);                              \
  template Tensor<Real> g3d_forward(const Tensor<Real>&, const Tensor<Real>&, std::size_t, const Tensor<Real>&,    \
                                    Activation);                                                                   \
  template Tensor<Real> g3d_forward(const Tensor<Real>&, const AdjacencyMatrix&, std::size_t, const Tensor<Real>&, \
                                    Activation);                                                                   \
  template struct GraphOperators<Real>;                                                                            \
  template Tensor<Real> stgcn_block(const Tensor<Real>&, const LayerSpec&, const GraphOperators<Real>&,            \
                                    const BlockParams<Real>&);                                                     \
  template Tensor<Real> head_logits(const Tensor<Real>&, const Tensor<Real>&);                                     \
  template Tensor<Real> head_forward(const Tensor<Real>&, const Tensor<Real>&);

SKAR_INSTANTIATE(double)
SKAR_INSTANTIATE(long double)

#undef SKAR_INSTANTIATE

}  // namespace skar
