#pragma once

// Straightforward scalar-loop reference implementations used to cross-check
// the optimized kernels. They share no code with the library besides the
// binary adjacency container.

#include <cstddef>
#include <vector>

#include "skar/skelgraph.hpp"

namespace skar::oracle {

using Matrix = std::vector<std::vector<double>>;

struct Dims {
  std::size_t n, c, t, v, m;
  std::size_t size() const { return n * c * t * v * m; }
  std::size_t at(std::size_t in, std::size_t ic, std::size_t it, std::size_t iv, std::size_t im) const {
    return (((in * c + ic) * t + it) * v + iv) * m + im;
  }
};

// D^{-1/2} A' D^{-1/2}, computed entry by entry.
Matrix normalize(const AdjacencyMatrix& a, bool add_self_loops);

// All-pairs hop counts by Floyd-Warshall; unreachable pairs get -1.
std::vector<std::vector<int>> shortest_paths(const AdjacencyMatrix& a);

// 1 where the hop distance is exactly k, plus the diagonal.
std::vector<std::vector<int>> k_adjacency(const AdjacencyMatrix& a, std::size_t k);

std::vector<double> graph_contract(const std::vector<double>& x, const Dims& d, const Matrix& a);

// out[n,o,...] = sum_c w[o][c] x[n,c,...]
std::vector<double> channel_mix(const std::vector<double>& x, const Dims& d, const Matrix& w);

// kernel indexed [o][c][k].
std::vector<double> temporal_conv(const std::vector<double>& x, const Dims& d,
                                  const std::vector<std::vector<std::vector<double>>>& kernel, std::size_t stride);

// Per-sample softmax(q k^T) over joints, with joint features averaged over
// frames and bodies; result indexed [n][i][j].
std::vector<Matrix> similarity(const std::vector<double>& x, const Dims& d, const Matrix& theta, const Matrix& phi);

std::vector<double> relu(std::vector<double> x);

std::vector<double> spatial_gcn(const std::vector<double>& x, const Dims& d, const AdjacencyMatrix& a, const Matrix& w,
                                bool relu_out);

// Sum over scales k = 1..K of contraction with normalize(k_adjacency(A, k))
// followed by W_k.
std::vector<double> ms_gcn(const std::vector<double>& x, const Dims& d, const AdjacencyMatrix& a,
                           const std::vector<Matrix>& weights, bool relu_out);

// Windowed-graph convolution: every joint of the window frames connects to
// every A+I neighbor in every window frame; the center frame is emitted.
std::vector<double> g3d(const std::vector<double>& x, const Dims& d, const AdjacencyMatrix& a, std::size_t window,
                        const Matrix& w, bool relu_out);

}  // namespace skar::oracle
