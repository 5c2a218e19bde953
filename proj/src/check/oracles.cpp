#include "skar/check/oracles.hpp"

#include <cmath>

namespace skar::oracle {

Matrix normalize(const AdjacencyMatrix& a, bool add_self_loops) {
  const std::size_t n = a.size();
  Matrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] = (a(i, j) || (add_self_loops && i == j)) ? 1.0 : 0.0;
  }
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) degree[i] += m[i][j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (m[i][j] == 0.0) continue;
      m[i][j] = 1.0 / (std::sqrt(degree[i]) * std::sqrt(degree[j]));
    }
  }
  return m;
}

std::vector<std::vector<int>> shortest_paths(const AdjacencyMatrix& a) {
  const std::size_t n = a.size();
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && a(i, j)) d[i][j] = 1;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
      }
    }
  }
  for (auto& row : d) {
    for (int& v : row) {
      if (v >= inf) v = -1;
    }
  }
  return d;
}

std::vector<std::vector<int>> k_adjacency(const AdjacencyMatrix& a, std::size_t k) {
  const auto d = shortest_paths(a);
  const std::size_t n = a.size();
  std::vector<std::vector<int>> out(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i][j] = (i == j || d[i][j] == static_cast<int>(k)) ? 1 : 0;
  }
  return out;
}

std::vector<double> graph_contract(const std::vector<double>& x, const Dims& d, const Matrix& a) {
  const std::size_t vo = a.size();
  Dims od{d.n, d.c, d.t, vo, d.m};
  std::vector<double> out(od.size(), 0.0);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t t = 0; t < d.t; ++t) {
        for (std::size_t v = 0; v < vo; ++v) {
          for (std::size_t m = 0; m < d.m; ++m) {
            double acc = 0.0;
            for (std::size_t u = 0; u < d.v; ++u) acc += a[v][u] * x[d.at(n, c, t, u, m)];
            out[od.at(n, c, t, v, m)] = acc;
          }
        }
      }
    }
  }
  return out;
}

std::vector<double> channel_mix(const std::vector<double>& x, const Dims& d, const Matrix& w) {
  const std::size_t co = w.size();
  Dims od{d.n, co, d.t, d.v, d.m};
  std::vector<double> out(od.size(), 0.0);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t t = 0; t < d.t; ++t) {
        for (std::size_t v = 0; v < d.v; ++v) {
          for (std::size_t m = 0; m < d.m; ++m) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d.c; ++c) acc += w[o][c] * x[d.at(n, c, t, v, m)];
            out[od.at(n, o, t, v, m)] = acc;
          }
        }
      }
    }
  }
  return out;
}

std::vector<double> temporal_conv(const std::vector<double>& x, const Dims& d,
                                  const std::vector<std::vector<std::vector<double>>>& kernel, std::size_t stride) {
  const std::size_t co = kernel.size();
  const std::size_t taps = kernel[0][0].size();
  const long pad = static_cast<long>(taps / 2);
  const std::size_t to = (d.t + stride - 1) / stride;
  Dims od{d.n, co, to, d.v, d.m};
  std::vector<double> out(od.size(), 0.0);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t t = 0; t < to; ++t) {
        for (std::size_t v = 0; v < d.v; ++v) {
          for (std::size_t m = 0; m < d.m; ++m) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d.c; ++c) {
              for (std::size_t k = 0; k < taps; ++k) {
                const long f = static_cast<long>(t * stride + k) - pad;
                if (f < 0 || f >= static_cast<long>(d.t)) continue;
                acc += kernel[o][c][k] * x[d.at(n, c, static_cast<std::size_t>(f), v, m)];
              }
            }
            out[od.at(n, o, t, v, m)] = acc;
          }
        }
      }
    }
  }
  return out;
}

std::vector<Matrix> similarity(const std::vector<double>& x, const Dims& d, const Matrix& theta, const Matrix& phi) {
  const std::size_t e = theta[0].size();
  std::vector<Matrix> out;
  for (std::size_t n = 0; n < d.n; ++n) {
    Matrix feat(d.v, std::vector<double>(d.c, 0.0));
    for (std::size_t v = 0; v < d.v; ++v) {
      for (std::size_t c = 0; c < d.c; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < d.t; ++t) {
          for (std::size_t m = 0; m < d.m; ++m) acc += x[d.at(n, c, t, v, m)];
        }
        feat[v][c] = acc / static_cast<double>(d.t * d.m);
      }
    }
    Matrix q(d.v, std::vector<double>(e, 0.0));
    Matrix k(d.v, std::vector<double>(e, 0.0));
    for (std::size_t v = 0; v < d.v; ++v) {
      for (std::size_t j = 0; j < e; ++j) {
        for (std::size_t c = 0; c < d.c; ++c) {
          q[v][j] += feat[v][c] * theta[c][j];
          k[v][j] += feat[v][c] * phi[c][j];
        }
      }
    }
    Matrix s(d.v, std::vector<double>(d.v, 0.0));
    for (std::size_t i = 0; i < d.v; ++i) {
      std::vector<double> logits(d.v, 0.0);
      double top = -INFINITY;
      for (std::size_t j = 0; j < d.v; ++j) {
        for (std::size_t h = 0; h < e; ++h) logits[j] += q[i][h] * k[j][h];
        top = std::max(top, logits[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < d.v; ++j) total += std::exp(logits[j] - top);
      for (std::size_t j = 0; j < d.v; ++j) s[i][j] = std::exp(logits[j] - top) / total;
    }
    out.push_back(s);
  }
  return out;
}

std::vector<double> relu(std::vector<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

std::vector<double> spatial_gcn(const std::vector<double>& x, const Dims& d, const AdjacencyMatrix& a, const Matrix& w,
                                bool relu_out) {
  auto out = channel_mix(graph_contract(x, d, normalize(a, true)), d, w);
  return relu_out ? relu(out) : out;
}

std::vector<double> ms_gcn(const std::vector<double>& x, const Dims& d, const AdjacencyMatrix& a,
                           const std::vector<Matrix>& weights, bool relu_out) {
  std::vector<double> total;
  for (std::size_t k = 1; k <= weights.size(); ++k) {
    const auto hops = oracle::k_adjacency(a, k);
    AdjacencyMatrix ak(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = i; j < a.size(); ++j) ak.set(i, j, hops[i][j] != 0);
    }
    const auto term = channel_mix(graph_contract(x, d, normalize(ak, false)), d, weights[k - 1]);
    if (total.empty()) {
      total = term;
    } else {
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += term[i];
    }
  }
  return relu_out ? relu(total) : total;
}

std::vector<double> g3d(const std::vector<double>& x, const Dims& d, const AdjacencyMatrix& a, std::size_t window,
                        const Matrix& w, bool relu_out) {
  const std::size_t v = d.v;
  const std::size_t nodes = window * v;
  Matrix big(nodes, std::vector<double>(nodes, 0.0));
  for (std::size_t f = 0; f < window; ++f) {
    for (std::size_t g = 0; g < window; ++g) {
      for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < v; ++j) big[f * v + i][g * v + j] = (i == j || a(i, j)) ? 1.0 : 0.0;
      }
    }
  }
  std::vector<double> degree(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = 0; j < nodes; ++j) degree[i] += big[i][j];
  }
  const std::size_t center = window / 2;
  const long half = static_cast<long>(window / 2);
  Dims hd{d.n, d.c, d.t, v, d.m};
  std::vector<double> hidden(hd.size(), 0.0);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t t = 0; t < d.t; ++t) {
        for (std::size_t i = 0; i < v; ++i) {
          for (std::size_t m = 0; m < d.m; ++m) {
            double acc = 0.0;
            const std::size_t row = center * v + i;
            for (std::size_t f = 0; f < window; ++f) {
              const long frame = static_cast<long>(t + f) - half;
              if (frame < 0 || frame >= static_cast<long>(d.t)) continue;
              for (std::size_t j = 0; j < v; ++j) {
                const std::size_t col = f * v + j;
                if (big[row][col] == 0.0) continue;
                const double weight = 1.0 / std::sqrt(degree[row] * degree[col]);
                acc += weight * x[d.at(n, c, static_cast<std::size_t>(frame), j, m)];
              }
            }
            hidden[hd.at(n, c, t, i, m)] = acc;
          }
        }
      }
    }
  }
  auto out = channel_mix(hidden, d, w);
  return relu_out ? relu(out) : out;
}

}  // namespace skar::oracle
