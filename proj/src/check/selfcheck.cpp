#include "skar/check/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>

#include "skar/check/oracles.hpp"
#include "skar/layers.hpp"
#include "skar/random.hpp"
#include "skar/skelgraph.hpp"
#include "skar/tensor.hpp"

namespace skar::check {
namespace {

using LD = long double;
using Forward = std::function<Tensor<LD>(const std::vector<Tensor<LD>>&)>;

// Random graph on v nodes; a spanning path keeps it connected.
AdjacencyMatrix random_graph(Rng& rng, std::size_t v, double extra_edge_probability) {
  AdjacencyMatrix a(v);
  for (std::size_t i = 1; i < v; ++i) a.set(rng.below(i), i, true);
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = i + 1; j < v; ++j) {
      if (rng.uniform() < extra_edge_probability) a.set(i, j, true);
    }
  }
  return a;
}

template <class Real>
Tensor<Real> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<Real> values(numel(shape));
  for (auto& v : values) v = static_cast<Real>(rng.uniform(-scale, scale));
  return Tensor<Real>(std::move(shape), std::move(values));
}

LD projected_loss(const Forward& f, const std::vector<Tensor<LD>>& inputs, const Tensor<LD>& projection) {
  NoGradGuard no_grad;
  const Tensor<LD> out = f(inputs);
  LD total = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) total += out[i] * projection[i];
  return total;
}

// Worst entrywise relative error between backward and central differences.
double gradient_error(const Forward& f, std::vector<Tensor<LD>> inputs, Rng& rng) {
  for (auto& t : inputs) t.set_requires_grad(true);
  const Tensor<LD> out = f(inputs);
  const Tensor<LD> projection = random_tensor<LD>(rng, out.shape());
  backward(sum(mul(out, projection)));

  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    std::vector<LD> analytic(inputs[which].grad().begin(), inputs[which].grad().end());
    if (analytic.empty()) analytic.assign(inputs[which].numel(), 0);
    for (std::size_t i = 0; i < inputs[which].numel(); ++i) {
      std::vector<Tensor<LD>> shifted = inputs;
      Tensor<LD> probe = inputs[which].detach();
      shifted[which] = probe;
      const LD original = probe[i];
      probe.mutable_values()[i] = original + kGradientStep;
      const LD up = projected_loss(f, shifted, projection);
      probe.mutable_values()[i] = original - kGradientStep;
      const LD down = projected_loss(f, shifted, projection);
      const LD numeric = (up - down) / (2 * kGradientStep);
      const LD scale = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6L});
      worst = std::max(worst, static_cast<double>(std::fabs(analytic[i] - numeric) / scale));
    }
  }
  return worst;
}

struct Instance {
  std::size_t n, c, t, v, m, co;
};

Instance random_instance(Rng& rng, std::size_t min_frames) {
  Instance s;
  s.n = 1 + rng.below(2);
  s.c = 1 + rng.below(3);
  s.t = min_frames + rng.below(3);
  s.v = 3 + rng.below(3);
  s.m = 1 + rng.below(2);
  s.co = 1 + rng.below(3);
  return s;
}

void record(CheckResult& r, double error, double tolerance) {
  ++r.cases;
  r.worst = std::max(r.worst, error);
  if (!(error < tolerance)) r.passed = false;
}

std::vector<double> values_of(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

oracle::Matrix matrix_of(const Tensor<double>& t) {
  oracle::Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  }
  return m;
}

double max_abs_diff(const std::vector<double>& a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

bool bitwise_equal(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed, std::size_t instances) {
  std::vector<CheckResult> results;
  auto run = [&](const std::string& name, std::size_t min_frames,
                 const std::function<std::pair<Forward, std::vector<Tensor<LD>>>(Rng&, const Instance&)>& make) {
    CheckResult r;
    r.name = "gradient " + name;
    Rng rng(derive_seed(seed, results.size()));
    for (std::size_t i = 0; i < instances; ++i) {
      const Instance s = random_instance(rng, min_frames);
      auto [f, inputs] = make(rng, s);
      record(r, gradient_error(f, inputs, rng), kGradientTolerance);
    }
    results.push_back(r);
  };

  run("spatial_gcn", 2, [](Rng& rng, const Instance& s) {
    const auto a_hat = adjacency_tensor<LD>(normalize_adjacency(random_graph(rng, s.v, 0.3), true));
    Forward f = [a_hat](const std::vector<Tensor<LD>>& in) {
      return spatial_gcn_forward(in[0], a_hat, in[1], Activation::relu);
    };
    return std::pair{f, std::vector{random_tensor<LD>(rng, {s.n, s.c, s.t, s.v, s.m}),
                                    random_tensor<LD>(rng, {s.co, s.c})}};
  });
  run("adaptive_gcn", 2, [](Rng& rng, const Instance& s) {
    const auto a_hat = adjacency_tensor<LD>(normalize_adjacency(random_graph(rng, s.v, 0.3), true));
    const std::size_t e = std::max<std::size_t>(1, s.c / 4);
    Forward f = [a_hat](const std::vector<Tensor<LD>>& in) {
      return adaptive_gcn_forward(in[0], a_hat, AdaptiveGcParams<LD>{in[1], in[2], in[3], in[4]}, Activation::relu);
    };
    return std::pair{f, std::vector{random_tensor<LD>(rng, {s.n, s.c, s.t, s.v, s.m}),
                                    random_tensor<LD>(rng, {s.v, s.v}, 0.2), random_tensor<LD>(rng, {s.c, e}),
                                    random_tensor<LD>(rng, {s.c, e}), random_tensor<LD>(rng, {s.co, s.c})}};
  });
  run("ms_gcn K=2", 2, [](Rng& rng, const Instance& s) {
    const AdjacencyMatrix a = random_graph(rng, s.v, 0.2);
    Forward f = [a](const std::vector<Tensor<LD>>& in) {
      return ms_gcn_forward(in[0], a, std::vector{in[1], in[2]}, Activation::relu);
    };
    return std::pair{f, std::vector{random_tensor<LD>(rng, {s.n, s.c, s.t, s.v, s.m}),
                                    random_tensor<LD>(rng, {s.co, s.c}), random_tensor<LD>(rng, {s.co, s.c})}};
  });
  run("g3d window=3", 3, [](Rng& rng, const Instance& s) {
    const AdjacencyMatrix a = random_graph(rng, s.v, 0.2);
    Forward f = [a](const std::vector<Tensor<LD>>& in) { return g3d_forward(in[0], a, 3, in[1], Activation::relu); };
    return std::pair{f, std::vector{random_tensor<LD>(rng, {s.n, s.c, s.t, s.v, s.m}),
                                    random_tensor<LD>(rng, {s.co, s.c})}};
  });
  run("temporal_conv K=3", 3, [](Rng& rng, const Instance& s) {
    const std::size_t stride = 1 + rng.below(2);
    Forward f = [stride](const std::vector<Tensor<LD>>& in) { return temporal_conv1d(in[0], in[1], stride); };
    return std::pair{f, std::vector{random_tensor<LD>(rng, {s.n, s.c, s.t, s.v, s.m}),
                                    random_tensor<LD>(rng, {s.co, s.c, 3})}};
  });
  run("head", 1, [](Rng& rng, const Instance& s) {
    const std::size_t classes = 2 + rng.below(3);
    Forward f = [](const std::vector<Tensor<LD>>& in) { return head_forward(in[0], in[1]); };
    return std::pair{f, std::vector{random_tensor<LD>(rng, {s.n, s.c, s.t, s.v, s.m}),
                                    random_tensor<LD>(rng, {classes, s.c})}};
  });
  return results;
}

std::vector<CheckResult> oracle_suite(std::uint64_t seed, std::size_t instances) {
  CheckResult contract;
  contract.name = "oracle graph_contract";
  CheckResult conv;
  conv.name = "oracle temporal_conv1d";
  CheckResult sim;
  sim.name = "oracle similarity_matrix";
  CheckResult ms;
  ms.name = "oracle ms_gcn_forward";
  CheckResult g3;
  g3.name = "oracle g3d_forward";
  Rng rng(derive_seed(seed, 2));
  for (std::size_t i = 0; i < instances; ++i) {
    const oracle::Dims d{1 + rng.below(2), 1 + rng.below(4), 1 + rng.below(8), 1 + rng.below(6), 1 + rng.below(2)};
    const std::size_t co = 1 + rng.below(4);
    const Tensor<double> x = random_tensor<double>(rng, {d.n, d.c, d.t, d.v, d.m});
    const auto xv = values_of(x);
    const AdjacencyMatrix a = random_graph(rng, d.v, 0.3);

    const std::size_t vo = 1 + rng.below(6);
    const Tensor<double> dense = random_tensor<double>(rng, {vo, d.v});
    record(contract, max_abs_diff(oracle::graph_contract(xv, d, matrix_of(dense)), graph_contract(x, dense).values()),
           kOracleTolerance);

    const std::size_t taps = 1 + 2 * rng.below(3);
    const std::size_t stride = 1 + rng.below(3);
    const Tensor<double> kernel = random_tensor<double>(rng, {co, d.c, taps});
    std::vector<std::vector<std::vector<double>>> k3(co, std::vector<std::vector<double>>(d.c));
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t k = 0; k < taps; ++k) k3[o][c].push_back(kernel[(o * d.c + c) * taps + k]);
      }
    }
    record(conv, max_abs_diff(oracle::temporal_conv(xv, d, k3, stride), temporal_conv1d(x, kernel, stride).values()),
           kOracleTolerance);

    const std::size_t e = 1 + rng.below(3);
    const Tensor<double> theta = random_tensor<double>(rng, {d.c, e});
    const Tensor<double> phi = random_tensor<double>(rng, {d.c, e});
    std::vector<double> expected;
    for (const auto& s : oracle::similarity(xv, d, matrix_of(theta), matrix_of(phi))) {
      for (const auto& row : s) expected.insert(expected.end(), row.begin(), row.end());
    }
    record(sim, max_abs_diff(expected, similarity_matrix(x, theta, phi).values()), kOracleTolerance);

    const std::size_t scales = 1 + rng.below(3);
    std::vector<Tensor<double>> weights;
    std::vector<oracle::Matrix> weight_mats;
    for (std::size_t k = 0; k < scales; ++k) {
      weights.push_back(random_tensor<double>(rng, {co, d.c}));
      weight_mats.push_back(matrix_of(weights.back()));
    }
    record(ms,
           max_abs_diff(oracle::ms_gcn(xv, d, a, weight_mats, true),
                        ms_gcn_forward(x, a, weights, Activation::relu).values()),
           kOracleTolerance);

    std::size_t window = 1 + 2 * rng.below(3);
    while (window > d.t) window -= 2;
    const Tensor<double> w = random_tensor<double>(rng, {co, d.c});
    record(g3,
           max_abs_diff(oracle::g3d(xv, d, a, window, matrix_of(w), true),
                        g3d_forward(x, a, window, w, Activation::relu).values()),
           kOracleTolerance);
  }
  return {contract, conv, sim, ms, g3};
}

CheckResult k_adjacency_exhaustive(std::size_t max_nodes) {
  CheckResult r;
  r.name = "oracle k_adjacency exhaustive";
  for (std::size_t n = 1; n <= max_nodes; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << pairs.size()); ++mask) {
      AdjacencyMatrix a(n);
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (mask >> p & 1) a.set(pairs[p].first, pairs[p].second, true);
      }
      const auto dist = oracle::shortest_paths(a);
      const HopTable hops = hop_distance(a);
      bool ok = true;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t expected = dist[i][j] < 0 ? n : static_cast<std::size_t>(dist[i][j]);
          ok = ok && hops(i, j) == expected;
        }
      }
      for (std::size_t k = 0; k <= n; ++k) {
        const auto expected = oracle::k_adjacency(a, k);
        const AdjacencyMatrix got = k_adjacency(a, k);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) ok = ok && (got(i, j) == (expected[i][j] != 0));
        }
        ++r.cases;
      }
      if (!ok && r.passed) {
        r.passed = false;
        r.detail = "first mismatch: " + std::to_string(n) + " nodes, edge mask " + std::to_string(mask);
      }
    }
  }
  return r;
}

std::vector<CheckResult> reduction_suite(std::uint64_t seed, std::size_t instances) {
  CheckResult ms;
  ms.name = "reduction ms_gcn K=1 == spatial_gcn";
  CheckResult g3;
  g3.name = "reduction g3d window=1 == spatial_gcn";
  CheckResult ad;
  ad.name = "reduction adaptive_gcn B=0 no similarity == spatial_gcn";
  Rng rng(derive_seed(seed, 3));
  auto mark = [](CheckResult& r, bool same) {
    ++r.cases;
    if (!same) {
      r.passed = false;
      r.worst = 1.0;
    }
  };
  for (std::size_t i = 0; i < instances; ++i) {
    const Instance s = random_instance(rng, 2);
    const AdjacencyMatrix a = random_graph(rng, s.v, 0.3);
    const Tensor<double> x = random_tensor<double>(rng, {s.n, s.c, s.t, s.v, s.m});
    const Tensor<double> w = random_tensor<double>(rng, {s.co, s.c});
    const Tensor<double> a_hat = adjacency_tensor<double>(normalize_adjacency(a, true));
    const Tensor<double> reference = spatial_gcn_forward(x, a_hat, w, Activation::relu);
    mark(ms, bitwise_equal(reference, ms_gcn_forward(x, a, std::vector{w}, Activation::relu)));
    mark(g3, bitwise_equal(reference, g3d_forward(x, a, 1, w, Activation::relu)));
    const std::size_t e = std::max<std::size_t>(1, s.c / 4);
    const AdaptiveGcParams<double> params{Tensor<double>(Shape{s.v, s.v}), random_tensor<double>(rng, {s.c, e}),
                                          random_tensor<double>(rng, {s.c, e}), w};
    mark(ad, bitwise_equal(reference, adaptive_gcn_forward(x, a_hat, params, Activation::relu, false)));
  }
  return {ms, g3, ad};
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format_result(const CheckResult& r) {
  char buffer[256];
  std::snprintf(buffer, sizeof buffer, "%s %s (%zu cases, worst %.3g)", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.cases, r.worst);
  std::string line = buffer;
  if (!r.detail.empty()) line += " " + r.detail;
  return line;
}

}  // namespace skar::check
