#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "skar/check/oracles.hpp"
#include "skar/error.hpp"
#include "skar/tensor.hpp"
#include "support/generators.hpp"

using namespace skar;

namespace {

using T = Tensor<double>;

std::vector<double> as_vector(const T& t) { return {t.values().begin(), t.values().end()}; }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

T identity(std::size_t n) {
  T out({n, n});
  for (std::size_t i = 0; i < n; ++i) out.mutable_values()[i * n + i] = 1.0;
  return out;
}

T param(Rng& rng, Shape shape) {
  T t = gen::tensor(rng, std::move(shape));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST_CASE("elementwise primitive examples") {
  const auto s = softmax(T({2}, {0.0, 0.0}), 0);
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
  const auto r = relu(T({2}, {-1.0, 2.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);

  Rng rng(1);
  const T x = gen::tensor(rng, {3, 5});
  CHECK(as_vector(matmul(identity(3), x)) == as_vector(x));

  CHECK(as_vector(add(T({2}, {1, 2}), T({2}, {3, 4}))) == std::vector<double>{4, 6});
  CHECK(as_vector(mul(T({2}, {1, 2}), T({2}, {3, 4}))) == std::vector<double>{3, 8});
  CHECK(as_vector(scale(T({2}, {1, 2}), 0.5)) == std::vector<double>{0.5, 1});
  CHECK(mean(T({2, 2}, {1, 2, 3, 4}), {0, 1}).item() == 2.5);
  CHECK(sum(T({3}, {1, 2, 3})).item() == 6.0);
  // Leading-axis broadcast.
  CHECK(as_vector(add(T({2, 2}, {1, 2, 3, 4}), T({2}, {10, 20}))) == std::vector<double>{11, 22, 13, 24});
}

TEST_CASE("shape mismatch errors name both shapes") {
  try {
    (void)add(T({2, 3}), T({4}));
    FAIL("expected a ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2,3]") != std::string::npos);
    CHECK(what.find("[4]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(T({2, 3}), T({2, 3})), ShapeError);
  CHECK_THROWS_AS(graph_contract(T({1, 1, 1, 3, 1}), identity(2)), ShapeError);
}

TEST_CASE("non-finite results are an error state") {
  T big({1}, {std::numeric_limits<double>::max()});
  big.set_requires_grad(true);
  CHECK_THROWS_AS(scale(big, 10.0), NumericalError);
}

TEST_CASE("graph_contract examples") {
  Rng rng(2);
  const T x = gen::tensor(rng, {2, 3, 4, 5, 2});
  CHECK(as_vector(graph_contract(x, identity(5))) == as_vector(x));

  const T two({1, 2, 1, 2, 1}, {1.0, 3.0, -2.0, 4.0});  // channel-major: c0 = (1, 3), c1 = (-2, 4)
  const T half({2, 2}, {0.5, 0.5, 0.5, 0.5});
  const auto out = graph_contract(two, half);
  CHECK(as_vector(out) == std::vector<double>{2.0, 2.0, 1.0, 1.0});
}

TEST_CASE("property: graph_contract matches the loop oracle and identity is idempotent") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const oracle::Dims d{gen::between(rng, 1, 2), gen::between(rng, 1, 4), gen::between(rng, 1, 8),
                         gen::between(rng, 1, 6), gen::between(rng, 1, 2)};
    const T x = gen::tensor(rng, {d.n, d.c, d.t, d.v, d.m});
    const T a = gen::tensor(rng, {d.v, d.v});
    oracle::Matrix am(d.v, std::vector<double>(d.v));
    for (std::size_t i = 0; i < d.v; ++i) {
      for (std::size_t j = 0; j < d.v; ++j) am[i][j] = a[i * d.v + j];
    }
    REQUIRE(max_abs_diff(as_vector(graph_contract(x, a)), oracle::graph_contract(as_vector(x), d, am)) < 1e-12);
    const auto once = graph_contract(x, identity(d.v));
    REQUIRE(as_vector(graph_contract(once, identity(d.v))) == as_vector(once));
  }
}

TEST_CASE("temporal_conv1d examples") {
  Rng rng(4);
  const T x = gen::tensor(rng, {2, 3, 6, 4, 2});
  T kernel({3, 3, 1});
  for (std::size_t c = 0; c < 3; ++c) kernel.mutable_values()[c * 3 + c] = 1.0;
  CHECK(as_vector(temporal_conv1d(x, kernel, 1)) == as_vector(x));

  // Constant in time, averaging kernel: interior frames keep the value.
  T constant({1, 1, 9, 2, 1});
  for (std::size_t t = 0; t < 9; ++t) {
    constant.mutable_values()[t * 2] = 0.75;
    constant.mutable_values()[t * 2 + 1] = -1.5;
  }
  const T avg({1, 1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto out = temporal_conv1d(constant, avg, 1);
  for (std::size_t t = 1; t + 1 < 9; ++t) {
    CHECK(out[t * 2] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(out[t * 2 + 1] == doctest::Approx(-1.5).epsilon(1e-14));
  }
  CHECK(temporal_conv1d(T({1, 1, 8, 1, 1}), T({1, 1, 3}), 2).dim(2) == 4);
  CHECK(temporal_conv1d(T({1, 1, 7, 1, 1}), T({1, 1, 3}), 2).dim(2) == 4);
  CHECK_THROWS_AS(temporal_conv1d(x, T({3, 3, 2}), 1), ShapeError);
}

TEST_CASE("property: temporal_conv1d matches the loop oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const oracle::Dims d{gen::between(rng, 1, 2), gen::between(rng, 1, 4), gen::between(rng, 1, 12),
                         gen::between(rng, 1, 6), gen::between(rng, 1, 2)};
    const std::size_t co = gen::between(rng, 1, 5);
    const std::size_t k = 2 * gen::between(rng, 0, 4) + 1;
    const std::size_t stride = gen::between(rng, 1, 3);
    const T x = gen::tensor(rng, {d.n, d.c, d.t, d.v, d.m});
    const T w = gen::tensor(rng, {co, d.c, k});
    std::vector<std::vector<std::vector<double>>> kw(co, std::vector<std::vector<double>>(d.c, std::vector<double>(k)));
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t i = 0; i < k; ++i) kw[o][c][i] = w[(o * d.c + c) * k + i];
      }
    }
    REQUIRE(max_abs_diff(as_vector(temporal_conv1d(x, w, stride)), oracle::temporal_conv(as_vector(x), d, kw, stride)) <
            1e-12);
  }
}

TEST_CASE("cross_entropy examples") {
  CHECK(cross_entropy(T({1, 4}), {2}).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  double previous = std::numeric_limits<double>::infinity();
  for (double margin : {1.0, 2.0, 4.0}) {
    const double loss = cross_entropy(T({1, 3}, {margin, 0.0, 0.0}), {0}).item();
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK_THROWS_AS(cross_entropy(T({1, 3}), {3}), ShapeError);

  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = gen::between(rng, 1, 4);
    const std::size_t k = gen::between(rng, 2, 6);
    const T logits = gen::tensor(rng, {n, k}, 5.0);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(k);
    long double want = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      long double z = 0.0L;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<long double>(logits[i * k + j]));
      want += std::log(z) - static_cast<long double>(logits[i * k + labels[i]]);
    }
    want /= static_cast<long double>(n);
    REQUIRE(std::abs(cross_entropy(logits, labels).item() - static_cast<double>(want)) < 1e-12);
  }
}

TEST_CASE("backward examples") {
  T x({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  T unused({3}, {1.0, 1.0, 1.0});
  unused.set_requires_grad(true);
  const auto loss = sum(mul(x, x));
  backward(loss);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2.0, 4.0});
  CHECK_FALSE(unused.has_grad());  // never reached: reads as zero

  CHECK_THROWS_AS(backward(loss), NumericalError);
  CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);
}

TEST_CASE("backward sums over every use") {
  T x({1}, {3.0});
  x.set_requires_grad(true);
  backward(sum(add(mul(x, x), scale(x, 2.0))));
  CHECK(x.grad()[0] == 8.0);
}

TEST_CASE("property: primitive gradients agree with central differences in long double") {
  using L = Tensor<long double>;
  Rng rng(7);
  auto check = [&](const char* name, auto&& f, Shape shape) {
    L x = gen::tensor<long double>(rng, shape);
    x.set_requires_grad(true);
    const L projection = gen::tensor<long double>(rng, f(x.detach()).shape());
    auto objective = [&](const L& input) { return sum(mul(f(input), projection)).item(); };
    backward(sum(mul(f(x), projection)));
    const long double h = 1e-6L;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      L plus = x.detach();
      L minus = x.detach();
      plus.mutable_values()[i] += h;
      minus.mutable_values()[i] -= h;
      const long double numeric = (objective(plus) - objective(minus)) / (2 * h);
      const long double analytic = x.has_grad() ? x.grad()[i] : 0.0L;
      const long double rel = std::abs(numeric - analytic) / std::max(1e-6L, std::abs(numeric) + std::abs(analytic));
      INFO(name << " entry " << i);
      REQUIRE(static_cast<double>(rel) < 1e-4);
    }
  };
  for (int trial = 0; trial < 5; ++trial) {
    check("softmax", [](const L& t) { return softmax(t, 1); }, {3, 4});
    check("mean", [](const L& t) { return mean(t, {0, 2}); }, {2, 3, 4});
    check("transpose", [](const L& t) { return transpose(t); }, {2, 3, 4});
    check("reshape", [](const L& t) { return reshape(t, {6, 2}); }, {3, 4});
    check("matmul", [&](const L& t) { return matmul(t, L({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8})); }, {3, 4});
    check("temporal_window", [](const L& t) { return temporal_window(t, 3); }, {1, 2, 4, 3, 1});
    check("cross_entropy", [](const L& t) { return reshape(cross_entropy(t, {0, 2}), {1}); }, {2, 3});
  }
}

TEST_CASE("property: softmax rows are probability vectors") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = gen::between(rng, 1, 6);
    const std::size_t cols = gen::between(rng, 1, 8);
    const auto s = softmax(gen::tensor(rng, {rows, cols}, 20.0), 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        REQUIRE(s[r * cols + c] >= 0.0);
        total += s[r * cols + c];
      }
      REQUIRE(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("forward results are bit-identical across runs") {
  auto run = [] {
    Rng rng(9);
    const T x = gen::tensor(rng, {2, 3, 7, 4, 2});
    const T w = gen::tensor(rng, {5, 3, 3});
    const T a = gen::tensor(rng, {4, 4});
    return as_vector(relu(temporal_conv1d(graph_contract(x, a), w, 2)));
  };
  const auto first = run();
  const auto second = run();
  REQUIRE(first.size() == second.size());
  CHECK(std::memcmp(first.data(), second.data(), first.size() * sizeof(double)) == 0);
}

TEST_CASE("NoGradGuard suppresses recording") {
  Rng rng(10);
  T w = param(rng, {2, 2});
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_recording_enabled());
    CHECK_FALSE(matmul(T({1, 2}, {1, 1}), w).requires_grad());
  }
  CHECK(grad_recording_enabled());
  CHECK(matmul(T({1, 2}, {1, 1}), w).requires_grad());
}
