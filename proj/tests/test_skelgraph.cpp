#include <cmath>
#include <fstream>

#include "doctest.h"
#include "skar/check/oracles.hpp"
#include "skar/error.hpp"
#include "skar/skelgraph.hpp"
#include "support/generators.hpp"

using namespace skar;

namespace {

AdjacencyMatrix path3() {
  AdjacencyMatrix a(3);
  a.set(0, 1, true);
  a.set(1, 2, true);
  return a;
}

}  // namespace

TEST_CASE("build_adjacency on the smallest graphs") {
  const auto two = build_adjacency(SkeletonTopology(2, {{0, 1}}, 0));
  CHECK_FALSE(two(0, 0));
  CHECK(two(0, 1));
  CHECK(two(1, 0));
  CHECK_FALSE(two(1, 1));

  const auto one = build_adjacency(SkeletonTopology(1, {}, 0));
  CHECK(one.size() == 1);
  CHECK_FALSE(one(0, 0));
}

TEST_CASE("built-in topologies are trees with the expected bone counts") {
  const auto v2 = SkeletonTopology::kinect_v2();
  CHECK(v2.joint_count() == 25);
  CHECK(v2.edges().size() == 24);
  CHECK(build_adjacency(v2).nonzeros() == 48);

  const auto v1 = SkeletonTopology::kinect_v1();
  CHECK(v1.joint_count() == 20);
  CHECK(v1.edges().size() == 19);
  CHECK(build_adjacency(v1).nonzeros() == 38);

  for (const auto& topo : {v1, v2}) {
    std::size_t roots = 0;
    for (std::size_t v = 0; v < topo.joint_count(); ++v) {
      if (!topo.parent_of()[v]) {
        ++roots;
        CHECK(v == topo.center_joint());
      }
    }
    CHECK(roots == 1);
  }
}

TEST_CASE("topology constructor rejects invalid bone lists") {
  CHECK_THROWS_AS(SkeletonTopology(3, {{0, 3}, {0, 1}}, 0), DataError);
  CHECK_THROWS_AS(SkeletonTopology(2, {{1, 1}}, 0), DataError);
  CHECK_THROWS_AS(SkeletonTopology(3, {{0, 1}, {1, 0}, {1, 2}}, 0), DataError);
  CHECK_THROWS_AS(SkeletonTopology(3, {{0, 1}}, 0), DataError);
  CHECK_THROWS_AS(SkeletonTopology(0, {}, 0), DataError);
}

TEST_CASE("topology file overrides the built-in layout") {
  const auto dir = gen::scratch_dir("topology");
  {
    std::ofstream out(dir / "path.txt");
    out << "# three joints\n3\n0 1\n1 2\ncenter 1\n";
  }
  const auto topo = SkeletonTopology::load(dir / "path.txt");
  CHECK(topo.joint_count() == 3);
  CHECK(topo.center_joint() == 1);
  CHECK(build_adjacency(topo) == path3());
  {
    std::ofstream out(dir / "bad.txt");
    out << "3\n0 x\n";
  }
  CHECK_THROWS_AS(SkeletonTopology::load(dir / "bad.txt"), DataError);
}

TEST_CASE("normalize_adjacency worked examples") {
  AdjacencyMatrix a(2);
  a.set(0, 1, true);
  const auto n = normalize_adjacency(a, true);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(n(i, j) == doctest::Approx(0.5).epsilon(1e-15));
  }
  CHECK(normalize_adjacency(AdjacencyMatrix(1), true)(0, 0) == 1.0);
  // Isolated nodes pass no messages.
  const auto zero = normalize_adjacency(AdjacencyMatrix(3), false);
  for (double v : zero.entries()) CHECK(v == 0.0);

  const auto p = normalize_adjacency(path3(), true);
  const auto oracle = oracle::normalize(path3(), true);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(p(i, j) - oracle[i][j]) < 1e-12);
  }
}

TEST_CASE("property: normalization is symmetric and matches the oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen::between(rng, 1, 8);
    const auto a = gen::graph(rng, n, rng.uniform());
    const bool loops = rng.below(2) == 1;
    const auto got = normalize_adjacency(a, loops);
    const auto want = oracle::normalize(a, loops);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        REQUIRE(std::abs(got(i, j) - got(j, i)) <= 1e-12);
        REQUIRE(std::abs(got(i, j) - want[i][j]) <= 1e-12);
        REQUIRE(std::isfinite(got(i, j)));
      }
    }
  }
}

TEST_CASE("hop_distance examples") {
  const auto d = hop_distance(path3());
  CHECK(d(0, 2) == 2);
  CHECK(d(2, 0) == 2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(d(i, i) == 0);

  AdjacencyMatrix split(3);
  split.set(0, 1, true);
  const auto s = hop_distance(split);
  CHECK(s(0, 2) == s.unreachable);
  CHECK(s.unreachable == 3);
}

TEST_CASE("property: hop_distance equals Floyd-Warshall on random 6-node graphs") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = gen::graph(rng, 6, rng.uniform());
    const auto got = hop_distance(a);
    const auto want = oracle::shortest_paths(a);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        if (want[i][j] < 0) {
          REQUIRE(got(i, j) == got.unreachable);
        } else {
          REQUIRE(got(i, j) == static_cast<std::size_t>(want[i][j]));
        }
      }
    }
  }
}

TEST_CASE("property: hop_distance obeys the triangle inequality for every graph up to 8 nodes") {
  // Exhaustive up to 5 nodes, then 300 random graphs each for 6, 7 and 8.
  auto check_graph = [](const AdjacencyMatrix& a) {
    const auto d = hop_distance(a);
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t l = 0; l < n; ++l) {
          if (d(i, l) == d.unreachable || d(l, j) == d.unreachable) continue;
          REQUIRE(d(i, j) <= d(i, l) + d(l, j));
        }
      }
    }
  };
  for (std::size_t n = 1; n <= 5; ++n) {
    const std::size_t pairs = n * (n - 1) / 2;
    for (std::size_t mask = 0; mask < (std::size_t{1} << pairs); ++mask) {
      AdjacencyMatrix a(n);
      std::size_t bit = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++bit) a.set(i, j, (mask >> bit) & 1U);
      }
      check_graph(a);
    }
  }
  Rng rng(13);
  for (std::size_t n = 6; n <= 8; ++n) {
    for (int trial = 0; trial < 300; ++trial) check_graph(gen::graph(rng, n, rng.uniform()));
  }
}

TEST_CASE("k_adjacency examples") {
  const auto k2 = k_adjacency(path3(), 2);
  CHECK(k2(0, 2));
  CHECK(k2(2, 0));
  CHECK_FALSE(k2(0, 1));
  CHECK_FALSE(k2(1, 2));
  for (std::size_t i = 0; i < 3; ++i) CHECK(k2(i, i));

  Rng rng(14);
  const auto a = gen::graph(rng, 7, 0.4);
  CHECK(k_adjacency(a, 0) == AdjacencyMatrix::identity(7));
}

TEST_CASE("property: k=1 adds the identity and scales partition reachable pairs") {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = gen::between(rng, 1, 8);
    const auto a = gen::graph(rng, n, rng.uniform());
    const auto k1 = k_adjacency(a, 1);
    const auto d = hop_distance(a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) REQUIRE(k1(i, j) == (a(i, j) || i == j));
    }
    std::vector<std::size_t> coverage(n * n, 0);
    for (std::size_t k = 1; k <= n; ++k) {
      const auto ak = k_adjacency(a, k);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j && ak(i, j)) ++coverage[i * n + j];
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        REQUIRE(coverage[i * n + j] == (d(i, j) == d.unreachable ? 0U : 1U));
      }
    }
  }
}

TEST_CASE("k_adjacency scales are disjoint on the 25-joint skeleton") {
  const auto a = build_adjacency(SkeletonTopology::kinect_v2());
  std::vector<int> hits(25 * 25, 0);
  for (std::size_t k = 1; k <= 6; ++k) {
    const auto ak = k_adjacency(a, k);
    for (std::size_t i = 0; i < 25; ++i) {
      for (std::size_t j = 0; j < 25; ++j) {
        if (i != j && ak(i, j)) ++hits[i * 25 + j];
      }
    }
  }
  for (int h : hits) CHECK(h <= 1);
}

TEST_CASE("windowed adjacency links every window frame") {
  const auto w = windowed_adjacency(path3(), 3);
  CHECK(w.size() == 9);
  CHECK(w(0 * 3 + 0, 2 * 3 + 1));  // joint 0 at frame 0 to joint 1 at frame 2
  CHECK(w(1 * 3 + 2, 0 * 3 + 2));  // same joint across frames
  CHECK_FALSE(w(0, 2 * 3 + 2));    // joints 0 and 2 are two hops apart
}

TEST_CASE("bone_vectors examples") {
  const SkeletonTopology topo(2, {{0, 1}}, 0);
  SkeletonSequence seq(1, 1, 2);
  seq.at(0, 0, 1) = {1, 0, 0};
  const auto bones = bone_vectors(seq, topo);
  CHECK(bones.at(0, 0, 1) == Point3{1, 0, 0});
  CHECK(bones.at(0, 0, 0) == Point3{0, 0, 0});

  const auto zeros = bone_vectors(SkeletonSequence(3, 2, 2), topo);
  for (const auto& p : zeros.positions()) CHECK(p == Point3{0, 0, 0});

  CHECK_THROWS_AS(bone_vectors(SkeletonSequence(1, 1, 3), topo), DataError);
}

TEST_CASE("property: bone_vectors match a per-frame loop") {
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const auto topo = gen::tree(rng, gen::between(rng, 2, 9));
    const auto seq = gen::sequence(rng, gen::between(rng, 1, 5), gen::between(rng, 1, 2), topo.joint_count());
    const auto bones = bone_vectors(seq, topo);
    for (std::size_t t = 0; t < seq.frames(); ++t) {
      for (std::size_t m = 0; m < seq.bodies(); ++m) {
        for (std::size_t v = 0; v < seq.joints(); ++v) {
          Point3 want{0, 0, 0};
          if (const auto parent = topo.parent_of()[v]) {
            for (int c = 0; c < 3; ++c) want[c] = seq.at(t, m, v)[c] - seq.at(t, m, *parent)[c];
          }
          REQUIRE(bones.at(t, m, v) == want);
        }
      }
    }
  }
}
