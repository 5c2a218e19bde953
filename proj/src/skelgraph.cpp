#include "skar/skelgraph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "skar/error.hpp"

namespace skar {
namespace {

// Kinect v1 joint order: 0 hip center, 1 spine, 2 shoulder center, 3 head,
// 4-7 left shoulder/elbow/wrist/hand, 8-11 right shoulder/elbow/wrist/hand,
// 12-15 left hip/knee/ankle/foot, 16-19 right hip/knee/ankle/foot.
const std::vector<Edge> kKinectV1Bones = {
    {0, 1},   {1, 2},   {2, 3},   {2, 4},   {4, 5},   {5, 6},   {6, 7},
    {2, 8},   {8, 9},   {9, 10},  {10, 11}, {0, 12},  {12, 13}, {13, 14},
    {14, 15}, {0, 16},  {16, 17}, {17, 18}, {18, 19},
};

// Kinect v2 joint order: 0 spine base, 1 spine mid, 2 neck, 3 head,
// 4-7 left shoulder/elbow/wrist/hand, 8-11 right shoulder/elbow/wrist/hand,
// 12-15 left hip/knee/ankle/foot, 16-19 right hip/knee/ankle/foot,
// 20 spine shoulder, 21 left hand tip, 22 left thumb, 23 right hand tip,
// 24 right thumb.
const std::vector<Edge> kKinectV2Bones = {
    {0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},   {6, 5},   {7, 6},
    {8, 20},  {9, 8},   {10, 9},  {11, 10}, {12, 0},  {13, 12}, {14, 13}, {15, 14},
    {16, 0},  {17, 16}, {18, 17}, {19, 18}, {21, 22}, {22, 7},  {23, 24}, {24, 11},
};

}  // namespace

SkeletonTopology::SkeletonTopology(std::size_t joint_count, std::vector<Edge> edges, std::size_t center_joint,
                                   std::optional<std::size_t> spine_top)
    : joint_count_(joint_count), edges_(std::move(edges)), center_(center_joint) {
  if (joint_count_ == 0) throw DataError("topology needs at least one joint");
  if (center_ >= joint_count_) throw DataError("center joint out of range");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::vector<std::size_t>> neighbors(joint_count_);
  for (const auto& [a, b] : edges_) {
    if (a >= joint_count_ || b >= joint_count_) {
      throw DataError("bone (" + std::to_string(a) + "," + std::to_string(b) + ") references a joint out of range");
    }
    if (a == b) throw DataError("self-loop bone at joint " + std::to_string(a));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      throw DataError("duplicate bone (" + std::to_string(a) + "," + std::to_string(b) + ")");
    }
    neighbors[a].push_back(b);
    neighbors[b].push_back(a);
  }

  parent_.assign(joint_count_, std::nullopt);
  std::vector<bool> visited(joint_count_, false);
  std::deque<std::size_t> queue{center_};
  visited[center_] = true;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t u : neighbors[v]) {
      if (visited[u]) continue;
      visited[u] = true;
      parent_[u] = v;
      ++reached;
      queue.push_back(u);
    }
  }
  if (reached != joint_count_) throw DataError("skeleton graph is not connected");

  if (spine_top) {
    if (*spine_top >= joint_count_) throw DataError("spine joint out of range");
    spine_top_ = *spine_top;
  } else {
    spine_top_ = neighbors[center_].empty() ? center_ : neighbors[center_].front();
  }
}

SkeletonTopology SkeletonTopology::kinect_v1() { return SkeletonTopology(20, kKinectV1Bones, 0, 2); }

SkeletonTopology SkeletonTopology::kinect_v2() { return SkeletonTopology(25, kKinectV2Bones, 0, 20); }

SkeletonTopology SkeletonTopology::for_joint_count(std::size_t joints) {
  if (joints == 20) return kinect_v1();
  if (joints == 25) return kinect_v2();
  throw DataError("no built-in topology with " + std::to_string(joints) + " joints");
}

SkeletonTopology SkeletonTopology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open topology file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> joints;
  std::optional<std::size_t> center;
  std::optional<std::size_t> spine;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first) || first.starts_with('#')) continue;
    auto fail = [&] { return DataError(path.string() + ":" + std::to_string(line_no) + ": malformed line"); };
    if (first == "center" || first == "spine") {
      std::size_t value = 0;
      if (!(fields >> value)) throw fail();
      (first == "center" ? center : spine) = value;
    } else if (!joints) {
      try {
        joints = std::stoul(first);
      } catch (const std::exception&) {
        throw fail();
      }
    } else {
      std::size_t a = 0;
      std::size_t b = 0;
      try {
        a = std::stoul(first);
      } catch (const std::exception&) {
        throw fail();
      }
      if (!(fields >> b)) throw fail();
      edges.emplace_back(a, b);
    }
  }
  if (!joints) throw DataError(path.string() + ": missing joint count");
  if (!center) throw DataError(path.string() + ": missing center line");
  return SkeletonTopology(*joints, std::move(edges), *center, spine);
}

AdjacencyMatrix::AdjacencyMatrix(std::size_t size) : size_(size), entries_(size * size, 0) {}

AdjacencyMatrix AdjacencyMatrix::identity(std::size_t size) {
  AdjacencyMatrix a(size);
  for (std::size_t i = 0; i < size; ++i) a.set(i, i, true);
  return a;
}

void AdjacencyMatrix::set(std::size_t i, std::size_t j, bool value) {
  entries_[i * size_ + j] = value ? 1 : 0;
  entries_[j * size_ + i] = value ? 1 : 0;
}

std::size_t AdjacencyMatrix::nonzeros() const {
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), std::uint8_t{1}));
}

NormalizedAdjacency::NormalizedAdjacency(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, 0.0) {}

AdjacencyMatrix build_adjacency(const SkeletonTopology& topology) {
  AdjacencyMatrix a(topology.joint_count());
  for (const auto& [i, j] : topology.edges()) a.set(i, j, true);
  return a;
}

NormalizedAdjacency normalize_adjacency(const AdjacencyMatrix& a, bool add_self_loops) {
  const std::size_t m = a.size();
  auto entry = [&](std::size_t i, std::size_t j) -> double {
    return (a(i, j) || (add_self_loops && i == j)) ? 1.0 : 0.0;
  };
  std::vector<double> inv_sqrt_degree(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < m; ++j) degree += entry(i, j);
    inv_sqrt_degree[i] = degree > 0.0 ? 1.0 / std::sqrt(degree) : 0.0;
  }
  NormalizedAdjacency out(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out(i, j) = inv_sqrt_degree[i] * entry(i, j) * inv_sqrt_degree[j];
    }
  }
  return out;
}

HopTable hop_distance(const AdjacencyMatrix& a) {
  const std::size_t m = a.size();
  HopTable table{m, m, std::vector<std::size_t>(m * m, m)};
  std::deque<std::size_t> queue;
  for (std::size_t source = 0; source < m; ++source) {
    std::size_t* row = table.distance.data() + source * m;
    row[source] = 0;
    queue.assign(1, source);
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t u = 0; u < m; ++u) {
        if (u != v && a(v, u) && row[u] == m) {
          row[u] = row[v] + 1;
          queue.push_back(u);
        }
      }
    }
  }
  return table;
}

AdjacencyMatrix k_adjacency(const AdjacencyMatrix& a, std::size_t k) {
  const HopTable hops = hop_distance(a);
  AdjacencyMatrix out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (i == j || (hops(i, j) == k && hops(i, j) != hops.unreachable)) out.set(i, j, true);
    }
  }
  return out;
}

AdjacencyMatrix windowed_adjacency(const AdjacencyMatrix& a, std::size_t window) {
  const std::size_t m = a.size();
  AdjacencyMatrix out(m * window);
  for (std::size_t f = 0; f < window; ++f) {
    for (std::size_t g = 0; g < window; ++g) {
      for (std::size_t v = 0; v < m; ++v) {
        for (std::size_t u = 0; u < m; ++u) {
          if (u == v || a(v, u)) out.set(f * m + v, g * m + u, true);
        }
      }
    }
  }
  return out;
}

SkeletonSequence bone_vectors(const SkeletonSequence& seq, const SkeletonTopology& topology) {
  if (seq.joints() != topology.joint_count()) {
    throw DataError("sequence has " + std::to_string(seq.joints()) + " joints but topology has " +
                    std::to_string(topology.joint_count()));
  }
  SkeletonSequence bones(seq.frames(), seq.bodies(), seq.joints());
  const auto& parents = topology.parent_of();
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t m = 0; m < seq.bodies(); ++m) {
      for (std::size_t v = 0; v < seq.joints(); ++v) {
        if (!parents[v]) continue;
        const Point3& p = seq.at(t, m, v);
        const Point3& q = seq.at(t, m, *parents[v]);
        bones.at(t, m, v) = {p[0] - q[0], p[1] - q[1], p[2] - q[2]};
      }
    }
  }
  for (std::size_t m = 0; m < seq.bodies(); ++m) bones.set_present(m, seq.present(m));
  return bones;
}

}  // namespace skar
