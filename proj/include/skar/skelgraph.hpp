#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "skar/sequence.hpp"

namespace skar {

using Edge = std::pair<std::size_t, std::size_t>;

// Skeleton graph G = {V, E}: joints are nodes, bones are undirected edges.
// The constructor checks every invariant (index range, no self loops, no
// duplicates, connectivity) and derives parent links by breadth-first search
// from the center joint.
class SkeletonTopology {
 public:
  SkeletonTopology(std::size_t joint_count, std::vector<Edge> edges, std::size_t center_joint,
                   std::optional<std::size_t> spine_top = std::nullopt);

  // 20-joint Kinect v1 layout (19 bones), rooted at the hip center.
  static SkeletonTopology kinect_v1();
  // 25-joint Kinect v2 layout (24 bones), rooted at the spine base.
  static SkeletonTopology kinect_v2();
  static SkeletonTopology for_joint_count(std::size_t joints);

  // Line-oriented text: `m`, one `i j` pair per bone, then `center c`
  // (optionally followed by `spine s`).
  static SkeletonTopology load(const std::filesystem::path& path);

  std::size_t joint_count() const { return joint_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t center_joint() const { return center_; }
  // Far end of the spine segment measured for scale normalization.
  std::size_t spine_top_joint() const { return spine_top_; }
  const std::vector<std::optional<std::size_t>>& parent_of() const { return parent_; }

  bool operator==(const SkeletonTopology&) const = default;

 private:
  std::size_t joint_count_;
  std::vector<Edge> edges_;
  std::size_t center_;
  std::size_t spine_top_;
  std::vector<std::optional<std::size_t>> parent_;
};

// Symmetric {0,1} matrix. Adjacency built from bones has a zero diagonal;
// k-adjacency matrices carry self loops on the diagonal.
class AdjacencyMatrix {
 public:
  explicit AdjacencyMatrix(std::size_t size);
  static AdjacencyMatrix identity(std::size_t size);

  std::size_t size() const { return size_; }
  bool operator()(std::size_t i, std::size_t j) const { return entries_[i * size_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value);  // sets both (i,j) and (j,i)
  std::size_t nonzeros() const;

  bool operator==(const AdjacencyMatrix&) const = default;

 private:
  std::size_t size_;
  std::vector<std::uint8_t> entries_;
};

// Dense real matrix; rows may differ from columns for windowed operators.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency(std::size_t rows, std::size_t cols);
  explicit NormalizedAdjacency(std::size_t size) : NormalizedAdjacency(size, size) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  const std::vector<double>& entries() const { return entries_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> entries_;
};

AdjacencyMatrix build_adjacency(const SkeletonTopology& topology);

// D^{-1/2} A' D^{-1/2} with A' = A (+ I when add_self_loops). Degree-0 nodes
// get a zero row and column.
NormalizedAdjacency normalize_adjacency(const AdjacencyMatrix& a, bool add_self_loops);

struct HopTable {
  std::size_t size;
  std::size_t unreachable;  // sentinel, equal to size
  std::vector<std::size_t> distance;
  std::size_t operator()(std::size_t i, std::size_t j) const { return distance[i * size + j]; }
};

HopTable hop_distance(const AdjacencyMatrix& a);

// Entry (i,j) = 1 iff d(i,j) == k or i == j.
AdjacencyMatrix k_adjacency(const AdjacencyMatrix& a, std::size_t k);

// Block adjacency over a window of `window` frames: node (f, v) links to
// (f', u) for every f, f' whenever (A + I)[v][u] = 1. Node index is f*m + v.
AdjacencyMatrix windowed_adjacency(const AdjacencyMatrix& a, std::size_t window);

// Position of each joint minus the position of its parent; the root is zero.
SkeletonSequence bone_vectors(const SkeletonSequence& seq, const SkeletonTopology& topology);

}  // namespace skar
