#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "persyn/errors.hpp"

namespace persyn {

// Search policy for the k-means tree.
struct QueryBudget {
  enum class Mode { kGreedy, kBacktrack, kExact };

  Mode mode = Mode::kBacktrack;
  int max_leaves = 4;  // backtrack mode only

  static QueryBudget greedy() { return {Mode::kGreedy, 1}; }
  static QueryBudget backtrack(int max_leaves) {
    if (max_leaves < 1) throw DomainError("backtrack budget must be >= 1");
    return {Mode::kBacktrack, max_leaves};
  }
  static QueryBudget exact() { return {Mode::kExact, 0}; }
};

struct QueryStats {
  std::int64_t points_scanned = 0;
  std::int64_t nodes_visited = 0;
};

struct QueryResult {
  std::int32_t index = -1;
  double distance = 0.0;  // in the indexed (projected) space
  QueryStats stats;
};

// Recursive k-means index over a flat point matrix. Built with
// k-means++ seeding and Lloyd refinement; recursion stops below the
// leaf threshold or when clustering cannot split a node. The tree owns
// a copy of the points it indexes.
class KmTree {
 public:
  // count is explicit so zero-dimensional point sets (a PCA model that
  // retained nothing) still index correctly.
  static KmTree build(std::vector<double> points, std::size_t dim,
                      std::size_t count, int branching = 4,
                      std::size_t leaf_threshold = 4, std::uint64_t seed = 0);

  // greedy: descend to the nearest-centroid child and scan one leaf.
  // backtrack(m): best-first over subtrees by centroid distance, m leaves.
  // exact: branch-and-bound on the centroid/radius lower bound; always
  // returns the true nearest point, ties to the lowest index.
  QueryResult query(std::span<const double> q, const QueryBudget& budget) const;

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> point(std::int32_t i) const {
    return {points_.data() + static_cast<std::size_t>(i) * dim_, dim_};
  }

  // Point ids per leaf, in tree order. Concatenated they form a
  // permutation of [0, size).
  std::vector<std::vector<std::int32_t>> leaves() const;

  // Structure dump (sizes only) as a JSON string, for debugging.
  std::string structure_json() const;

 private:
  struct Node {
    std::vector<double> centroid;
    double radius = 0.0;
    std::vector<std::int32_t> children;   // empty for leaves
    std::vector<std::int32_t> point_ids;  // leaves only
    bool is_leaf() const { return children.empty(); }
  };

  double point_distance2(std::span<const double> q, std::int32_t id) const;
  void scan_leaf(const Node& node, std::span<const double> q,
                 double& best_d2, std::int32_t& best_id, QueryStats& stats) const;

  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<double> points_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
  int branching_ = 4;
};

// Exhaustive nearest point by squared Euclidean distance, ties to the
// lowest index. The oracle the tree's exact mode is held against.
std::int32_t brute_force_nearest(std::span<const double> points, std::size_t dim,
                                 std::span<const double> q,
                                 double* distance_out = nullptr);

}  // namespace persyn
