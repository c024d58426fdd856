#include "persyn/km_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>

#include "json.hpp"

namespace persyn {

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

struct Clusterer {
  const std::vector<double>& points;
  std::size_t dim;

  std::span<const double> at(std::int32_t id) const {
    return {points.data() + static_cast<std::size_t>(id) * dim, dim};
  }

  // k-means++ seeding followed by Lloyd refinement; returns the
  // non-empty clusters, each preserving the ascending order of ids.
  std::vector<std::vector<std::int32_t>> run(
      const std::vector<std::int32_t>& ids, int k, std::mt19937_64& rng) const {
    const std::size_t n = ids.size();
    std::vector<std::vector<double>> centers;
    centers.reserve(k);

    std::uniform_int_distribution<std::size_t> pick_first(0, n - 1);
    const auto first = at(ids[pick_first(rng)]);
    centers.emplace_back(first.begin(), first.end());

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(at(ids[i]), centers[0]);

    while (centers.size() < static_cast<std::size_t>(k)) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total <= 0.0) break;  // everything coincides with a chosen center
      std::uniform_real_distribution<double> pick(0.0, total);
      double r = pick(rng);
      std::size_t chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          chosen = i;
          break;
        }
      }
      const auto c = at(ids[chosen]);
      centers.emplace_back(c.begin(), c.end());
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], dist2(at(ids[i]), centers.back()));
      }
    }

    std::vector<int> assign(n);
    auto reassign = [&] {
      for (std::size_t i = 0; i < n; ++i) {
        const auto p = at(ids[i]);
        int best = 0;
        double best_d = dist2(p, centers[0]);
        for (std::size_t c = 1; c < centers.size(); ++c) {
          const double d = dist2(p, centers[c]);
          if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
          }
        }
        assign[i] = best;
      }
    };
    reassign();

    std::vector<double> sums(centers.size() * dim);
    std::vector<std::size_t> sizes(centers.size());
    for (int sweep = 0; sweep < 20; ++sweep) {
      std::fill(sums.begin(), sums.end(), 0.0);
      std::fill(sizes.begin(), sizes.end(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto p = at(ids[i]);
        double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
        for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
        ++sizes[assign[i]];
      }
      double movement = 0.0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        if (sizes[c] == 0) continue;  // empty clusters keep their centroid
        double move = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double v = sums[c * dim + j] / sizes[c];
          const double d = v - centers[c][j];
          move += d * d;
          centers[c][j] = v;
        }
        movement = std::max(movement, std::sqrt(move));
      }
      if (movement < 1e-6) break;
      reassign();
    }

    std::vector<std::vector<std::int32_t>> clusters(centers.size());
    for (std::size_t i = 0; i < n; ++i) {
      clusters[assign[i]].push_back(ids[i]);
    }
    std::erase_if(clusters, [](const auto& c) { return c.empty(); });
    return clusters;
  }
};

}  // namespace

double KmTree::point_distance2(std::span<const double> q, std::int32_t id) const {
  return dist2(q, point(id));
}

void KmTree::scan_leaf(const Node& node, std::span<const double> q,
                       double& best_d2, std::int32_t& best_id,
                       QueryStats& stats) const {
  for (std::int32_t id : node.point_ids) {
    const double d = point_distance2(q, id);
    ++stats.points_scanned;
    if (d < best_d2 || (d == best_d2 && id < best_id)) {
      best_d2 = d;
      best_id = id;
    }
  }
}

KmTree KmTree::build(std::vector<double> points, std::size_t dim,
                     std::size_t count, int branching,
                     std::size_t leaf_threshold, std::uint64_t seed) {
  if (count < 1) throw DomainError("cannot build a tree over zero points");
  if (branching < 2) throw DomainError("tree branching must be >= 2");
  if (dim > 0 && points.size() != dim * count) {
    throw ShapeError("point matrix size does not match dim * count");
  }

  KmTree tree;
  tree.dim_ = dim;
  tree.count_ = count;
  tree.points_ = std::move(points);
  tree.branching_ = branching;

  std::mt19937_64 rng(seed);
  Clusterer clusterer{tree.points_, dim};

  // Post-order construction: children receive lower node ids.
  auto build_node = [&](auto&& self, std::vector<std::int32_t> ids) -> std::int32_t {
    Node node;
    node.centroid.assign(dim, 0.0);
    for (std::int32_t id : ids) {
      const auto p = tree.point(id);
      for (std::size_t j = 0; j < dim; ++j) node.centroid[j] += p[j];
    }
    for (double& v : node.centroid) v /= static_cast<double>(ids.size());
    for (std::int32_t id : ids) {
      node.radius = std::max(node.radius,
                             std::sqrt(dist2(tree.point(id), node.centroid)));
    }

    bool split = false;
    if (ids.size() >= leaf_threshold && dim > 0) {
      const int k = static_cast<int>(
          std::min<std::size_t>(static_cast<std::size_t>(branching), ids.size()));
      auto clusters = clusterer.run(ids, k, rng);
      if (clusters.size() >= 2) {
        split = true;
        for (auto& cluster : clusters) {
          node.children.push_back(self(self, std::move(cluster)));
        }
      }
    }
    if (!split) node.point_ids = std::move(ids);

    tree.nodes_.push_back(std::move(node));
    return static_cast<std::int32_t>(tree.nodes_.size() - 1);
  };

  std::vector<std::int32_t> all(count);
  for (std::size_t i = 0; i < count; ++i) all[i] = static_cast<std::int32_t>(i);
  tree.root_ = build_node(build_node, std::move(all));
  return tree;
}

QueryResult KmTree::query(std::span<const double> q,
                          const QueryBudget& budget) const {
  if (count_ == 0 || root_ < 0) throw DomainError("query on an empty tree");
  if (q.size() != dim_) {
    throw ShapeError("query dim does not match the indexed points");
  }

  QueryResult result;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::int32_t best_id = -1;

  using Entry = std::pair<double, std::int32_t>;  // (key, node id)
  auto cmp = [](const Entry& a, const Entry& b) { return a > b; };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> frontier(cmp);

  switch (budget.mode) {
    case QueryBudget::Mode::kGreedy: {
      const Node* node = &nodes_[root_];
      ++result.stats.nodes_visited;
      while (!node->is_leaf()) {
        const Node* next = nullptr;
        double best_child = std::numeric_limits<double>::infinity();
        for (std::int32_t c : node->children) {
          const double d = dist2(q, nodes_[c].centroid);
          if (d < best_child) {
            best_child = d;
            next = &nodes_[c];
          }
        }
        node = next;
        ++result.stats.nodes_visited;
      }
      scan_leaf(*node, q, best_d2, best_id, result.stats);
      break;
    }
    case QueryBudget::Mode::kBacktrack: {
      frontier.emplace(0.0, root_);
      int leaves_scanned = 0;
      while (!frontier.empty() && leaves_scanned < budget.max_leaves) {
        const auto [key, id] = frontier.top();
        frontier.pop();
        ++result.stats.nodes_visited;
        const Node& node = nodes_[id];
        if (node.is_leaf()) {
          scan_leaf(node, q, best_d2, best_id, result.stats);
          ++leaves_scanned;
        } else {
          for (std::int32_t c : node.children) {
            frontier.emplace(dist2(q, nodes_[c].centroid), c);
          }
        }
      }
      break;
    }
    case QueryBudget::Mode::kExact: {
      // Lower bound per subtree: (|q - centroid| - radius)+, with a
      // slack that absorbs the rounding of both terms so pruning can
      // never discard the true nearest point.
      auto lower_bound2 = [&](const Node& node) {
        const double dc = std::sqrt(dist2(q, node.centroid));
        const double slack = 1e-9 * (1.0 + dc + node.radius);
        const double lb = dc - node.radius - slack;
        return lb > 0.0 ? lb * lb : 0.0;
      };
      frontier.emplace(0.0, root_);
      while (!frontier.empty()) {
        const auto [key, id] = frontier.top();
        frontier.pop();
        if (best_id >= 0 && key > best_d2) break;
        ++result.stats.nodes_visited;
        const Node& node = nodes_[id];
        if (node.is_leaf()) {
          scan_leaf(node, q, best_d2, best_id, result.stats);
        } else {
          for (std::int32_t c : node.children) {
            const double lb = lower_bound2(nodes_[c]);
            if (best_id < 0 || lb <= best_d2) frontier.emplace(lb, c);
          }
        }
      }
      break;
    }
  }

  result.index = best_id;
  result.distance = best_id >= 0 ? std::sqrt(best_d2) : 0.0;
  return result;
}

std::vector<std::vector<std::int32_t>> KmTree::leaves() const {
  std::vector<std::vector<std::int32_t>> out;
  auto walk = [&](auto&& self, std::int32_t id) -> void {
    const Node& node = nodes_[id];
    if (node.is_leaf()) {
      out.push_back(node.point_ids);
    } else {
      for (std::int32_t c : node.children) self(self, c);
    }
  };
  if (root_ >= 0) walk(walk, root_);
  return out;
}

std::string KmTree::structure_json() const {
  auto walk = [&](auto&& self, std::int32_t id) -> nlohmann::json {
    const Node& node = nodes_[id];
    if (node.is_leaf()) {
      return {{"size", node.point_ids.size()}};
    }
    nlohmann::json children = nlohmann::json::array();
    std::size_t size = 0;
    for (std::int32_t c : node.children) {
      nlohmann::json j = self(self, c);
      size += static_cast<std::size_t>(j["size"]);
      children.push_back(std::move(j));
    }
    return {{"size", size}, {"children", std::move(children)}};
  };
  nlohmann::json j{{"branching", branching_}, {"count", count_}};
  if (root_ >= 0) j["root"] = walk(walk, root_);
  return j.dump();
}

std::int32_t brute_force_nearest(std::span<const double> points, std::size_t dim,
                                 std::span<const double> q,
                                 double* distance_out) {
  if (dim < 1) throw DomainError("point dimension must be >= 1");
  if (points.empty()) throw DomainError("nearest query over zero points");
  if (points.size() % dim != 0 || q.size() != dim) {
    throw ShapeError("point matrix / query dim mismatch");
  }
  const std::size_t n = points.size() / dim;
  double best = std::numeric_limits<double>::infinity();
  std::int32_t best_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = dist2({points.data() + i * dim, dim}, q);
    if (d < best) {
      best = d;
      best_id = static_cast<std::int32_t>(i);
    }
  }
  if (distance_out) *distance_out = std::sqrt(best);
  return best_id;
}

}  // namespace persyn
