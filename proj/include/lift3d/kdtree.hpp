#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "lift3d/geometry.hpp"

namespace lift3d {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Static 3-d tree for exact Euclidean nearest-neighbor queries. Ties on
// distance resolve to the lowest point index, so results match a brute-force
// scan bit-for-bit.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8)
      : points_(points.begin(), points.end()), leaf_size_(leaf_size) {
    require(!points_.empty(), "empty target point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    nodes_.reserve(2 * points_.size() / std::max<std::size_t>(leaf_size_, 1) + 1);
    build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }

  Neighbor nearest(const Vec3 &q) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best = std::numeric_limits<std::size_t>::max();
    search(0, q, best_d2, best);
    return {best, std::sqrt(best_d2)};
  }

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;  // range in order_ (leaves)
    std::int32_t left = -1, right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin),
                      static_cast<std::uint32_t>(end)});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all coincident

    std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    double split = points_[order_[mid]][axis];
    std::int32_t left = build(begin, mid);
    std::int32_t right = build(mid, end);
    Node &node = nodes_[static_cast<std::size_t>(id)];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  void search(std::int32_t id, const Vec3 &q, double &best_d2,
              std::size_t &best) const {
    const Node &node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        std::uint32_t idx = order_[i];
        double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      return;
    }
    // Left subtree holds coordinates <= split, right subtree >= split.
    double diff = q[node.axis] - node.split;
    std::int32_t near = diff < 0.0 ? node.left : node.right;
    std::int32_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, best_d2, best);
    if (diff * diff <= best_d2) search(far, q, best_d2, best);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

// Exact nearest neighbor in `target` for each query point.
inline std::vector<Neighbor> nearest_neighbors(std::span<const Vec3> query,
                                               std::span<const Vec3> target) {
  require(!target.empty(), "empty target point set");
  KdTree tree(target);
  std::vector<Neighbor> out(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) out[i] = tree.nearest(query[i]);
  return out;
}

inline std::vector<Neighbor> nearest_neighbors(const PointCloud &query,
                                               const PointCloud &target) {
  return nearest_neighbors(std::span<const Vec3>(query.points),
                           std::span<const Vec3>(target.points));
}

}  // namespace lift3d
