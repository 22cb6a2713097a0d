#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "lift3d/assignment.hpp"
#include "lift3d/geometry.hpp"
#include "lift3d/kdtree.hpp"

namespace lift3d {

// Fixed evaluation constants.
inline constexpr double kFscoreThreshold = 0.01;
inline constexpr int kVoxelResolution = 64;
inline constexpr double kAddSThreshold = 0.1;
inline constexpr std::size_t kEmdExactCap = 2048;

namespace detail {

inline double mean_nn_distance(const PointCloud &from, const PointCloud &to) {
  KdTree tree(to.points);
  double sum = 0.0;
  for (const auto &p : from.points) sum += tree.nearest(p).distance;
  return sum / static_cast<double>(from.size());
}

inline double fraction_within(const PointCloud &from, const PointCloud &to,
                              double threshold) {
  KdTree tree(to.points);
  std::size_t hits = 0;
  for (const auto &p : from.points)
    if (tree.nearest(p).distance <= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(from.size());
}

}  // namespace detail

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// A point matches when its nearest neighbor in the other cloud is within
// `threshold` (inclusive).
inline FScore fscore(const PointCloud &pred, const PointCloud &gt,
                     double threshold = kFscoreThreshold) {
  require(!pred.empty() && !gt.empty(), "empty point cloud");
  FScore s;
  s.precision = detail::fraction_within(pred, gt, threshold);
  s.recall = detail::fraction_within(gt, pred, threshold);
  double denom = s.precision + s.recall;
  s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

inline double voxel_iou(const VoxelGrid &a, const VoxelGrid &b) {
  require(a.resolution == b.resolution, "voxel grids differ in resolution");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i) {
    inter += static_cast<std::size_t>(std::popcount(a.words[i] & b.words[i]));
    uni += static_cast<std::size_t>(std::popcount(a.words[i] | b.words[i]));
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double voxel_iou(const PointCloud &pred, const PointCloud &gt,
                        int resolution = kVoxelResolution,
                        VoxelizeMode mode = VoxelizeMode::strict) {
  require(!pred.empty() && !gt.empty(), "empty point cloud");
  return voxel_iou(voxelize(pred, resolution, mode),
                   voxelize(gt, resolution, mode));
}

// Symmetric mean nearest-neighbor distance, unsquared, averaged over the two
// directions: 0.5 * (mean_pred d(p, gt) + mean_gt d(g, pred)).
inline double chamfer(const PointCloud &pred, const PointCloud &gt) {
  require(!pred.empty() && !gt.empty(), "empty point cloud");
  return 0.5 * (detail::mean_nn_distance(pred, gt) +
                detail::mean_nn_distance(gt, pred));
}

inline CostMatrix euclidean_costs(const PointCloud &a, const PointCloud &b) {
  require(a.size() == b.size(), "point clouds differ in size");
  CostMatrix cost(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      cost(i, j) = (a[i] - b[j]).norm();
  return cost;
}

struct EmdResult {
  double distance = 0.0;  // mean matched Euclidean cost
  std::vector<std::size_t> assignment;
};

// Exact earth mover's distance between equal-size clouds: the minimum over
// bijections of the mean Euclidean matching cost.
inline EmdResult emd_exact_detailed(const PointCloud &pred, const PointCloud &gt,
                                    std::size_t cap = kEmdExactCap) {
  require(!pred.empty() && !gt.empty(), "empty point cloud");
  require(pred.size() == gt.size(),
          "unequal point counts; subsample to equal size first");
  require(pred.size() <= cap,
          "point count exceeds exact EMD cap; use emd_approx");
  Assignment a = solve_assignment(euclidean_costs(pred, gt));
  return {a.total_cost / static_cast<double>(pred.size()),
          std::move(a.row_to_col)};
}

inline double emd_exact(const PointCloud &pred, const PointCloud &gt,
                        std::size_t cap = kEmdExactCap) {
  return emd_exact_detailed(pred, gt, cap).distance;
}

struct SinkhornConfig {
  // Entropic regularization, relative to the largest pairwise cost so the
  // result scales linearly with the clouds.
  double epsilon = 0.01;
  int max_iterations = 20000;
  double tolerance = 1e-6;  // L1 row-marginal residual, total mass 1
};

struct EmdApprox {
  // Debiased entropic transport cost:
  // OT(pred, gt) - (OT(pred, pred) + OT(gt, gt)) / 2, where OT is the
  // transport cost of the entropic plan. Zero when the clouds coincide.
  double distance = 0.0;
  double entropic_cost = 0.0;  // OT(pred, gt) alone, biased upward
  double upper_bound = 0.0;    // cost of the rounded (greedy) assignment
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

struct SinkhornPlan {
  std::vector<double> f, g;
  double eps = 0.0;
  double residual = 0.0;
  int iterations = 0;

  double mass(const CostMatrix &cost, std::size_t i, std::size_t j) const {
    return std::exp((f[i] + g[j] - cost(i, j)) / eps);
  }
  double transport_cost(const CostMatrix &cost) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < cost.n; ++i)
      for (std::size_t j = 0; j < cost.n; ++j) sum += mass(cost, i, j) * cost(i, j);
    return sum;
  }
};

// Log-domain Sinkhorn between uniform marginals with epsilon annealing from
// the cost scale down to `target_eps`. For a symmetric cost (a cloud against
// itself) the potentials coincide and the averaged symmetric update is used,
// which converges far faster than alternating updates on a near-diagonal plan.
inline SinkhornPlan sinkhorn(const CostMatrix &cost, double target_eps,
                             const SinkhornConfig &config, bool symmetric = false) {
  const std::size_t n = cost.n;
  const double log_mass = -std::log(static_cast<double>(n));
  SinkhornPlan plan;
  plan.f.assign(n, 0.0);
  plan.g.assign(n, 0.0);
  std::vector<double> buf(n);
  auto lse = [&](const std::vector<double> &x) {
    double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
  };
  double max_cost = *std::max_element(cost.values.begin(), cost.values.end());
  double eps = std::max(target_eps, max_cost);
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    bool final_stage = eps <= target_eps;
    for (int it = 0; it < config.max_iterations; ++it) {
      ++plan.iterations;
      if (symmetric) {
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) buf[j] = (plan.f[j] - cost(i, j)) / eps;
          next[i] = 0.5 * (plan.f[i] + eps * (log_mass - lse(buf)));
        }
        plan.f = next;
        plan.g = std::move(next);
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) buf[j] = (plan.g[j] - cost(i, j)) / eps;
          plan.f[i] = eps * (log_mass - lse(buf));
        }
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t i = 0; i < n; ++i) buf[i] = (plan.f[i] - cost(i, j)) / eps;
          plan.g[j] = eps * (log_mass - lse(buf));
        }
      }
      // Columns are exact after the g update (and rows equal columns in the
      // symmetric case); measure the row marginals.
      residual = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          row += std::exp((plan.f[i] + plan.g[j] - cost(i, j)) / eps);
        residual += std::abs(row - 1.0 / static_cast<double>(n));
      }
      if (residual < (final_stage ? config.tolerance : 1e-3)) break;
    }
    if (final_stage) break;
    eps = std::max(target_eps, eps * 0.5);
  }
  plan.eps = eps;
  plan.residual = residual;
  if (!(residual < config.tolerance)) {
    std::ostringstream msg;
    msg << "Sinkhorn did not converge; residual " << residual;
    throw Error(msg.str());
  }
  return plan;
}

}  // namespace detail

// Approximate EMD by entropic-regularized transport. The two self-transport
// terms cancel the entropic blur, so the result is near the exact EMD (the
// gap shrinks with epsilon) and exactly zero for identical clouds. The greedy
// rounding of the cross plan gives a feasible matching, an upper bound.
inline EmdApprox emd_approx(const PointCloud &pred, const PointCloud &gt,
                            const SinkhornConfig &config = {}) {
  require(!pred.empty() && !gt.empty(), "empty point cloud");
  require(pred.size() == gt.size(),
          "unequal point counts; subsample to equal size first");
  require(config.epsilon > 0.0, "epsilon must be positive");
  const std::size_t n = pred.size();
  CostMatrix cost = euclidean_costs(pred, gt);
  double max_cost = *std::max_element(cost.values.begin(), cost.values.end());
  EmdApprox out;
  if (max_cost == 0.0) return out;

  const double eps = config.epsilon * max_cost;
  detail::SinkhornPlan cross =
      detail::sinkhorn(cost, eps, config, pred.points == gt.points);
  out.entropic_cost = cross.transport_cost(cost);
  out.iterations = cross.iterations;
  out.residual = cross.residual;
  double self_terms = 0.0;
  for (const PointCloud *c : {&pred, &gt}) {
    CostMatrix self_cost = euclidean_costs(*c, *c);
    detail::SinkhornPlan self = detail::sinkhorn(self_cost, eps, config, true);
    self_terms += 0.5 * self.transport_cost(self_cost);
    out.iterations += self.iterations;
    out.residual = std::max(out.residual, self.residual);
  }
  out.distance = std::max(0.0, out.entropic_cost - self_terms);

  struct Entry {
    double mass;
    std::uint32_t i, j;
  };
  std::vector<Entry> entries;
  entries.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      entries.push_back({cross.mass(cost, i, j), static_cast<std::uint32_t>(i),
                         static_cast<std::uint32_t>(j)});
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry &a, const Entry &b) { return a.mass > b.mass; });
  std::vector<char> row_used(n, 0), col_used(n, 0);
  std::size_t matched = 0;
  for (const auto &e : entries) {
    if (row_used[e.i] || col_used[e.j]) continue;
    row_used[e.i] = col_used[e.j] = 1;
    out.upper_bound += cost(e.i, e.j);
    if (++matched == n) break;
  }
  out.upper_bound /= static_cast<double>(n);
  return out;
}

// Exact farthest-pair distance. Dual-tree branch and bound over a median
// split hierarchy; box-to-box maximum distance prunes pairs that cannot beat
// the current best.
inline double cloud_diameter(std::span<const Vec3> points) {
  require(!points.empty(), "empty point set");
  struct Node {
    Aabb3 box;
    std::size_t begin, end;
    int left = -1, right = -1;
  };
  std::vector<std::uint32_t> order(points.size());
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  std::vector<Node> nodes;
  constexpr std::size_t kLeaf = 16;
  auto build = [&](auto &&self, std::size_t b, std::size_t e) -> int {
    Aabb3 box{points[order[b]], points[order[b]]};
    for (std::size_t i = b; i < e; ++i) {
      box.min = box.min.cwiseMin(points[order[i]]);
      box.max = box.max.cwiseMax(points[order[i]]);
    }
    int id = static_cast<int>(nodes.size());
    nodes.push_back({box, b, e});
    if (e - b <= kLeaf) return id;
    int axis = 0;
    box.extent().maxCoeff(&axis);
    if (box.extent()[axis] == 0.0) return id;
    std::size_t mid = b + (e - b) / 2;
    std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(mid),
                     order.begin() + static_cast<std::ptrdiff_t>(e),
                     [&](std::uint32_t x, std::uint32_t y) {
                       return points[x][axis] < points[y][axis];
                     });
    int l = self(self, b, mid);
    int r = self(self, mid, e);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  };
  build(build, 0, points.size());

  // Lower bound from a few farthest-point hops.
  double best2 = 0.0;
  std::size_t cur = 0;
  for (int hop = 0; hop < 4; ++hop) {
    std::size_t far = cur;
    double far2 = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d2 = (points[i] - points[cur]).squaredNorm();
      if (d2 > far2) {
        far2 = d2;
        far = i;
      }
    }
    best2 = std::max(best2, far2);
    cur = far;
  }

  auto max_dist2 = [](const Aabb3 &a, const Aabb3 &b) {
    Vec3 d = (a.max - b.min).cwiseAbs().cwiseMax((b.max - a.min).cwiseAbs());
    return d.squaredNorm();
  };
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [ia, ib] = stack.back();
    stack.pop_back();
    const Node &a = nodes[static_cast<std::size_t>(ia)];
    const Node &b = nodes[static_cast<std::size_t>(ib)];
    if (max_dist2(a.box, b.box) <= best2) continue;
    bool a_leaf = a.left < 0, b_leaf = b.left < 0;
    if (a_leaf && b_leaf) {
      for (std::size_t i = a.begin; i < a.end; ++i)
        for (std::size_t j = (ia == ib ? i + 1 : b.begin); j < b.end; ++j)
          best2 = std::max(best2,
                           (points[order[i]] - points[order[j]]).squaredNorm());
      continue;
    }
    if (ia == ib) {
      stack.push_back({a.left, a.left});
      stack.push_back({a.left, a.right});
      stack.push_back({a.right, a.right});
    } else if (!a_leaf && (b_leaf || a.end - a.begin >= b.end - b.begin)) {
      stack.push_back({a.left, ib});
      stack.push_back({a.right, ib});
    } else {
      stack.push_back({ia, b.left});
      stack.push_back({ia, b.right});
    }
  }
  return std::sqrt(best2);
}

// Symmetrized ADD-S, normalized by the ground-truth diameter:
// (ADD(pred, gt) + ADD(gt, pred)) / (2 d), ADD(A, B) = mean_a min_b |a - b|.
inline double add_s(const PointCloud &pred_posed, const PointCloud &gt_posed) {
  require(!pred_posed.empty() && !gt_posed.empty(), "empty point cloud");
  double diameter = cloud_diameter(gt_posed.points);
  require(diameter > 0.0, "ground-truth diameter is zero");
  double forward = detail::mean_nn_distance(pred_posed, gt_posed);
  double backward = detail::mean_nn_distance(gt_posed, pred_posed);
  return (forward + backward) / (2.0 * diameter);
}

// Success when ADD-S is strictly below the threshold (a fraction of the
// diameter).
inline bool add_s_at(double value, double threshold = kAddSThreshold) {
  require(value >= 0.0, "ADD-S must be non-negative");
  return value < threshold;
}

struct BoxIou {
  double value = 0.0;
  bool degenerate_union = false;
};

inline BoxIou aabb_iou_3d(const Aabb3 &a, const Aabb3 &b) {
  Aabb3 inter{a.min.cwiseMax(b.min), a.max.cwiseMin(b.max)};
  double vi = inter.volume();
  double vu = a.volume() + b.volume() - vi;
  if (!(vu > 0.0)) return {0.0, true};
  return {vi / vu, false};
}

}  // namespace lift3d
