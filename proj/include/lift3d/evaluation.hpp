#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lift3d/geometry.hpp"
#include "lift3d/metrics.hpp"
#include "lift3d/registration.hpp"

namespace lift3d {

enum class InitialAlignment {
  identity,    // ICP from the identity after normalization
  multistart,  // coarse ICP from a rotation grid, best start refined
};

struct ShapeEvalConfig {
  std::size_t n_points = 1'000'000;
  std::size_t emd_subsample = 1024;
  std::uint64_t seed = 0;
  double fscore_threshold = kFscoreThreshold;
  int voxel_resolution = kVoxelResolution;
  InitialAlignment alignment = InitialAlignment::multistart;
  GlobalIcpConfig registration = [] {
    GlobalIcpConfig g;
    // Independent unit-cube normalization is not rotation invariant (the
    // AABB of a rotated shape is larger), so the registration solves a
    // uniform scale along with the rigid motion.
    g.refine.estimate_scale = true;
    // Point-to-point ICP slides slowly along smooth surfaces; the defaults
    // stop well short of sub-sample-spacing accuracy.
    g.refine.max_iterations = 300;
    g.refine.convergence_tol = 1e-10;
    return g;
  }();
};

struct ShapeReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double voxel_iou = 0.0;
  double chamfer = 0.0;
  double emd = 0.0;

  struct Metadata {
    std::size_t n_points = 0;
    std::size_t emd_points = 0;
    double threshold = kFscoreThreshold;
    int voxel_resolution = kVoxelResolution;
    std::uint64_t seed = 0;
    double icp_rmse = 0.0;
    int icp_iterations = 0;
    double icp_scale = 1.0;
  } metadata;
};

// Deterministic subset of `k` indices out of `n` (partial Fisher-Yates),
// returned in increasing order.
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t k,
                                                  Rng &rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline PointCloud gather(const PointCloud &cloud,
                         const std::vector<std::size_t> &indices) {
  PointCloud out;
  out.points.reserve(indices.size());
  for (auto i : indices) out.points.push_back(cloud[i]);
  return out;
}

struct ShapeEvaluation {
  ShapeReport report;
  PointCloud aligned_pred;  // normalized, registered prediction samples
  PointCloud gt;            // normalized reference samples
  std::vector<std::size_t> emd_indices;
};

// Shape metrics for a predicted vs reference mesh: both surfaces are sampled
// with the same seed, normalized independently to the unit cube, the
// prediction is registered onto the reference, and F1 / vIoU / Chamfer / EMD
// are computed on the aligned clouds. EMD uses a seeded subsample solved
// exactly.
inline ShapeEvaluation eval_shape_detailed(const TriangleMesh &pred_mesh,
                                           const TriangleMesh &gt_mesh,
                                           const ShapeEvalConfig &config = {}) {
  require(config.n_points >= 3, "n_points must be at least 3");
  require(config.emd_subsample >= 1, "emd_subsample must be positive");
  PointCloud pred =
      normalize_unit_cube(sample_surface(pred_mesh, config.n_points, config.seed))
          .cloud;
  ShapeEvaluation out;
  out.gt = normalize_unit_cube(sample_surface(gt_mesh, config.n_points, config.seed))
               .cloud;

  IcpResult reg = config.alignment == InitialAlignment::multistart
                      ? icp_multistart(pred, out.gt, config.registration)
                      : icp(pred, out.gt, config.registration.refine);
  out.aligned_pred = transform_cloud(pred, reg.transform);
  const PointCloud &aligned = out.aligned_pred;

  ShapeReport &report = out.report;
  FScore f = fscore(aligned, out.gt, config.fscore_threshold);
  report.f1 = f.f1;
  report.precision = f.precision;
  report.recall = f.recall;
  // Registration can push a few points marginally outside [-1, 1].
  report.voxel_iou =
      voxel_iou(aligned, out.gt, config.voxel_resolution, VoxelizeMode::lenient);
  report.chamfer = chamfer(aligned, out.gt);

  Rng rng(config.seed, 1);
  out.emd_indices = subsample_indices(aligned.size(), config.emd_subsample, rng);
  report.emd = emd_exact(gather(aligned, out.emd_indices),
                         gather(out.gt, out.emd_indices),
                         std::max(kEmdExactCap, out.emd_indices.size()));

  report.metadata.n_points = config.n_points;
  report.metadata.emd_points = out.emd_indices.size();
  report.metadata.threshold = config.fscore_threshold;
  report.metadata.voxel_resolution = config.voxel_resolution;
  report.metadata.seed = config.seed;
  report.metadata.icp_rmse = reg.rmse;
  report.metadata.icp_iterations = reg.iterations;
  report.metadata.icp_scale = reg.transform.scale;
  return out;
}

inline ShapeReport eval_shape(const TriangleMesh &pred_mesh,
                              const TriangleMesh &gt_mesh,
                              const ShapeEvalConfig &config = {}) {
  return eval_shape_detailed(pred_mesh, gt_mesh, config).report;
}

struct PosedMesh {
  TriangleMesh mesh;
  Pose pose;
};

struct LayoutEvalConfig {
  std::size_t n_points = 10'000;
  std::uint64_t seed = 0;
  double add_s_threshold = kAddSThreshold;
  IcpConfig icp;
};

struct LayoutReport {
  double iou3d = 0.0;
  double icp_rot_deg = 0.0;
  double add_s = 0.0;
  bool add_s_at_01 = false;
  bool iou_degenerate = false;
};

// Layout metrics for predicted vs reference placements of a shape: 3D IoU of
// the posed AABBs, residual ICP rotation, and ADD-S with its @0.1 indicator.
inline LayoutReport eval_layout(const PosedMesh &pred, const PosedMesh &gt,
                                const LayoutEvalConfig &config = {}) {
  PointCloud pred_local = sample_surface(pred.mesh, config.n_points, config.seed);
  PointCloud gt_local = sample_surface(gt.mesh, config.n_points, config.seed);
  PointCloud pred_posed = apply_pose(pred_local, pred.pose);
  PointCloud gt_posed = apply_pose(gt_local, gt.pose);

  auto scaled = [](const PointCloud &cloud, const Vec3 &s) {
    PointCloud out = cloud;
    for (auto &p : out.points) p = p.cwiseProduct(s);
    return out;
  };

  LayoutReport report;
  BoxIou box = aabb_iou_3d(aabb(pred_posed), aabb(gt_posed));
  report.iou3d = box.value;
  report.iou_degenerate = box.degenerate_union;
  report.icp_rot_deg = icp_rotation_error(
      pred.pose.rotation, gt.pose.rotation, scaled(pred_local, pred.pose.scale),
      scaled(gt_local, gt.pose.scale), config.icp);
  report.add_s = add_s(pred_posed, gt_posed);
  report.add_s_at_01 = add_s_at(report.add_s, config.add_s_threshold);
  return report;
}

}  // namespace lift3d
