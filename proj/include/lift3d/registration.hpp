#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "lift3d/geometry.hpp"
#include "lift3d/kdtree.hpp"

namespace lift3d {

// x' = rotation * x + translation
struct RigidTransform {
  RotationMatrix rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3 &x) const { return rotation * x + translation; }
  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
};

// x' = scale * rotation * x + translation. scale == 1 for rigid fits.
struct SimilarityFit {
  RigidTransform rigid;
  double scale = 1.0;

  Vec3 apply(const Vec3 &x) const {
    return scale * (rigid.rotation * x) + rigid.translation;
  }
};

inline PointCloud transform_cloud(const PointCloud &cloud,
                                  const SimilarityFit &fit) {
  PointCloud out = cloud;
  for (auto &p : out.points) p = fit.apply(p);
  return out;
}

inline PointCloud transform_cloud(const PointCloud &cloud,
                                  const RigidTransform &t) {
  return transform_cloud(cloud, SimilarityFit{t, 1.0});
}

inline PointCloud rotate_cloud(const PointCloud &cloud,
                               const RotationMatrix &r) {
  return transform_cloud(cloud, RigidTransform{r, Vec3::Zero()});
}

inline Vec3 centroid(std::span<const Vec3> points) {
  require(!points.empty(), "empty point set");
  Vec3 sum = Vec3::Zero();
  for (const auto &p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

namespace detail {

// Least-squares fit of dst ~ s R src + t over paired points (Umeyama 1991).
// With estimate_scale false this is the Kabsch solution. Reflections are
// excluded by flipping the weakest singular direction.
inline SimilarityFit fit_paired(std::span<const Vec3> src,
                                std::span<const Vec3> dst,
                                bool estimate_scale) {
  require(src.size() == dst.size(), "paired point sets differ in size");
  require(src.size() >= 3, "at least 3 point pairs required");
  Vec3 cs = centroid(src), cd = centroid(dst);
  Mat3 h = Mat3::Zero();
  double src_var = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    Vec3 a = src[i] - cs;
    h += a * (dst[i] - cd).transpose();
    src_var += a.squaredNorm();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sv = svd.singularValues();
  require(sv[0] > 0.0 && sv[1] > 1e-10 * sv[0],
          "degenerate point configuration (collinear)");
  const Mat3 &u = svd.matrixU();
  const Mat3 &v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Mat3 r = v * d * u.transpose();

  SimilarityFit fit;
  fit.rigid.rotation = orthonormal_unchecked(r);
  if (estimate_scale) {
    require(src_var > 0.0, "degenerate point configuration");
    fit.scale = (sv.asDiagonal() * d).trace() / src_var;
  }
  fit.rigid.translation = cd - fit.scale * (r * cs);
  return fit;
}

}  // namespace detail

// Proper rigid transform minimizing sum |R src_i + t - dst_i|^2.
inline RigidTransform kabsch(const PointCloud &src, const PointCloud &dst) {
  return detail::fit_paired(src.points, dst.points, false).rigid;
}

inline SimilarityFit umeyama(const PointCloud &src, const PointCloud &dst) {
  return detail::fit_paired(src.points, dst.points, true);
}

struct IcpConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-6;  // on the RMSE decrease per iteration
  double max_correspondence_distance = std::numeric_limits<double>::infinity();
  double trim_fraction = 0.0;  // worst pairs dropped per iteration, [0, 1)
  bool estimate_scale = false;  // similarity instead of rigid fit
  // Start from the translation that aligns the centroids (composed with the
  // caller's initial rotation) instead of the initial transform as given.
  bool align_centroids = false;

  void validate() const {
    require(max_iterations >= 1, "max_iterations must be >= 1");
    require(convergence_tol > 0.0, "convergence_tol must be positive");
    require(max_correspondence_distance > 0.0,
            "max_correspondence_distance must be positive");
    require(trim_fraction >= 0.0 && trim_fraction < 1.0,
            "trim_fraction must be in [0, 1)");
  }
};

struct IcpResult {
  SimilarityFit transform;
  double rmse = 0.0;
  int iterations = 0;
  // Set when a fit step failed (too few or collinear correspondences); the
  // best transform found before the failure is returned.
  bool degenerate_step = false;
  std::vector<double> rmse_history;

  const RigidTransform &rigid() const { return transform.rigid; }
};

namespace detail {

struct Correspondences {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  double rmse = 0.0;
};

inline Correspondences correspond(const PointCloud &src, const PointCloud &dst,
                                  const KdTree &tree, const SimilarityFit &fit,
                                  const IcpConfig &config) {
  struct Pair {
    double d2;
    std::uint32_t src, dst;
  };
  std::vector<Pair> pairs;
  pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    Vec3 moved = fit.apply(src[i]);
    Neighbor nb = tree.nearest(moved);
    if (nb.distance > config.max_correspondence_distance) continue;
    pairs.push_back({nb.distance * nb.distance, static_cast<std::uint32_t>(i),
                     static_cast<std::uint32_t>(nb.index)});
  }
  if (config.trim_fraction > 0.0 && !pairs.empty()) {
    auto keep = static_cast<std::size_t>(
        std::ceil((1.0 - config.trim_fraction) * static_cast<double>(pairs.size())));
    keep = std::max<std::size_t>(keep, 1);
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair &a, const Pair &b) { return a.d2 < b.d2; });
    pairs.resize(keep);
  }
  Correspondences c;
  double sum = 0.0;
  for (const auto &p : pairs) {
    c.src.push_back(src[p.src]);
    c.dst.push_back(dst[p.dst]);
    sum += p.d2;
  }
  c.rmse = pairs.empty() ? std::numeric_limits<double>::infinity()
                         : std::sqrt(sum / static_cast<double>(pairs.size()));
  return c;
}

inline IcpResult icp_with_tree(const PointCloud &src, const PointCloud &dst,
                               const KdTree &tree, const IcpConfig &config,
                               const SimilarityFit &init) {
  IcpResult result;
  result.transform = init;
  Correspondences corr = correspond(src, dst, tree, init, config);
  result.rmse = corr.rmse;
  result.rmse_history.push_back(corr.rmse);
  for (int it = 1; it <= config.max_iterations; ++it) {
    SimilarityFit next;
    try {
      next = fit_paired(corr.src, corr.dst, config.estimate_scale);
    } catch (const Error &) {
      result.degenerate_step = true;
      break;
    }
    Correspondences next_corr = correspond(src, dst, tree, next, config);
    result.iterations = it;
    // Without trimming or a distance cap the RMSE cannot increase; with them
    // a changed inlier set can, so stop and keep the better transform.
    if (!(next_corr.rmse <= result.rmse)) break;
    double delta = result.rmse - next_corr.rmse;
    result.transform = next;
    result.rmse = next_corr.rmse;
    result.rmse_history.push_back(next_corr.rmse);
    corr = std::move(next_corr);
    if (delta < config.convergence_tol) break;
  }
  return result;
}

}  // namespace detail

// Point-to-point ICP registering src onto dst, starting from `init`
// (identity by default). Deterministic.
inline IcpResult icp(const PointCloud &src, const PointCloud &dst,
                     const IcpConfig &config = {},
                     const SimilarityFit &init = {}) {
  config.validate();
  require(src.size() >= 3 && dst.size() >= 3,
          "ICP requires at least 3 points per cloud");
  KdTree tree(dst.points);
  SimilarityFit start = init;
  if (config.align_centroids)
    start.rigid.translation = centroid(dst.points) -
                              start.scale * (start.rigid.rotation * centroid(src.points));
  return detail::icp_with_tree(src, dst, tree, config, start);
}

// Deterministic near-uniform rotation set (super-Fibonacci spiral, Alexa
// 2022). Element 0 is not special; callers that want identity add it.
inline std::vector<RotationMatrix> rotation_grid(std::size_t n) {
  constexpr double kPhi = 1.4142135623730950488;
  constexpr double kPsi = 1.5337511687552042881;
  std::vector<RotationMatrix> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = static_cast<double>(i) + 0.5;
    double t = s / static_cast<double>(n);
    double r = std::sqrt(t), big_r = std::sqrt(1.0 - t);
    double alpha = 2.0 * std::numbers::pi * s / kPhi;
    double beta = 2.0 * std::numbers::pi * s / kPsi;
    out.push_back(RotationMatrix::from_quaternion(
        big_r * std::cos(beta), r * std::sin(alpha), r * std::cos(alpha),
        big_r * std::sin(beta)));
  }
  return out;
}

struct GlobalIcpConfig {
  IcpConfig refine;
  std::size_t rotation_starts = 192;   // in addition to identity
  std::size_t coarse_points = 300;     // per cloud, strided subsample
  int coarse_iterations = 15;
  std::size_t refine_candidates = 3;   // best coarse results refined further
  std::size_t candidate_points = 2000; // per cloud, for choosing a candidate
  bool principal_axis_starts = true;   // also start from the PCA frame alignments
};

namespace detail {

// Rotations taking the principal axes of `src` onto those of `dst`, one per
// proper choice of axis signs. Empty when either cloud's covariance is
// degenerate.
inline std::vector<RotationMatrix> principal_axis_rotations(std::span<const Vec3> src,
                                                           std::span<const Vec3> dst) {
  auto axes = [](std::span<const Vec3> pts) -> std::optional<Mat3> {
    Vec3 c = centroid(pts);
    Mat3 cov = Mat3::Zero();
    for (const auto &p : pts) cov += (p - c) * (p - c).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    if (eig.info() != Eigen::Success || !(eig.eigenvalues()[0] > 0.0)) return std::nullopt;
    return eig.eigenvectors();
  };
  auto es = axes(src), ed = axes(dst);
  std::vector<RotationMatrix> out;
  if (!es || !ed) return out;
  for (double sx : {1.0, -1.0})
    for (double sy : {1.0, -1.0}) {
      Vec3 signs(sx, sy, 1.0);
      Mat3 r = *ed * signs.asDiagonal() * es->transpose();
      if (r.determinant() < 0.0) {
        signs.z() = -1.0;
        r = *ed * signs.asDiagonal() * es->transpose();
      }
      out.push_back(RotationMatrix::from_matrix(r));
    }
  return out;
}

}  // namespace detail

// Multi-start ICP: coarse ICP from identity, from the principal-axis
// alignments, and from a uniform grid of start rotations (with centroids
// aligned) on strided subsamples, then ICP on medium subsamples from the few
// best coarse results, and a final full ICP from the winner. Identity is tried first and ties keep the earlier start.
// Starts are ranked by the symmetric mean nearest-neighbor distance rather
// than the one-sided RMSE, which a shrinking scale can drive toward zero.
inline IcpResult icp_multistart(const PointCloud &src, const PointCloud &dst,
                                const GlobalIcpConfig &config = {}) {
  config.refine.validate();
  require(src.size() >= 3 && dst.size() >= 3,
          "ICP requires at least 3 points per cloud");
  auto subsample = [&](const PointCloud &cloud, std::size_t n) {
    if (cloud.size() <= n) return cloud;
    PointCloud out;
    double stride = static_cast<double>(cloud.size()) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
      out.points.push_back(
          cloud[static_cast<std::size_t>(static_cast<double>(k) * stride)]);
    return out;
  };
  PointCloud src_small = subsample(src, config.coarse_points);
  PointCloud dst_small = subsample(dst, config.coarse_points);
  KdTree small_tree(dst_small.points);
  Vec3 cs = centroid(src.points), cd = centroid(dst.points);
  auto symmetric_score = [](const PointCloud &from, const KdTree &to_tree, const PointCloud &to,
                            const SimilarityFit &fit) {
    PointCloud moved = transform_cloud(from, fit);
    KdTree moved_tree(moved.points);
    double forward = 0.0, backward = 0.0;
    for (const auto &p : moved.points) forward += to_tree.nearest(p).distance;
    for (const auto &q : to.points) backward += moved_tree.nearest(q).distance;
    return 0.5 * (forward / static_cast<double>(moved.size()) +
                  backward / static_cast<double>(to.size()));
  };

  IcpConfig coarse = config.refine;
  coarse.max_iterations = config.coarse_iterations;

  std::vector<RotationMatrix> starts{RotationMatrix::identity()};
  if (config.principal_axis_starts) {
    auto extra = detail::principal_axis_rotations(src.points, dst.points);
    starts.insert(starts.end(), extra.begin(), extra.end());
  }
  auto grid = rotation_grid(config.rotation_starts);
  starts.insert(starts.end(), grid.begin(), grid.end());

  struct Candidate {
    double score;
    SimilarityFit fit;
  };
  std::vector<Candidate> coarse_results;
  coarse_results.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    SimilarityFit init;
    if (i > 0) {
      init.rigid.rotation = starts[i];
      init.rigid.translation = cd - starts[i] * cs;
    }
    IcpResult r =
        detail::icp_with_tree(src_small, dst_small, small_tree, coarse, init);
    coarse_results.push_back(
        {symmetric_score(src_small, small_tree, dst_small, r.transform), r.transform});
  }
  std::stable_sort(coarse_results.begin(), coarse_results.end(),
                   [](const Candidate &a, const Candidate &b) { return a.score < b.score; });

  PointCloud src_mid = subsample(src, config.candidate_points);
  PointCloud dst_mid = subsample(dst, config.candidate_points);
  KdTree mid_tree(dst_mid.points);
  SimilarityFit best_init = coarse_results.front().fit;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t k = std::min(std::max<std::size_t>(config.refine_candidates, 1),
                           coarse_results.size());
  for (std::size_t c = 0; c < k; ++c) {
    IcpResult r = detail::icp_with_tree(src_mid, dst_mid, mid_tree, config.refine,
                                        coarse_results[c].fit);
    double score = symmetric_score(src_mid, mid_tree, dst_mid, r.transform);
    if (score < best_score) {
      best_score = score;
      best_init = r.transform;
    }
  }
  return icp(src, dst, config.refine, best_init);
}

// Residual rotation after ICP between the two posed shapes, in degrees. Each
// posed cloud is centered on its centroid first so only rotation is measured.
inline double icp_rotation_error(const RotationMatrix &r_pred,
                                 const RotationMatrix &r_gt,
                                 const PointCloud &shape_pred,
                                 const PointCloud &shape_gt,
                                 const IcpConfig &config = {}) {
  auto posed_centered = [](const PointCloud &shape, const RotationMatrix &r) {
    PointCloud out = rotate_cloud(shape, r);
    Vec3 c = centroid(out.points);
    for (auto &p : out.points) p -= c;
    return out;
  };
  PointCloud pred = posed_centered(shape_pred, r_pred);
  PointCloud gt = posed_centered(shape_gt, r_gt);
  IcpResult result = icp(pred, gt, config);
  return rotation_angle_deg(result.rigid().rotation);
}

}  // namespace lift3d
