#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lift3d/error.hpp"
#include "lift3d/random.hpp"

namespace lift3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<std::uint32_t, 3>;
using Color = std::array<std::uint8_t, 3>;

inline bool all_finite(const Vec3 &v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  // Optional per-vertex colors; either empty or one per vertex.
  std::vector<Color> colors;

  bool empty() const { return faces.empty(); }

  void validate() const {
    for (const auto &v : vertices) require(all_finite(v), "non-finite vertex");
    for (const auto &f : faces)
      for (auto idx : f)
        require(idx < vertices.size(), "face index out of range");
    require(colors.empty() || colors.size() == vertices.size(),
            "color count does not match vertex count");
  }

  double face_area(std::size_t i) const {
    const auto &f = faces[i];
    return 0.5 * (vertices[f[1]] - vertices[f[0]])
                     .cross(vertices[f[2]] - vertices[f[0]])
                     .norm();
  }

  Vec3 face_normal(std::size_t i) const {
    const auto &f = faces[i];
    Vec3 n = (vertices[f[1]] - vertices[f[0]])
                 .cross(vertices[f[2]] - vertices[f[0]]);
    double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }

  double surface_area() const {
    double total = 0.0;
    for (std::size_t i = 0; i < faces.size(); ++i) total += face_area(i);
    return total;
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  // Optional non-negative weights; either empty or one per point.
  std::vector<double> weights;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Vec3 &operator[](std::size_t i) const { return points[i]; }

  void validate() const {
    for (const auto &p : points) require(all_finite(p), "non-finite point");
    if (!weights.empty()) {
      require(weights.size() == points.size(), "weight count mismatch");
      double sum = 0.0;
      for (double w : weights) {
        require(w >= 0.0 && std::isfinite(w), "negative weight");
        sum += w;
      }
      require(sum > 0.0, "weights sum to zero");
    }
  }
};

struct Aabb3 {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const {
    Vec3 e = extent().cwiseMax(0.0);
    return e.x() * e.y() * e.z();
  }
  double diagonal() const { return extent().norm(); }
  bool contains(const Aabb3 &other) const {
    return (min.array() <= other.min.array()).all() &&
           (max.array() >= other.max.array()).all();
  }
  Aabb3 merged(const Aabb3 &other) const {
    return {min.cwiseMin(other.min), max.cwiseMax(other.max)};
  }
};

inline Aabb3 aabb(std::span<const Vec3> points) {
  require(!points.empty(), "empty point set");
  Aabb3 box{points[0], points[0]};
  for (const auto &p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

inline Aabb3 aabb(const PointCloud &cloud) { return aabb(cloud.points); }

// ---------------------------------------------------------------------------
// Rotations

// Proper rotation, column-vector convention (x' = R x), right-handed.
class RotationMatrix {
 public:
  static constexpr double kTolerance = 1e-6;

  RotationMatrix() : m_(Mat3::Identity()) {}

  static RotationMatrix from_matrix(const Mat3 &m) {
    require(m.allFinite(), "non-finite rotation");
    require((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() <=
                kTolerance,
            "rotation is not orthonormal");
    require(std::abs(m.determinant() - 1.0) <= kTolerance,
            "rotation determinant is not +1");
    return RotationMatrix(m);
  }

  static RotationMatrix from_row_major(std::span<const double, 9> values) {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = values[3 * r + c];
    return from_matrix(m);
  }

  static RotationMatrix identity() { return {}; }

  static RotationMatrix about_axis(const Vec3 &axis, double radians) {
    return RotationMatrix(
        Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix());
  }

  // Unit quaternion (w, x, y, z); the input is normalized.
  static RotationMatrix from_quaternion(double w, double x, double y, double z) {
    Eigen::Quaterniond q(w, x, y, z);
    q.normalize();
    return RotationMatrix(q.toRotationMatrix());
  }

  const Mat3 &matrix() const { return m_; }
  RotationMatrix transpose() const { return RotationMatrix(m_.transpose()); }
  RotationMatrix operator*(const RotationMatrix &o) const {
    return RotationMatrix(m_ * o.m_);
  }
  Vec3 operator*(const Vec3 &v) const { return m_ * v; }

  std::array<double, 9> row_major() const {
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out[3 * r + c] = m_(r, c);
    return out;
  }

 private:
  explicit RotationMatrix(const Mat3 &m) : m_(m) {}
  Mat3 m_;

  friend RotationMatrix orthonormal_unchecked(const Mat3 &m);
};

// For callers that have just produced an orthonormal matrix by construction
// (Gram-Schmidt, SVD); skips the tolerance check.
inline RotationMatrix orthonormal_unchecked(const Mat3 &m) {
  return RotationMatrix(m);
}

// First two matrix columns: [c0.x, c0.y, c0.z, c1.x, c1.y, c1.z].
using Rotation6D = std::array<double, 6>;

struct Rot6dStats {
  Rotation6D mean{};
  Rotation6D stddev{1, 1, 1, 1, 1, 1};
};

inline RotationMatrix rot6d_to_matrix(const Rotation6D &r6) {
  Vec3 a1(r6[0], r6[1], r6[2]);
  Vec3 a2(r6[3], r6[4], r6[5]);
  require(all_finite(a1) && all_finite(a2), "degenerate 6D rotation");
  double n1 = a1.norm();
  require(n1 > 1e-9, "degenerate 6D rotation");
  Vec3 b1 = a1 / n1;
  Vec3 u2 = a2 - a2.dot(b1) * b1;
  double n2 = u2.norm();
  require(n2 > 1e-9, "degenerate 6D rotation");
  Vec3 b2 = u2 / n2;
  Vec3 b3 = b1.cross(b2);
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b3;
  return orthonormal_unchecked(m);
}

inline Rotation6D matrix_to_rot6d(const RotationMatrix &rotation) {
  const Mat3 &m = rotation.matrix();
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

inline Rotation6D normalize_rot6d(const Rotation6D &r6, const Rot6dStats &stats) {
  Rotation6D out{};
  for (int i = 0; i < 6; ++i) {
    require(stats.stddev[i] > 0.0, "6D normalization stddev must be positive");
    out[i] = (r6[i] - stats.mean[i]) / stats.stddev[i];
  }
  return out;
}

inline Rotation6D denormalize_rot6d(const Rotation6D &r6,
                                    const Rot6dStats &stats) {
  Rotation6D out{};
  for (int i = 0; i < 6; ++i) {
    require(stats.stddev[i] > 0.0, "6D normalization stddev must be positive");
    out[i] = r6[i] * stats.stddev[i] + stats.mean[i];
  }
  return out;
}

inline double rotation_angle_deg(const Mat3 &m) {
  double c = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline double rotation_angle_deg(const RotationMatrix &rotation) {
  return rotation_angle_deg(rotation.matrix());
}

// Uniformly distributed rotation (Shoemake's subgroup algorithm).
inline RotationMatrix random_rotation(Rng &rng) {
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return RotationMatrix::from_quaternion(b * std::cos(t3), a * std::sin(t2),
                                         a * std::cos(t2), b * std::sin(t3));
}

// ---------------------------------------------------------------------------
// Pose: scale, then rotate, then translate.

struct Pose {
  RotationMatrix rotation;
  Vec3 translation = Vec3::Zero();
  Vec3 scale = Vec3::Ones();

  void validate() const {
    require(all_finite(translation), "non-finite translation");
    require(all_finite(scale) && (scale.array() > 0.0).all(),
            "pose scale must be positive and finite");
  }

  Vec3 apply(const Vec3 &x) const {
    return rotation * Vec3(scale.cwiseProduct(x)) + translation;
  }

  // Exact inverse when the scale is uniform.
  Pose inverse_uniform() const {
    require(scale.x() == scale.y() && scale.y() == scale.z(),
            "inverse_uniform requires a uniform scale");
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.scale = scale.cwiseInverse();
    inv.translation = -(inv.rotation * translation) / scale.x();
    return inv;
  }
};

inline PointCloud apply_pose(const PointCloud &cloud, const Pose &pose) {
  pose.validate();
  PointCloud out = cloud;
  for (auto &p : out.points) p = pose.apply(p);
  return out;
}

inline TriangleMesh apply_pose(const TriangleMesh &mesh, const Pose &pose) {
  pose.validate();
  TriangleMesh out = mesh;
  for (auto &v : out.vertices) v = pose.apply(v);
  return out;
}

// ---------------------------------------------------------------------------
// Surface sampling

struct SurfaceSamples {
  PointCloud cloud;
  std::vector<std::uint32_t> face_index;
};

// Area-weighted uniform surface sampling. Face choice inverts the cumulative
// area table; the in-triangle position uses the square-root barycentric map.
inline SurfaceSamples sample_surface_detailed(const TriangleMesh &mesh,
                                              std::size_t n,
                                              std::uint64_t seed) {
  mesh.validate();
  require(n >= 1, "sample count must be positive");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    total += mesh.face_area(i);
    cumulative[i] = total;
  }
  require(total > 0.0 && std::isfinite(total), "degenerate mesh");

  Rng rng(seed);
  SurfaceSamples out;
  out.cloud.points.reserve(n);
  out.face_index.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    std::size_t fi = std::min<std::size_t>(it - cumulative.begin(),
                                           mesh.faces.size() - 1);
    // Zero-area faces share their cumulative value with a predecessor and can
    // never be the upper bound of a strictly increasing target.
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    const auto &f = mesh.faces[fi];
    const Vec3 &a = mesh.vertices[f[0]];
    const Vec3 &b = mesh.vertices[f[1]];
    const Vec3 &c = mesh.vertices[f[2]];
    out.cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b +
                               r1 * r2 * c);
    out.face_index.push_back(static_cast<std::uint32_t>(fi));
  }
  return out;
}

inline PointCloud sample_surface(const TriangleMesh &mesh, std::size_t n,
                                 std::uint64_t seed) {
  return sample_surface_detailed(mesh, n, seed).cloud;
}

// ---------------------------------------------------------------------------
// Unit-cube normalization

// x' = (x - center) * scale
struct SimilarityTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3 &x) const { return (x - center) * scale; }
  Vec3 invert(const Vec3 &y) const { return y / scale + center; }
};

struct NormalizedCloud {
  PointCloud cloud;
  SimilarityTransform transform;
};

// Uniform scale + translation so the AABB is centered at the origin and its
// longest axis spans exactly [-1, 1].
inline NormalizedCloud normalize_unit_cube(const PointCloud &points) {
  require(!points.empty(), "empty point set");
  Aabb3 box = aabb(points);
  double longest = box.extent().maxCoeff();
  require(longest > 0.0, "zero extent");
  NormalizedCloud out;
  out.transform.center = box.center();
  out.transform.scale = 2.0 / longest;
  out.cloud = points;
  for (auto &p : out.cloud.points) p = out.transform.apply(p);
  return out;
}

inline PointCloud invert_normalization(const PointCloud &points,
                                       const SimilarityTransform &transform) {
  PointCloud out = points;
  for (auto &p : out.points) p = transform.invert(p);
  return out;
}

// ---------------------------------------------------------------------------
// Voxelization

struct VoxelGrid {
  int resolution = 64;
  Aabb3 domain{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  std::vector<std::uint64_t> words;

  VoxelGrid() : VoxelGrid(64) {}
  explicit VoxelGrid(int res, Aabb3 dom = {Vec3::Constant(-1.0),
                                           Vec3::Constant(1.0)})
      : resolution(res), domain(dom) {
    require(res >= 1, "voxel resolution must be positive");
    words.assign((cell_count() + 63) / 64, 0);
  }

  std::size_t cell_count() const {
    auto r = static_cast<std::size_t>(resolution);
    return r * r * r;
  }
  std::size_t linear(int i, int j, int k) const {
    auto r = static_cast<std::size_t>(resolution);
    return (static_cast<std::size_t>(i) * r + static_cast<std::size_t>(j)) * r +
           static_cast<std::size_t>(k);
  }
  void set(int i, int j, int k) {
    std::size_t idx = linear(i, j, k);
    words[idx >> 6] |= std::uint64_t{1} << (idx & 63);
  }
  bool test(int i, int j, int k) const {
    std::size_t idx = linear(i, j, k);
    return (words[idx >> 6] >> (idx & 63)) & 1;
  }
  std::size_t count() const {
    std::size_t total = 0;
    for (auto w : words) total += static_cast<std::size_t>(std::popcount(w));
    return total;
  }
  bool operator==(const VoxelGrid &o) const {
    return resolution == o.resolution && words == o.words;
  }
};

enum class VoxelizeMode { strict, lenient };

inline VoxelGrid voxelize(const PointCloud &points, int resolution = 64,
                          VoxelizeMode mode = VoxelizeMode::strict,
                          Aabb3 domain = {Vec3::Constant(-1.0),
                                          Vec3::Constant(1.0)}) {
  VoxelGrid grid(resolution, domain);
  Vec3 span = domain.extent();
  require((span.array() > 0.0).all(), "voxel domain must have positive extent");
  for (std::size_t n = 0; n < points.size(); ++n) {
    const Vec3 &p = points[n];
    require(all_finite(p), "non-finite point at index " + std::to_string(n));
    bool inside = (p.array() >= domain.min.array()).all() &&
                  (p.array() <= domain.max.array()).all();
    if (!inside && mode == VoxelizeMode::strict)
      throw Error("point outside voxel domain at index " + std::to_string(n));
    std::array<int, 3> cell{};
    for (int a = 0; a < 3; ++a) {
      double t = (p[a] - domain.min[a]) / span[a] * resolution;
      double clamped = std::clamp(std::floor(t), 0.0,
                                  static_cast<double>(resolution - 1));
      cell[a] = static_cast<int>(clamped);
    }
    grid.set(cell[0], cell[1], cell[2]);
  }
  return grid;
}

}  // namespace lift3d
