#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "lift3d/geometry.hpp"

namespace lift3d {

struct MeshFilterConfig {
  double min_volume = 1e-4;
  double min_normal_variance = 1e-3;
  double outlier_factor = 1.5;
};

struct MeshVerdict {
  bool pass = true;
  std::string reason;  // empty when pass

  static MeshVerdict accept() { return {}; }
  static MeshVerdict reject(std::string why) { return {false, std::move(why)}; }
};

struct MeshQualityStats {
  double normalized_volume = 0.0;
  double normal_variance = 0.0;
  // Largest component-centroid offset, in units of the main component's
  // AABB diagonal.
  double max_outlier_ratio = 0.0;
  std::size_t component_count = 0;
};

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Orientation-agnostic spread of face normals: 1 - largest eigenvalue of the
// area-weighted second moment E[n n^T]. Zero for any planar sheet regardless
// of winding, 2/3 for a cube.
inline double normal_direction_variance(const TriangleMesh &mesh) {
  Mat3 moment = Mat3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    double area = mesh.face_area(i);
    if (area <= 0.0) continue;
    Vec3 n = mesh.face_normal(i);
    moment += area * n * n.transpose();
    total += area;
  }
  if (total <= 0.0) return 0.0;
  moment /= total;
  Eigen::SelfAdjointEigenSolver<Mat3> solver(moment, Eigen::EigenvaluesOnly);
  return std::max(0.0, 1.0 - solver.eigenvalues().maxCoeff());
}

inline MeshQualityStats mesh_quality_stats(const TriangleMesh &mesh) {
  mesh.validate();
  MeshQualityStats stats;
  if (mesh.vertices.empty()) return stats;

  Aabb3 box = aabb(mesh.vertices);
  double longest = box.extent().maxCoeff();
  if (longest > 0.0) {
    Vec3 e = box.extent() / longest;
    stats.normalized_volume = e.x() * e.y() * e.z();
  }
  stats.normal_variance = normal_direction_variance(mesh);

  // Connected components over shared vertices; vertices referenced by no face
  // are isolated points and form their own components.
  detail::DisjointSet sets(mesh.vertices.size());
  for (const auto &f : mesh.faces) {
    sets.unite(f[0], f[1]);
    sets.unite(f[1], f[2]);
  }
  struct Component {
    double area = 0.0;
    Vec3 weighted_sum = Vec3::Zero();
    Vec3 vertex_sum = Vec3::Zero();
    std::size_t vertex_count = 0;
    Aabb3 box;
    bool has_box = false;
  };
  std::vector<std::size_t> root_to_component(mesh.vertices.size(),
                                             static_cast<std::size_t>(-1));
  std::vector<Component> components;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    std::size_t r = sets.find(v);
    if (root_to_component[r] == static_cast<std::size_t>(-1)) {
      root_to_component[r] = components.size();
      components.emplace_back();
    }
    auto &c = components[root_to_component[r]];
    const Vec3 &p = mesh.vertices[v];
    c.vertex_sum += p;
    ++c.vertex_count;
    if (!c.has_box) {
      c.box = {p, p};
      c.has_box = true;
    } else {
      c.box.min = c.box.min.cwiseMin(p);
      c.box.max = c.box.max.cwiseMax(p);
    }
  }
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto &f = mesh.faces[i];
    auto &c = components[root_to_component[sets.find(f[0])]];
    double area = mesh.face_area(i);
    Vec3 centroid =
        (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    c.area += area;
    c.weighted_sum += area * centroid;
  }
  stats.component_count = components.size();

  auto centroid_of = [](const Component &c) -> Vec3 {
    if (c.area > 0.0) return c.weighted_sum / c.area;
    return c.vertex_sum / static_cast<double>(c.vertex_count);
  };
  std::size_t main = 0;
  for (std::size_t i = 1; i < components.size(); ++i) {
    const auto &a = components[i];
    const auto &b = components[main];
    if (a.area > b.area || (a.area == b.area && a.vertex_count > b.vertex_count))
      main = i;
  }
  Vec3 main_centroid = centroid_of(components[main]);
  double diag = components[main].box.diagonal();
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (i == main) continue;
    double dist = (centroid_of(components[i]) - main_centroid).norm();
    double ratio = diag > 0.0 ? dist / diag
                              : (dist > 0.0 ? std::numeric_limits<double>::infinity()
                                            : 0.0);
    stats.max_outlier_ratio = std::max(stats.max_outlier_ratio, ratio);
  }
  return stats;
}

// Flags the two geometric failure archetypes used to curate isolated-object
// training assets: overly simplistic shapes (flat sheets, near-degenerate
// volumes) and structural outliers (detached fragments or points).
inline MeshVerdict mesh_quality_filter(const TriangleMesh &mesh,
                                       const MeshFilterConfig &config = {}) {
  MeshQualityStats stats = mesh_quality_stats(mesh);
  if (stats.normal_variance < config.min_normal_variance)
    return MeshVerdict::reject("simplistic: flat");
  if (stats.normalized_volume < config.min_volume)
    return MeshVerdict::reject("simplistic: small volume");
  if (stats.max_outlier_ratio > config.outlier_factor)
    return MeshVerdict::reject("structural outlier");
  return MeshVerdict::accept();
}

}  // namespace lift3d
