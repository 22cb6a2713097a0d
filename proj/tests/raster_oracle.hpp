#pragma once

// Per-pixel ray casting against every triangle, the reference for the
// rasterizer's z-buffer.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "lift3d/geometry.hpp"
#include "lift3d/image.hpp"

namespace lift3d::oracle {

struct RayHit {
  double depth = std::numeric_limits<double>::infinity();
  bool ambiguous = false;  // the ray grazes some triangle edge
};

// Möller-Trumbore against every triangle, with the ray through the pixel
// center. Camera rays have unit z, so the ray parameter is the depth.
inline RayHit ray_cast(const std::vector<std::array<Vec3, 3>> &tris, const Camera &cam, int x,
                       int y, double near) {
  Vec3 dir((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
  RayHit hit;
  for (const auto &t : tris) {
    Vec3 e1 = t[1] - t[0], e2 = t[2] - t[0];
    Vec3 p = dir.cross(e2);
    double det = e1.dot(p);
    if (std::abs(det) < 1e-14) continue;
    Vec3 s = -t[0];
    double u = s.dot(p) / det;
    Vec3 q = s.cross(e1);
    double v = dir.dot(q) / det;
    double depth = e2.dot(q) / det;
    double margin = std::min({u, v, 1.0 - u - v});
    if (std::abs(margin) < 1e-6 || std::abs(depth - near) < 1e-6) hit.ambiguous = true;
    if (margin < 0.0 || depth < near) continue;
    hit.depth = std::min(hit.depth, depth);
  }
  return hit;
}

inline std::vector<std::array<Vec3, 3>> posed_triangles(const TriangleMesh &mesh,
                                                        const Pose &pose) {
  std::vector<std::array<Vec3, 3>> out;
  for (const auto &f : mesh.faces)
    out.push_back({pose.apply(mesh.vertices[f[0]]), pose.apply(mesh.vertices[f[1]]),
                   pose.apply(mesh.vertices[f[2]])});
  return out;
}

}  // namespace lift3d::oracle
