#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lift3d/geometry.hpp"
#include "lift3d/image.hpp"

namespace lift3d {

struct RasterConfig {
  double near_plane = 1e-3;  // camera-space z; geometry in front is clipped
  Vec3 light_direction = Vec3(0.3, 0.5, 1.0);  // direction light travels
  double ambient = 0.35;
  double diffuse = 0.65;
  Color default_color = {180, 180, 180};
};

struct RenderResult {
  DepthBuffer depth;
  BinaryMask mask;
  RgbImage color;
  Image<std::int32_t> face;  // index of the visible face, -1 where empty

  RenderResult() = default;
  explicit RenderResult(const Camera &camera)
      : depth(camera.width, camera.height, std::numeric_limits<double>::infinity()),
        mask(camera.width, camera.height),
        color(camera.width, camera.height),
        face(camera.width, camera.height, -1) {}
};

namespace detail {

// Sutherland-Hodgman against the plane z = near; keeps z >= near.
inline std::vector<Vec3> clip_near(const std::array<Vec3, 3> &tri, double near) {
  std::vector<Vec3> out;
  for (int i = 0; i < 3; ++i) {
    const Vec3 &a = tri[static_cast<std::size_t>(i)];
    const Vec3 &b = tri[static_cast<std::size_t>((i + 1) % 3)];
    bool a_in = a.z() >= near, b_in = b.z() >= near;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      double t = (near - a.z()) / (b.z() - a.z());
      Vec3 p = a + t * (b - a);
      p.z() = near;
      out.push_back(p);
    }
  }
  return out;
}

inline double edge(const Vec2 &a, const Vec2 &b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

inline void raster_triangle(RenderResult &out, const Camera &camera,
                            const Vec3 &a, const Vec3 &b, const Vec3 &c,
                            std::int32_t face_id, const Color &shade) {
  Vec2 pa = camera.project(a), pb = camera.project(b), pc = camera.project(c);
  double area = edge(pa, pb, pc.x(), pc.y());
  if (area == 0.0 || !std::isfinite(area)) return;
  double min_x = std::min({pa.x(), pb.x(), pc.x()});
  double max_x = std::max({pa.x(), pb.x(), pc.x()});
  double min_y = std::min({pa.y(), pb.y(), pc.y()});
  double max_y = std::max({pa.y(), pb.y(), pc.y()});
  // Pixel centers x + 0.5 inside [min_x, max_x].
  int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
  int x1 = std::min(camera.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
  int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
  int y1 = std::min(camera.height - 1, static_cast<int>(std::floor(max_y - 0.5)));
  const double inv_za = 1.0 / a.z(), inv_zb = 1.0 / b.z(), inv_zc = 1.0 / c.z();
  for (int y = y0; y <= y1; ++y) {
    double py = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      double px = x + 0.5;
      double w0 = edge(pb, pc, px, py) / area;
      double w1 = edge(pc, pa, px, py) / area;
      double w2 = edge(pa, pb, px, py) / area;
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      // Screen-space barycentrics interpolate 1/z linearly.
      double z = 1.0 / (w0 * inv_za + w1 * inv_zb + w2 * inv_zc);
      double &cur = out.depth(x, y);
      if (z < cur) {
        cur = z;
        out.mask.set(x, y);
        out.color(x, y) = shade;
        out.face(x, y) = face_id;
      }
    }
  }
}

}  // namespace detail

// Z-buffers `mesh` under `pose` into an existing render. Depth can only
// decrease, so rendering several meshes into one result composes them.
// Back faces are not culled; faces are flat shaded.
inline void rasterize_into(RenderResult &out, const TriangleMesh &mesh,
                           const Pose &pose, const Camera &camera,
                           const RasterConfig &config = {},
                           std::int32_t face_offset = 0) {
  camera.validate();
  pose.validate();
  mesh.validate();
  require(out.depth.width == camera.width && out.depth.height == camera.height,
          "render target does not match camera");
  require(config.near_plane > 0.0, "near plane must be positive");
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = pose.apply(mesh.vertices[i]);
  const Vec3 light = config.light_direction.normalized();

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face &face = mesh.faces[f];
    std::array<Vec3, 3> tri{cam[face[0]], cam[face[1]], cam[face[2]]};
    Vec3 n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
    if (n.squaredNorm() == 0.0) continue;
    double lambert = std::abs(n.normalized().dot(light));
    double intensity = std::min(1.0, config.ambient + config.diffuse * lambert);
    Color shade{};
    for (std::size_t k = 0; k < 3; ++k) {
      double base = config.default_color[k];
      if (!mesh.colors.empty())
        base = (mesh.colors[face[0]][k] + mesh.colors[face[1]][k] +
                mesh.colors[face[2]][k]) / 3.0;
      shade[k] = static_cast<std::uint8_t>(
          std::lround(std::clamp(base * intensity, 0.0, 255.0)));
    }

    std::vector<Vec3> poly = detail::clip_near(tri, config.near_plane);
    auto id = static_cast<std::int32_t>(f) + face_offset;
    for (std::size_t k = 1; k + 1 < poly.size(); ++k)
      detail::raster_triangle(out, camera, poly[0], poly[k], poly[k + 1], id, shade);
  }
}

inline RenderResult rasterize(const TriangleMesh &mesh, const Pose &pose,
                              const Camera &camera, const RasterConfig &config = {}) {
  camera.validate();
  RenderResult out(camera);
  rasterize_into(out, mesh, pose, camera, config);
  return out;
}

}  // namespace lift3d
