#pragma once

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "lift3d/geometry.hpp"
#include "lift3d/image.hpp"
#include "lift3d/raster.hpp"

namespace lift3d {

// Acceptance bounds of the synthetic-occlusion pipelines.
inline constexpr double kFoMinVisibleRatio = 0.1;
inline constexpr double kFoMaxVisibleRatio = 0.9;
inline constexpr double kFoMinImageFraction = 0.002;  // 0.2% of the image
inline constexpr double kFoOccluderAsTargetProb = 1.0 / 3.0;
inline constexpr double kOsrMinVisibility = 0.2;
inline constexpr double kOsrBottomFraction = 0.1;
inline constexpr double kOsrMinOccludedPerimeter = 0.1;

struct Verdict {
  bool accept = true;
  std::string reason;  // empty on accept

  static Verdict ok() { return {}; }
  static Verdict reject(std::string why) { return {false, std::move(why)}; }
};

struct RenderPasteSample {
  RgbImage image;
  BinaryMask visible;  // M_vis
  BinaryMask object;   // M_obj, the complete mask of the target
  Pose pose;
  std::string mesh_ref;
  Pointmap pointmap;  // updated scene geometry; empty for Flying Occlusions
  bool target_is_occluder = false;
};

// M_vis = M_obj and not M_occluder, pixel-wise.
inline BinaryMask visible_mask(const BinaryMask &obj, const BinaryMask &occluder) {
  require(obj.same_shape(occluder), "mask dimensions differ");
  BinaryMask out(obj.width, obj.height);
  for (std::size_t i = 0; i < obj.size(); ++i)
    out.pixels[i] = (obj.pixels[i] && !occluder.pixels[i]) ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Flying Occlusions

struct FoConfig {
  double min_visible_ratio = kFoMinVisibleRatio;
  double max_visible_ratio = kFoMaxVisibleRatio;
  double min_image_fraction = kFoMinImageFraction;
  double occluder_as_target_prob = kFoOccluderAsTargetProb;
};

// Occlusion-degree filter on pixel counts.
inline Verdict fo_filter_counts(std::size_t visible, std::size_t object,
                                std::size_t image_area, const FoConfig &config = {}) {
  if (object == 0) return Verdict::reject("empty object");
  require(visible <= object, "visible mask larger than object mask");
  require(image_area > 0, "image area must be positive");
  double ratio = static_cast<double>(visible) / static_cast<double>(object);
  if (ratio < config.min_visible_ratio) return Verdict::reject("under-visible");
  if (ratio > config.max_visible_ratio) return Verdict::reject("over-visible");
  if (static_cast<double>(visible) / static_cast<double>(image_area) <
      config.min_image_fraction)
    return Verdict::reject("too-small");
  return Verdict::ok();
}

inline Verdict fo_filter(const BinaryMask &visible, const BinaryMask &object,
                         std::size_t image_area, const FoConfig &config = {}) {
  require(visible.subset_of(object), "visible mask must lie inside object mask");
  return fo_filter_counts(visible.count(), object.count(), image_area, config);
}

struct FoComposite {
  RenderPasteSample sample;
  // Masks of whichever object ends up underneath; the occlusion filter runs
  // on these so that role-swapped samples still contain real occlusion.
  BinaryMask under_visible;
  BinaryMask under_object;
};

// Composites the occluder render over the target render over the
// background, or the target on top with its mask complete when `swap`.
inline FoComposite fo_compose(const RgbImage &background, const RenderResult &target,
                              const RenderResult &occluder, bool swap) {
  require(background.same_shape(target.mask) && background.same_shape(occluder.mask),
          "renders must match the background size");
  FoComposite out;
  RenderPasteSample &s = out.sample;
  s.target_is_occluder = swap;
  const RenderResult &top = s.target_is_occluder ? target : occluder;
  const RenderResult &bottom = s.target_is_occluder ? occluder : target;
  s.image = background;
  for (std::size_t i = 0; i < s.image.size(); ++i) {
    if (top.mask.pixels[i])
      s.image.pixels[i] = top.color.pixels[i];
    else if (bottom.mask.pixels[i])
      s.image.pixels[i] = bottom.color.pixels[i];
  }
  s.object = target.mask;
  s.visible = s.target_is_occluder ? target.mask : visible_mask(target.mask, occluder.mask);
  out.under_object = bottom.mask;
  out.under_visible = visible_mask(bottom.mask, top.mask);
  return out;
}

// As above, swapping the roles with probability `occluder_as_target_prob`.
inline FoComposite fo_compose(const RgbImage &background, const RenderResult &target,
                              const RenderResult &occluder, Rng &rng,
                              const FoConfig &config = {}) {
  return fo_compose(background, target, occluder, rng.bernoulli(config.occluder_as_target_prob));
}

// Translates a mesh so its AABB center sits at the origin.
inline TriangleMesh center_mesh(const TriangleMesh &mesh) {
  TriangleMesh out = mesh;
  Vec3 c = aabb(std::span<const Vec3>(mesh.vertices)).center();
  for (auto &v : out.vertices) v -= c;
  return out;
}

struct FoPlacementConfig {
  double min_depth = 2.0, max_depth = 6.0;
  // On-screen size of the object's AABB diagonal, as a fraction of the
  // image height.
  double min_screen_size = 0.25, max_screen_size = 0.5;
  // Occluder center offset from the target's mask center, in units of the
  // target mask's pixel extent.
  double occluder_offset = 0.5;
  double occluder_depth_factor_min = 0.5, occluder_depth_factor_max = 0.9;
  int max_attempts = 20;
  FoConfig filter;
  RasterConfig raster;
};

namespace detail {

// Random rotation, uniform scale for the requested on-screen size, and a
// translation putting the mesh center at pixel (u, v) and depth z.
inline Pose place_on_screen(const TriangleMesh &centered, const Camera &camera,
                            double u, double v, double z, double screen_fraction,
                            Rng &rng) {
  Pose pose;
  pose.rotation = random_rotation(rng);
  double diag = aabb(std::span<const Vec3>(centered.vertices)).diagonal();
  require(diag > 0.0, "mesh has zero extent");
  double world = screen_fraction * camera.height * z / camera.fy;
  pose.scale = Vec3::Constant(world / diag);
  pose.translation = camera.unproject(u, v, z);
  return pose;
}

struct MaskBox {
  int x0, y0, x1, y1;
};

inline std::optional<MaskBox> mask_box(const BinaryMask &m) {
  MaskBox b{m.width, m.height, -1, -1};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m(x, y)) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  if (b.x1 < 0) return std::nullopt;
  return b;
}

}  // namespace detail

struct FoResult {
  std::optional<RenderPasteSample> sample;
  int attempts = 0;
  std::string reason;  // last rejection reason when no sample was produced
};

// Full Flying Occlusions sample: random placements of a target and an
// occluder, compositing, and the occlusion filter, retried up to
// max_attempts times.
inline FoResult fo_generate(const RgbImage &background, const TriangleMesh &target_mesh,
                            const TriangleMesh &occluder_mesh, const Camera &camera,
                            Rng &rng, const FoPlacementConfig &config = {}) {
  camera.validate();
  require(background.width == camera.width && background.height == camera.height,
          "background does not match camera");
  TriangleMesh target = center_mesh(target_mesh);
  TriangleMesh occluder = center_mesh(occluder_mesh);
  FoResult result;
  // One coin per sample, so rejections do not skew the accepted swap rate.
  bool swap = rng.bernoulli(config.filter.occluder_as_target_prob);
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    result.attempts = attempt;
    double z = rng.uniform(config.min_depth, config.max_depth);
    double u = rng.uniform(0.25, 0.75) * camera.width;
    double v = rng.uniform(0.25, 0.75) * camera.height;
    Pose tpose = detail::place_on_screen(
        target, camera, u, v, z,
        rng.uniform(config.min_screen_size, config.max_screen_size), rng);
    RenderResult trender = rasterize(target, tpose, camera, config.raster);
    auto box = detail::mask_box(trender.mask);
    if (!box) {
      result.reason = "empty object";
      continue;
    }
    double bw = box->x1 - box->x0 + 1, bh = box->y1 - box->y0 + 1;
    double ou = 0.5 * (box->x0 + box->x1 + 1) +
                rng.uniform(-config.occluder_offset, config.occluder_offset) * bw;
    double ov = 0.5 * (box->y0 + box->y1 + 1) +
                rng.uniform(-config.occluder_offset, config.occluder_offset) * bh;
    double oz = z * rng.uniform(config.occluder_depth_factor_min,
                                config.occluder_depth_factor_max);
    Pose opose = detail::place_on_screen(
        occluder, camera, ou, ov, oz,
        rng.uniform(config.min_screen_size, config.max_screen_size), rng);
    RenderResult orender = rasterize(occluder, opose, camera, config.raster);

    FoComposite comp = fo_compose(background, trender, orender, swap);
    Verdict verdict = fo_filter(comp.under_visible, comp.under_object,
                                background.size(), config.filter);
    if (!verdict.accept) {
      result.reason = verdict.reason;
      continue;
    }
    comp.sample.pose = tpose;
    result.sample = std::move(comp.sample);
    result.reason.clear();
    return result;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Object Swap

namespace detail {

// World-axis AABB extent of R diag(s) v over the mesh vertices.
inline Vec3 rotated_extent(const std::vector<Vec3> &vertices, const Mat3 &r, const Vec3 &s) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto &v : vertices) {
    Vec3 p = r * s.cwiseProduct(v);
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return hi - lo;
}

}  // namespace detail

// Pose that puts a (centered) mesh at the centroid of the masked scene
// points with the given rotation, scaled per local axis so the rotated
// mesh's world AABB matches the masked points' AABB. Each extent is a
// piecewise-linear function of s, so damped Newton steps on the active extreme
// vertices solve the fit exactly when it exists. Otherwise (for example a
// flat target with zero depth extent) the uniform scale whose AABB just
// covers the target is used.
inline Pose osr_fit(const BinaryMask &target_mask, const Pointmap &pointmap,
                    const TriangleMesh &mesh, const RotationMatrix &rotation) {
  require(pointmap.same_shape(target_mask), "mask and pointmap sizes differ");
  require(!mesh.vertices.empty(), "mesh has no vertices");
  std::vector<Vec3> pts;
  for (int y = 0; y < target_mask.height; ++y)
    for (int x = 0; x < target_mask.width; ++x)
      if (target_mask(x, y) && pointmap.is_valid(x, y)) pts.push_back(pointmap.at(x, y));
  require(!pts.empty(), "no valid pointmap pixels under the target mask");

  Pose pose;
  pose.rotation = rotation;
  Vec3 sum = Vec3::Zero();
  for (const auto &p : pts) sum += p;
  pose.translation = sum / static_cast<double>(pts.size());

  const Mat3 &r = rotation.matrix();
  const Vec3 target = aabb(std::span<const Vec3>(pts)).extent();
  const Vec3 unit = detail::rotated_extent(mesh.vertices, r, Vec3::Ones());
  double uniform = 0.0;
  for (int k = 0; k < 3; ++k)
    if (unit[k] > 0.0) uniform = std::max(uniform, target[k] / unit[k]);
  require(uniform > 0.0, "target has zero extent");

  const double tol = 1e-12 * (1.0 + target.norm());
  Vec3 s = Vec3::Constant(uniform);
  bool fitted = false;
  for (int iter = 0; iter < 100 && !fitted; ++iter) {
    Mat3 a;
    for (int k = 0; k < 3; ++k) {
      std::size_t imax = 0, imin = 0;
      double vmax = -std::numeric_limits<double>::infinity(), vmin = -vmax;
      for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        double c = r.row(k).dot(s.cwiseProduct(mesh.vertices[i]));
        if (c > vmax) vmax = c, imax = i;
        if (c < vmin) vmin = c, imin = i;
      }
      a.row(k) = r.row(k).cwiseProduct((mesh.vertices[imax] - mesh.vertices[imin]).transpose());
    }
    Eigen::FullPivLU<Mat3> lu(a);
    if (!lu.isInvertible()) break;
    Vec3 step = lu.solve(target) - s;
    if (!all_finite(step)) break;
    // Damp the step to stay in the positive orthant.
    double alpha = 1.0;
    while (alpha > 1e-6 && !((s + alpha * step).array() > 0.0).all()) alpha *= 0.5;
    if (alpha <= 1e-6) break;
    s += alpha * step;
    fitted = (detail::rotated_extent(mesh.vertices, r, s) - target).norm() <= tol;
  }
  pose.scale = fitted ? s : Vec3::Constant(uniform);
  return pose;
}

inline Pose osr_place(const BinaryMask &target_mask, const Pointmap &pointmap,
                      const TriangleMesh &mesh, Rng &rng) {
  return osr_fit(target_mask, pointmap, mesh, random_rotation(rng));
}

struct OsrConfig {
  double min_visibility = kOsrMinVisibility;
  RasterConfig raster;
};

struct OsrRender {
  std::optional<RenderPasteSample> sample;
  double visibility = 0.0;  // |M_vis| / |M_mesh|
  std::string reason;
};

// Renders the mesh into the background with a z-buffer test against the
// scene: a mesh pixel is visible iff it is nearer than the scene point there
// (invalid scene pixels are infinitely far). Visible pixels are composited
// and written into the pointmap as mesh surface points.
inline OsrRender osr_rerender(const RgbImage &background, const Pointmap &scene,
                              const TriangleMesh &mesh, const Pose &pose,
                              const Camera &camera, const OsrConfig &config = {}) {
  require(background.width == camera.width && background.height == camera.height,
          "background does not match camera");
  require(scene.same_shape(background), "pointmap does not match background");
  RenderResult render = rasterize(mesh, pose, camera, config.raster);
  OsrRender out;
  RenderPasteSample s;
  s.object = render.mask;
  s.visible = BinaryMask(camera.width, camera.height);
  s.image = background;
  s.pointmap = scene;
  s.pose = pose;
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      if (!render.mask(x, y) || !(render.depth(x, y) < scene.depth(x, y))) continue;
      s.visible.set(x, y);
      s.image(x, y) = render.color(x, y);
      s.pointmap.set(x, y, camera.pixel_point(x, y, render.depth(x, y)));
    }
  std::size_t total = s.object.count();
  if (total == 0) {
    out.reason = "empty render";
    return out;
  }
  out.visibility = static_cast<double>(s.visible.count()) / static_cast<double>(total);
  if (out.visibility < config.min_visibility) {
    out.reason = "insufficient visibility";
    return out;
  }
  out.sample = std::move(s);
  return out;
}

struct CueConfig {
  double depth_margin = 0.02;  // scene units; outer must be nearer by this
  double bottom_fraction = kOsrBottomFraction;
  double min_occluded_perimeter = kOsrMinOccludedPerimeter;
  // Share of bottom-band boundary samples that must see nearer background.
  double support_min_fraction = 0.5;
  double sample_offset = 2.0;  // pixels along the outward normal
};

struct CueReport {
  bool physical_support = false;
  double occluded_perimeter_fraction = 0.0;
  bool accept = false;
  std::size_t boundary_pixels = 0;
  std::size_t occluded_pixels = 0;
  std::string reason;  // set when rejected
};

// Row `row` lies in the bottom `fraction` of an object spanning rows
// [top, bottom] (image y grows downward).
inline bool in_bottom_band(int row, int top, int bottom,
                           double fraction = kOsrBottomFraction) {
  return static_cast<double>(bottom - row) <= fraction * static_cast<double>(bottom - top);
}

inline bool osr_cue_accept(bool physical_support, double occluded_perimeter_fraction,
                           double min_occluded_perimeter = kOsrMinOccludedPerimeter) {
  return physical_support || occluded_perimeter_fraction >= min_occluded_perimeter;
}

// Looks for depth-ordering cues around an object mask: boundary pixels whose
// outside neighbor (a few pixels along the outward normal) is markedly nearer
// than the inside count as occluded. The object is kept if it rests on
// nearer background along its bottom band or if enough of its perimeter is
// occluded.
inline CueReport osr_cue_check(const BinaryMask &mask, const Pointmap &pointmap,
                               const CueConfig &config = {}) {
  require(pointmap.same_shape(mask), "mask and pointmap sizes differ");
  CueReport report;
  auto in_mask = [&](int x, int y) { return mask.test(x, y); };
  auto box = detail::mask_box(mask);
  if (!box) {
    report.reason = "degenerate mask";
    return report;
  }
  std::size_t band_total = 0, band_occluded = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!in_mask(x, y)) continue;
      Vec2 outward = Vec2::Zero();
      bool boundary = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || !mask.contains(x + dx, y + dy)) continue;
          if (!in_mask(x + dx, y + dy)) {
            boundary = true;
            outward += Vec2(dx, dy).normalized();
          }
        }
      if (!boundary) continue;
      ++report.boundary_pixels;
      bool band = in_bottom_band(y, box->y0, box->y1, config.bottom_fraction);
      band_total += band;

      // Outward normal from the Sobel gradient of the mask (the mask falls
      // off toward the outside); the outside-neighbor direction breaks ties.
      auto m = [&](int xx, int yy) {
        xx = std::clamp(xx, 0, mask.width - 1);
        yy = std::clamp(yy, 0, mask.height - 1);
        return in_mask(xx, yy) ? 1.0 : 0.0;
      };
      Vec2 grad((m(x + 1, y - 1) + 2 * m(x + 1, y) + m(x + 1, y + 1)) -
                    (m(x - 1, y - 1) + 2 * m(x - 1, y) + m(x - 1, y + 1)),
                (m(x - 1, y + 1) + 2 * m(x, y + 1) + m(x + 1, y + 1)) -
                    (m(x - 1, y - 1) + 2 * m(x, y - 1) + m(x + 1, y - 1)));
      Vec2 n = grad.squaredNorm() > 0.0 ? Vec2(-grad) : outward;
      if (n.squaredNorm() == 0.0) continue;
      n.normalize();

      Vec2 c(x + 0.5, y + 0.5);
      Vec2 po = c + config.sample_offset * n, pi = c - config.sample_offset * n;
      int ox = static_cast<int>(std::floor(po.x())), oy = static_cast<int>(std::floor(po.y()));
      int ix = static_cast<int>(std::floor(pi.x())), iy = static_cast<int>(std::floor(pi.y()));
      if (!mask.contains(ox, oy) || in_mask(ox, oy) || !pointmap.is_valid(ox, oy)) continue;
      if (!in_mask(ix, iy) || !pointmap.is_valid(ix, iy)) {
        ix = x;
        iy = y;
      }
      if (!pointmap.is_valid(ix, iy)) continue;
      bool occluded = pointmap.at(ox, oy).z() < pointmap.at(ix, iy).z() - config.depth_margin;
      if (occluded) {
        ++report.occluded_pixels;
        band_occluded += band;
      }
    }
  if (report.boundary_pixels == 0) {
    report.reason = "degenerate mask";
    return report;
  }
  report.occluded_perimeter_fraction = static_cast<double>(report.occluded_pixels) /
                                       static_cast<double>(report.boundary_pixels);
  report.physical_support =
      band_total > 0 && static_cast<double>(band_occluded) >=
                            config.support_min_fraction * static_cast<double>(band_total);
  report.accept = osr_cue_accept(report.physical_support, report.occluded_perimeter_fraction,
                                 config.min_occluded_perimeter);
  if (!report.accept) report.reason = "no depth cue";
  return report;
}

struct OsrPipelineConfig {
  CueConfig cue;
  OsrConfig render;
};

struct OsrResult {
  std::optional<RenderPasteSample> sample;
  CueReport cue;
  double visibility = 0.0;
  std::string reason;
};

// Object Swap. With `annotated_pose` set the given pose is used (the
// annotated variant); otherwise the mesh is placed from the mask and
// pointmap with a random rotation. The caller supplies the background with
// the original object already removed.
inline OsrResult osr_generate(const RgbImage &background, const Pointmap &scene,
                              const BinaryMask &object_mask, const TriangleMesh &mesh,
                              const Camera &camera, Rng &rng,
                              const OsrPipelineConfig &config = {},
                              const std::optional<Pose> &annotated_pose = std::nullopt) {
  OsrResult out;
  TriangleMesh centered = annotated_pose ? mesh : center_mesh(mesh);
  if (!annotated_pose) {
    out.cue = osr_cue_check(object_mask, scene, config.cue);
    if (!out.cue.accept) {
      out.reason = out.cue.reason;
      return out;
    }
  }
  Pose pose = annotated_pose ? *annotated_pose : osr_place(object_mask, scene, centered, rng);
  OsrRender r = osr_rerender(background, scene, centered, pose, camera, config.render);
  out.visibility = r.visibility;
  out.reason = r.reason;
  out.sample = std::move(r.sample);
  return out;
}

}  // namespace lift3d
