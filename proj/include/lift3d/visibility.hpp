#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "lift3d/error.hpp"
#include "lift3d/image.hpp"

namespace lift3d {

// One view's projection of a shared set of points: point i has normalized
// image coordinate coords[i] in [-1, 1]^2, predicted depth depths[i], and the
// feature row features.row(i) sampled from this view.
struct VisibilityView {
  std::vector<Vec2> coords;
  std::vector<double> depths;
  Eigen::MatrixXd features;
  std::optional<DepthBuffer> reference;  // replaces the min-depth buffer
};

struct VisibilityResult {
  // visible[v][i]: point i is unoccluded in view v.
  std::vector<std::vector<bool>> visible;
  // weights(v, i): visibility normalized across views; columns sum to 1
  // unless the point is hidden everywhere, where they are all 0.
  Eigen::MatrixXd weights;
  Eigen::MatrixXd features;  // one row per point
};

namespace detail {

inline int grid_cell(double c, int n) {
  int i = static_cast<int>(std::floor(0.5 * (c + 1.0) * n));
  return std::clamp(i, 0, n - 1);
}

}  // namespace detail

// Depth-guided visibility: each view keeps the nearest predicted depth per
// grid cell (or uses its reference depth map), a point is visible when that
// reference depth exceeds its own depth minus `tolerance`, and each point's
// output feature is the visibility-weighted mean of its per-view features.
inline VisibilityResult depth_visibility_aggregate(const std::vector<VisibilityView> &views,
                                                   int grid_width, int grid_height,
                                                   double tolerance) {
  require(grid_width >= 1 && grid_height >= 1, "grid size must be positive");
  require(tolerance > 0.0, "tolerance must be positive");
  VisibilityResult out;
  if (views.empty()) return out;
  const std::size_t n = views.front().coords.size();
  const Eigen::Index dim = views.front().features.cols();
  for (const auto &view : views) {
    require(view.coords.size() == n && view.depths.size() == n &&
                static_cast<std::size_t>(view.features.rows()) == n,
            "views must describe the same points");
    require(view.features.cols() == dim, "feature vectors must have equal length");
    if (view.reference)
      require(view.reference->width == grid_width && view.reference->height == grid_height,
              "reference depth map does not match the grid");
    for (std::size_t i = 0; i < n; ++i)
      require(std::abs(view.coords[i].x()) <= 1.0 && std::abs(view.coords[i].y()) <= 1.0,
              "coordinates must lie in [-1, 1]");
  }

  const auto nv = static_cast<Eigen::Index>(views.size());
  const auto np = static_cast<Eigen::Index>(n);
  out.weights = Eigen::MatrixXd::Zero(nv, np);
  out.features = Eigen::MatrixXd::Zero(np, dim);
  out.visible.assign(views.size(), std::vector<bool>(n, false));
  if (n == 0) return out;

  for (std::size_t v = 0; v < views.size(); ++v) {
    const VisibilityView &view = views[v];
    DepthBuffer surface;
    if (view.reference) {
      surface = *view.reference;
    } else {
      surface = DepthBuffer(grid_width, grid_height, std::numeric_limits<double>::infinity());
      for (std::size_t i = 0; i < n; ++i) {
        double &cell = surface(detail::grid_cell(view.coords[i].x(), grid_width),
                               detail::grid_cell(view.coords[i].y(), grid_height));
        cell = std::min(cell, view.depths[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double ref = surface(detail::grid_cell(view.coords[i].x(), grid_width),
                           detail::grid_cell(view.coords[i].y(), grid_height));
      bool vis = ref > view.depths[i] - tolerance;
      out.visible[v][i] = vis;
      out.weights(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(i)) = vis ? 1.0 : 0.0;
    }
  }
  for (Eigen::Index i = 0; i < np; ++i) {
    double total = out.weights.col(i).sum();
    if (total == 0.0) continue;
    out.weights.col(i) /= total;
    for (Eigen::Index v = 0; v < nv; ++v)
      if (out.weights(v, i) != 0.0)
        out.features.row(i) +=
            out.weights(v, i) * views[static_cast<std::size_t>(v)].features.row(i);
  }
  return out;
}

}  // namespace lift3d
