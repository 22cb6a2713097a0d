#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "lift3d/error.hpp"
#include "lift3d/geometry.hpp"
#include "lift3d/image.hpp"
#include "lift3d/raster.hpp"
#include "lift3d/random.hpp"

namespace lift3d {

// |a & b| / |a | b|, and 0 when both are empty.
inline double mask_iou_2d(const BinaryMask &a, const BinaryMask &b) {
  require(a.same_shape(b), "mask dimensions differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    bool x = a.pixels[i] != 0, y = b.pixels[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

inline double pose_iou(const TriangleMesh &mesh, const Pose &pose, const BinaryMask &target,
                       const Camera &camera) {
  return mask_iou_2d(rasterize(mesh, pose, camera).mask, target);
}

// Search space: additive perturbation of the initial rotation's 6D form,
// translation offset, and log-scale offset.
inline constexpr std::size_t kRefineDims = 12;
using RefineParams = std::array<double, kRefineDims>;

enum class RefineOptimizer { pattern_search, cma_es };

struct RefineConfig {
  RefineOptimizer optimizer = RefineOptimizer::pattern_search;
  int max_evaluations = 500;
  double rotation_step = 0.1;      // on the 6D entries
  double translation_step = 0.02;  // as a fraction of the initial depth
  double log_scale_step = 0.05;
  bool align_moments = true;  // try silhouette centroid and area matching first
  double min_step_fraction = 1e-3;  // pattern search stops below this
  std::uint64_t seed = 0;

  void validate() const {
    require(max_evaluations >= 1, "max evaluations must be at least 1");
    require(rotation_step > 0.0 && translation_step > 0.0 && log_scale_step > 0.0,
            "step scales must be positive");
    require(min_step_fraction > 0.0 && min_step_fraction < 1.0,
            "minimum step fraction must lie in (0, 1)");
  }
};

struct RefineResult {
  Pose pose;
  double iou = 0.0;
  std::vector<double> trace;  // best IoU seen after each evaluation
  int evaluations = 0;
};

inline Pose perturb_pose(const Pose &init, const RefineParams &p) {
  Rotation6D r6 = matrix_to_rot6d(init.rotation);
  for (std::size_t i = 0; i < 6; ++i) r6[i] += p[i];
  Pose out;
  out.rotation = rot6d_to_matrix(r6);
  for (int i = 0; i < 3; ++i) {
    out.translation[i] = init.translation[i] + p[6 + std::size_t(i)];
    out.scale[i] = init.scale[i] * std::exp(p[9 + std::size_t(i)]);
  }
  return out;
}

namespace detail {

struct MaskMoments {
  double area = 0.0;
  Vec2 centroid = Vec2::Zero();
};

inline MaskMoments mask_moments(const BinaryMask &m) {
  MaskMoments out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m(x, y)) {
        out.area += 1.0;
        out.centroid += Vec2(x + 0.5, y + 0.5);
      }
  if (out.area > 0.0) out.centroid /= out.area;
  return out;
}

class RefineSearch {
 public:
  RefineSearch(const TriangleMesh &mesh, const Pose &init, const BinaryMask &target,
               const Camera &camera, const RefineConfig &config)
      : mesh_(mesh), init_(init), target_(target), camera_(camera), config_(config) {
    const double depth = std::max(std::abs(init.translation.z()), 1e-6);
    for (std::size_t i = 0; i < kRefineDims; ++i)
      scale_[i] = i < 6 ? config.rotation_step
                        : i < 9 ? config.translation_step * depth : config.log_scale_step;
  }

  RefineResult run() {
    best_iou_ = evaluate(best_, &best_mask_);
    if (config_.align_moments) align_moments();
    if (config_.optimizer == RefineOptimizer::pattern_search)
      pattern_search();
    else
      cma_es();
    return std::move(out_);
  }

 private:
  bool budget_left() const {
    return out_.evaluations < config_.max_evaluations && out_.iou < 1.0;
  }

  double evaluate(const RefineParams &p, BinaryMask *mask = nullptr) {
    Pose pose;
    try {
      pose = perturb_pose(init_, p);
    } catch (const Error &) {
      return -1.0;  // degenerate 6D perturbation
    }
    RenderResult render = rasterize(mesh_, pose, camera_);
    double iou = mask_iou_2d(render.mask, target_);
    ++out_.evaluations;
    if (iou > out_.iou || out_.evaluations == 1) {
      out_.iou = iou;
      out_.pose = pose;
    }
    out_.trace.push_back(out_.iou);
    if (mask) *mask = std::move(render.mask);
    return iou;
  }

  // Moves the object so its silhouette centroid and area match the target's,
  // holding the rotation. Kept only while the IoU improves.
  void align_moments() {
    const MaskMoments want = mask_moments(target_);
    for (int round = 0; round < 3 && budget_left(); ++round) {
      MaskMoments have = mask_moments(best_mask_);
      if (have.area == 0.0) return;
      Pose pose = perturb_pose(init_, best_);
      double z = pose.translation.z() * std::sqrt(have.area / want.area);
      Vec2 pixel = camera_.project(pose.translation) + (want.centroid - have.centroid);
      Vec3 t = camera_.unproject(pixel.x(), pixel.y(), z);
      RefineParams trial = best_;
      for (int i = 0; i < 3; ++i) trial[6 + std::size_t(i)] = t[i] - init_.translation[i];
      BinaryMask mask;
      double iou = evaluate(trial, &mask);
      if (iou <= best_iou_) return;
      best_ = trial;
      best_iou_ = iou;
      best_mask_ = std::move(mask);
    }
  }

  // Polls each parameter in both directions, keeps walking with a doubled
  // step while a direction improves, and halves a parameter's step once
  // neither direction does.
  void pattern_search() {
    RefineParams step = scale_;
    std::array<std::size_t, kRefineDims> order{};
    for (std::size_t i = 0; i < kRefineDims; ++i) order[i] = i;
    Rng rng(config_.seed);
    while (budget_left()) {
      rng.shuffle(std::span<std::size_t>(order));
      bool any_large = false;
      for (std::size_t i : order) {
        if (!budget_left()) break;
        bool improved = false;
        for (double sign : {1.0, -1.0}) {
          double move = sign * step[i];
          while (budget_left()) {
            RefineParams trial = best_;
            trial[i] += move;
            double iou = evaluate(trial);
            if (iou <= best_iou_) break;
            best_ = trial;
            best_iou_ = iou;
            improved = true;
            move *= 2.0;
          }
          if (improved) break;
        }
        if (!improved) step[i] *= 0.5;
        any_large = any_large || step[i] > config_.min_step_fraction * scale_[i];
      }
      if (!any_large) break;
    }
  }

  // Covariance matrix adaptation evolution strategy with the standard
  // default parameters, in coordinates normalized by the step scales and
  // centered on the best point found so far.
  void cma_es() {
    using Eigen::VectorXd, Eigen::MatrixXd;
    const int n = int(kRefineDims);
    const int lambda = 4 + int(3.0 * std::log(double(n)));
    const int mu = lambda / 2;
    VectorXd w(mu);
    for (int i = 0; i < mu; ++i) w[i] = std::log(mu + 0.5) - std::log(i + 1.0);
    w /= w.sum();
    const double mueff = 1.0 / w.squaredNorm();
    const double cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n);
    const double cs = (mueff + 2.0) / (n + mueff + 5.0);
    const double c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mueff);
    const double cmu =
        std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) * (n + 2.0) + mueff));
    const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (n + 1.0)) - 1.0) + cs;
    const double chi_n = std::sqrt(double(n)) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    VectorXd mean(n);
    for (int i = 0; i < n; ++i) mean[i] = best_[std::size_t(i)] / scale_[std::size_t(i)];
    double sigma = 1.0;
    MatrixXd c = MatrixXd::Identity(n, n), b = c;
    VectorXd d = VectorXd::Ones(n), pc = VectorXd::Zero(n), ps = VectorXd::Zero(n);
    Rng rng(config_.seed, 1);
    int generation = 0;
    while (budget_left()) {
      ++generation;
      std::vector<VectorXd> ys(std::size_t(lambda), VectorXd::Zero(n));
      std::vector<std::pair<double, int>> ranked;
      for (int k = 0; k < lambda && budget_left(); ++k) {
        VectorXd z(n);
        for (int i = 0; i < n; ++i) z[i] = rng.normal();
        ys[std::size_t(k)] = b * d.asDiagonal() * z;
        RefineParams p{};
        for (int i = 0; i < n; ++i)
          p[std::size_t(i)] = (mean[i] + sigma * ys[std::size_t(k)][i]) * scale_[std::size_t(i)];
        double iou = evaluate(p);
        if (iou > best_iou_) {
          best_iou_ = iou;
          best_ = p;
        }
        ranked.push_back({iou, k});
      }
      if (int(ranked.size()) < lambda) break;
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto &x, const auto &y) { return x.first > y.first; });
      VectorXd yw = VectorXd::Zero(n);
      for (int i = 0; i < mu; ++i) yw += w[i] * ys[std::size_t(ranked[std::size_t(i)].second)];
      mean += sigma * yw;

      VectorXd c_inv_half_yw = b * (b.transpose() * yw).cwiseQuotient(d);
      ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * c_inv_half_yw;
      double ps_norm = ps.norm();
      bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * generation)) / chi_n <
                  1.4 + 2.0 / (n + 1.0);
      pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * yw;
      MatrixXd rank_mu = MatrixXd::Zero(n, n);
      for (int i = 0; i < mu; ++i) {
        const VectorXd &y = ys[std::size_t(ranked[std::size_t(i)].second)];
        rank_mu += w[i] * y * y.transpose();
      }
      c = (1.0 - c1 - cmu) * c + c1 * (pc * pc.transpose() + (hsig ? 0.0 : cc * (2.0 - cc)) * c) +
          cmu * rank_mu;
      sigma *= std::exp((cs / damps) * (ps_norm / chi_n - 1.0));

      c = 0.5 * (c + c.transpose());
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c);
      b = eig.eigenvectors();
      d = eig.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
      if (sigma * d.maxCoeff() < config_.min_step_fraction) break;
    }
  }

  const TriangleMesh &mesh_;
  const Pose &init_;
  const BinaryMask &target_;
  const Camera &camera_;
  const RefineConfig &config_;
  RefineParams scale_{};
  RefineParams best_{};
  double best_iou_ = 0.0;
  BinaryMask best_mask_;
  RefineResult out_;
};

}  // namespace detail

// Derivative-free maximization of the silhouette IoU over the layout.
// Evaluations are capped and the best pose seen is returned.
inline RefineResult refine_layout(const TriangleMesh &mesh, const Pose &init,
                                  const BinaryMask &target, const Camera &camera,
                                  const RefineConfig &config = {}) {
  config.validate();
  init.validate();
  camera.validate();
  require(target.width == camera.width && target.height == camera.height,
          "target mask must match the camera");
  require(target.count() > 0, "target mask is empty");
  return detail::RefineSearch(mesh, init, target, camera, config).run();
}

// Keeps the refined layout only if it strictly improves the IoU.
inline Pose accept_refinement(const Pose &init, const Pose &refined, const TriangleMesh &mesh,
                              const BinaryMask &target, const Camera &camera) {
  double before = pose_iou(mesh, init, target, camera);
  double after = pose_iou(mesh, refined, target, camera);
  return after > before ? refined : init;
}

}  // namespace lift3d
