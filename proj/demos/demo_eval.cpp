// Scores a box against a moved, rescaled copy of itself and against a
// thinner box, for both shape and layout.

#include <cstdio>

#include "lift3d/lift3d.hpp"

using namespace lift3d;

namespace {

TriangleMesh box(const Vec3 &half) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(),
                            (i & 4) ? half.z() : -half.z());
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

void print_shape(const char *label, const ShapeReport &r) {
  std::printf("%-18s f1=%.4f viou=%.4f chamfer=%.5f emd=%.5f\n", label, r.f1, r.voxel_iou,
              r.chamfer, r.emd);
}

}  // namespace

int main() {
  Rng rng(7);
  TriangleMesh gt = box(Vec3(0.5, 0.3, 0.2));
  Pose motion;
  motion.rotation = random_rotation(rng);
  motion.translation = Vec3(0.4, -0.1, 0.25);
  motion.scale = Vec3::Constant(1.7);

  ShapeEvalConfig shape;
  shape.n_points = 50'000;
  print_shape("moved copy", eval_shape(apply_pose(gt, motion), gt, shape));
  print_shape("thinner box", eval_shape(box(Vec3(0.5, 0.3, 0.12)), gt, shape));

  Pose placed;
  placed.translation = Vec3(0.0, 0.0, 3.0);
  Pose off = placed;
  off.translation.x() += 0.05;
  LayoutReport layout = eval_layout({gt, off}, {gt, placed});
  std::printf("layout (5 cm off)  iou3d=%.4f rot=%.2f deg add_s=%.4f pass@0.1=%s\n", layout.iou3d,
              layout.icp_rot_deg, layout.add_s, layout.add_s_at_01 ? "yes" : "no");
  return 0;
}
