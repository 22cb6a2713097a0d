#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lift3d/geometry.hpp"
#include "shapes.hpp"

using namespace lift3d;
using lift3d::testing::quad;
using lift3d::testing::random_cloud;
using lift3d::testing::unit_cube;

namespace {

constexpr double kPi = std::numbers::pi;

bool is_rotation(const Mat3 &m, double tol) {
  return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

}  // namespace

// --- sample_surface ---------------------------------------------------------

TEST(SampleSurface, UnitSquareIsPlanar) {
  TriangleMesh square = quad(0, 1, 0, 1, 0);
  PointCloud pts = sample_surface(square, 4, 123);
  ASSERT_EQ(pts.size(), 4u);
  for (const auto &p : pts.points) {
    EXPECT_EQ(p.z(), 0.0);
    EXPECT_GE(p.x(), 0.0);
    EXPECT_LE(p.x(), 1.0);
    EXPECT_GE(p.y(), 0.0);
    EXPECT_LE(p.y(), 1.0);
  }
}

TEST(SampleSurface, PointsLieOnTheirFacePlane) {
  TriangleMesh mesh = lift3d::testing::uv_sphere(1.3, 8, 12);
  auto s = sample_surface_detailed(mesh, 2000, 5);
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    const auto &f = mesh.faces[s.face_index[i]];
    Vec3 n = mesh.face_normal(s.face_index[i]);
    EXPECT_NEAR(n.dot(s.cloud[i] - mesh.vertices[f[0]]), 0.0, 1e-9);
  }
}

TEST(SampleSurface, SingleTriangleCentroidConverges) {
  TriangleMesh tri;
  tri.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 1.5, 2}};
  tri.faces = {{0, 1, 2}};
  PointCloud pts = sample_surface(tri, 100000, 9);
  Vec3 mean = Vec3::Zero();
  for (const auto &p : pts.points) mean += p;
  mean /= static_cast<double>(pts.size());
  Vec3 analytic = (tri.vertices[0] + tri.vertices[1] + tri.vertices[2]) / 3.0;
  EXPECT_LT((mean - analytic).norm(), 0.01);
}

TEST(SampleSurface, FaceHitsFollowAreaRatio) {
  // Triangle A has area 1.5, triangle B area 0.5.
  TriangleMesh mesh;
  mesh.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 1, 0}, {10, 0, 0}, {11, 0, 0}, {10, 1, 0}};
  mesh.faces = {{0, 1, 2}, {3, 4, 5}};
  auto s = sample_surface_detailed(mesh, 100000, 17);
  double a = 0, b = 0;
  for (auto f : s.face_index) (f == 0 ? a : b) += 1;
  // Multinomial oracle: expected 75000 / 25000 with sd ~137.
  EXPECT_NEAR(a / b, 3.0, 0.06);
}

TEST(SampleSurface, DeterministicPerSeed) {
  TriangleMesh cube = unit_cube();
  PointCloud a = sample_surface(cube, 500, 77);
  PointCloud b = sample_surface(cube, 500, 77);
  PointCloud c = sample_surface(cube, 500, 78);
  EXPECT_EQ(a.points, b.points);
  EXPECT_NE(a.points, c.points);
}

TEST(SampleSurface, DegenerateMeshRejected) {
  TriangleMesh flat;
  flat.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  flat.faces = {{0, 1, 2}};
  EXPECT_THROW(
      {
        try {
          sample_surface(flat, 10, 0);
        } catch (const Error &e) {
          EXPECT_STREQ(e.what(), "degenerate mesh");
          throw;
        }
      },
      Error);
}

// --- normalize_unit_cube ----------------------------------------------------

TEST(NormalizeUnitCube, CubeZeroToTwo) {
  PointCloud c({{0, 0, 0}, {2, 2, 2}, {1, 0.5, 2}});
  auto n = normalize_unit_cube(c);
  EXPECT_DOUBLE_EQ(n.transform.scale, 1.0);
  EXPECT_TRUE(n.transform.center.isApprox(Vec3(1, 1, 1)));
  Aabb3 box = aabb(n.cloud);
  EXPECT_TRUE(box.min.isApprox(Vec3(-1, -1, -1)));
  EXPECT_TRUE(box.max.isApprox(Vec3(1, 1, 1)));
  EXPECT_TRUE(n.cloud[2].isApprox(Vec3(0, -0.5, 1)));
}

TEST(NormalizeUnitCube, PreservesAspect) {
  PointCloud c({{0, 0, 0}, {4, 2, 2}});
  Aabb3 box = aabb(normalize_unit_cube(c).cloud);
  EXPECT_NEAR(box.min.x(), -1.0, 1e-15);
  EXPECT_NEAR(box.max.x(), 1.0, 1e-15);
  EXPECT_NEAR(box.min.y(), -0.5, 1e-15);
  EXPECT_NEAR(box.max.y(), 0.5, 1e-15);
  EXPECT_NEAR(box.max.z(), 0.5, 1e-15);
}

TEST(NormalizeUnitCube, RoundTripAndIdempotence) {
  Rng rng(11);
  PointCloud c = random_cloud(rng, 200, {-3, 1, 5}, {4, 2, 9});
  auto once = normalize_unit_cube(c);
  PointCloud back = invert_normalization(once.cloud, once.transform);
  for (std::size_t i = 0; i < c.size(); ++i)
    EXPECT_LT((back[i] - c[i]).norm(), 1e-12);
  auto twice = normalize_unit_cube(once.cloud);
  for (std::size_t i = 0; i < c.size(); ++i)
    EXPECT_LT((twice.cloud[i] - once.cloud[i]).norm(), 1e-12);
}

TEST(NormalizeUnitCube, ZeroExtentRejected) {
  PointCloud c({{1, 1, 1}, {1, 1, 1}});
  EXPECT_THROW(normalize_unit_cube(c), Error);
}

// --- 6D rotation ------------------------------------------------------------

TEST(Rot6d, IdentityAndShearInvariance) {
  EXPECT_TRUE(rot6d_to_matrix({1, 0, 0, 0, 1, 0}).matrix().isApprox(Mat3::Identity()));
  EXPECT_TRUE(rot6d_to_matrix({2, 0, 0, 5, 1, 0}).matrix().isApprox(Mat3::Identity()));
}

TEST(Rot6d, RecoversRandomRotationFromColumns) {
  Rng rng(21);
  for (int k = 0; k < 200; ++k) {
    RotationMatrix r = random_rotation(rng);
    RotationMatrix back = rot6d_to_matrix(matrix_to_rot6d(r));
    EXPECT_LT((back.matrix() - r.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rot6d, MatrixToRot6dExamples) {
  Rotation6D id = matrix_to_rot6d(RotationMatrix::identity());
  EXPECT_EQ(id, (Rotation6D{1, 0, 0, 0, 1, 0}));
  Rotation6D z90 = matrix_to_rot6d(RotationMatrix::about_axis({0, 0, 1}, kPi / 2));
  Rotation6D expected{0, 1, 0, -1, 0, 0};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(z90[i], expected[i], 1e-15);
}

TEST(Rot6d, DegenerateInputsRejected) {
  EXPECT_THROW(rot6d_to_matrix({0, 0, 0, 0, 1, 0}), Error);
  EXPECT_THROW(rot6d_to_matrix({1, 0, 0, 3, 0, 0}), Error);
}

TEST(Rot6d, GramSchmidtPropertyOnRandomInputs) {
  Rng rng(22);
  for (int k = 0; k < 1000; ++k) {
    Rotation6D r6;
    for (auto &v : r6) v = rng.normal();
    Mat3 m = rot6d_to_matrix(r6).matrix();
    EXPECT_TRUE(is_rotation(m, 1e-9));
    // Invariance to positive scaling of a1 and shearing a2 along a1.
    double scale = rng.uniform(0.1, 10.0), shear = rng.normal();
    Rotation6D warped{scale * r6[0], scale * r6[1], scale * r6[2],
                      r6[3] + shear * r6[0], r6[4] + shear * r6[1],
                      r6[5] + shear * r6[2]};
    EXPECT_LT((rot6d_to_matrix(warped).matrix() - m).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Rot6d, NormalizationRoundTrip) {
  Rotation6D r{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(normalize_rot6d(r, Rot6dStats{}), r);
  Rot6dStats stats;
  stats.mean = {1, 1, 1, 1, 1, 1};
  stats.stddev = {2, 2, 2, 2, 2, 2};
  Rotation6D n = normalize_rot6d(r, stats);
  EXPECT_EQ(n[0], 0.0);
  Rotation6D back = denormalize_rot6d(n, stats);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(back[i], r[i], 1e-12);
  stats.stddev[3] = 0.0;
  EXPECT_THROW(normalize_rot6d(r, stats), Error);
}

// --- rotation angle ---------------------------------------------------------

TEST(RotationAngle, Examples) {
  EXPECT_EQ(rotation_angle_deg(RotationMatrix::identity()), 0.0);
  EXPECT_NEAR(rotation_angle_deg(RotationMatrix::about_axis({1, 0, 0}, kPi / 2)),
              90.0, 1e-12);
  Mat3 almost = Mat3::Identity() * (1.0 + 1e-12);
  double a = rotation_angle_deg(almost);
  EXPECT_FALSE(std::isnan(a));
  EXPECT_EQ(a, 0.0);
}

TEST(RotationMatrix, ValidatesInvariants) {
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1;
  EXPECT_THROW(RotationMatrix::from_matrix(reflection), Error);
  EXPECT_THROW(RotationMatrix::from_matrix(Mat3::Identity() * 2.0), Error);
  EXPECT_NO_THROW(RotationMatrix::from_matrix(Mat3::Identity()));
}

// --- voxelize ---------------------------------------------------------------

TEST(Voxelize, OriginMapsToCenterCell) {
  VoxelGrid g = voxelize(PointCloud({{0, 0, 0}}), 64);
  EXPECT_EQ(g.count(), 1u);
  EXPECT_TRUE(g.test(32, 32, 32));
}

TEST(Voxelize, UpperCornerClamps) {
  VoxelGrid g = voxelize(PointCloud({{1, 1, 1}}), 64, VoxelizeMode::lenient);
  EXPECT_TRUE(g.test(63, 63, 63));
  VoxelGrid outside = voxelize(PointCloud({{1.5, 0, -3}}), 64, VoxelizeMode::lenient);
  EXPECT_TRUE(outside.test(63, 32, 0));
}

TEST(Voxelize, StrictModeNamesOffendingIndex) {
  PointCloud c({{0, 0, 0}, {0.5, 0.5, 0.5}, {1.01, 0, 0}});
  try {
    voxelize(c, 64, VoxelizeMode::strict);
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
  }
}

TEST(Voxelize, DenseCoverage) {
  Rng rng(31);
  VoxelGrid g = voxelize(random_cloud(rng, 1'000'000), 4);
  EXPECT_EQ(g.count(), 64u);
}

TEST(Voxelize, MonotoneInPointSet) {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud p = random_cloud(rng, 50), q = random_cloud(rng, 50);
    PointCloud both = p;
    both.points.insert(both.points.end(), q.points.begin(), q.points.end());
    VoxelGrid gp = voxelize(p, 16), gb = voxelize(both, 16);
    for (std::size_t w = 0; w < gp.words.size(); ++w)
      EXPECT_EQ(gp.words[w] & ~gb.words[w], 0u);
  }
}

// --- apply_pose / aabb ------------------------------------------------------

TEST(ApplyPose, IdentityAndScale) {
  TriangleMesh cube = unit_cube();
  EXPECT_EQ(apply_pose(cube, Pose{}).vertices, cube.vertices);
  Pose p;
  p.scale = {2, 2, 2};
  Aabb3 box = aabb(std::span<const Vec3>(apply_pose(cube, p).vertices));
  EXPECT_TRUE(box.extent().isApprox(Vec3(2, 2, 2)));
}

TEST(ApplyPose, ScaleThenRotateThenTranslate) {
  Pose p;
  p.scale = {2, 1, 1};
  p.rotation = RotationMatrix::about_axis({0, 0, 1}, kPi / 2);
  p.translation = {0, 0, 5};
  // (1,0,0) -> scaled (2,0,0) -> rotated (0,2,0) -> translated (0,2,5)
  EXPECT_LT((p.apply({1, 0, 0}) - Vec3(0, 2, 5)).norm(), 1e-15);
}

TEST(ApplyPose, UniformInverseComposesToIdentity) {
  Rng rng(41);
  for (int k = 0; k < 50; ++k) {
    Pose p;
    p.rotation = random_rotation(rng);
    p.translation = {rng.normal(), rng.normal(), rng.normal()};
    double s = rng.uniform(0.2, 5.0);
    p.scale = {s, s, s};
    PointCloud c = random_cloud(rng, 20);
    PointCloud back = apply_pose(apply_pose(c, p), p.inverse_uniform());
    for (std::size_t i = 0; i < c.size(); ++i)
      EXPECT_LT((back[i] - c[i]).norm(), 1e-9);
  }
}

TEST(ApplyPose, RejectsNonPositiveScale) {
  Pose p;
  p.scale = {1, 0, 1};
  EXPECT_THROW(apply_pose(PointCloud({{0, 0, 0}}), p), Error);
}

TEST(Aabb, Examples) {
  Aabb3 b = aabb(PointCloud({{0, 0, 0}, {1, 2, 3}}));
  EXPECT_EQ(b.min, Vec3(0, 0, 0));
  EXPECT_EQ(b.max, Vec3(1, 2, 3));
  Aabb3 single = aabb(PointCloud({{4, 5, 6}}));
  EXPECT_EQ(single.min, single.max);
  Rng rng(51);
  PointCloud p = random_cloud(rng, 30), q = random_cloud(rng, 30, {2, 2, 2}, {3, 4, 5});
  PointCloud both = p;
  both.points.insert(both.points.end(), q.points.begin(), q.points.end());
  Aabb3 u = aabb(both);
  EXPECT_TRUE(u.contains(aabb(p)));
  EXPECT_TRUE(u.contains(aabb(q)));
  EXPECT_THROW(aabb(PointCloud{}), Error);
}
