#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lift3d/mesh_io.hpp"
#include "shapes.hpp"

using namespace lift3d;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("lift3d_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string &name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_text(const fs::path &p, const std::string &text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST(MeshIo, ObjRoundTrip) {
  TempDir dir;
  TriangleMesh m = lift3d::testing::uv_sphere(0.7, 6, 9);
  io::write_obj(m, dir / "s.obj");
  TriangleMesh back = io::read_mesh(dir / "s.obj");
  EXPECT_EQ(back.vertices, m.vertices);
  EXPECT_EQ(back.faces, m.faces);
  EXPECT_TRUE(back.colors.empty());
}

TEST(MeshIo, ObjFanTriangulationNegativeIndicesAndColors) {
  TempDir dir;
  write_text(dir / "q.obj",
             "# quad\n"
             "v 0 0 0 1 0 0\n"
             "v 1 0 0 0 1 0\n"
             "v 1 1 0 0 0 1\n"
             "v 0 1 0 0.5 0.5 0.5\n"
             "vn 0 0 1\n"
             "f 1/1/1 2/2/1 3/3/1 4/4/1\n"
             "f -4 -3 -1\n");
  TriangleMesh m = io::read_obj(dir / "q.obj");
  ASSERT_EQ(m.faces.size(), 3u);
  EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
  EXPECT_EQ(m.faces[1], (Face{0, 2, 3}));
  EXPECT_EQ(m.faces[2], (Face{0, 1, 3}));
  ASSERT_EQ(m.colors.size(), 4u);
  EXPECT_EQ(m.colors[0], (Color{255, 0, 0}));
  EXPECT_EQ(m.colors[3], (Color{128, 128, 128}));
}

TEST(MeshIo, ObjErrors) {
  TempDir dir;
  write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
  EXPECT_THROW(io::read_obj(dir / "bad.obj"), Error);
  write_text(dir / "junk.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 x 3\n");
  EXPECT_THROW(io::read_obj(dir / "junk.obj"), Error);
  EXPECT_THROW(io::read_obj(dir / "missing.obj"), Error);
  EXPECT_THROW(io::read_mesh(dir / "mesh.stl"), Error);
}

TEST(MeshIo, PlyRoundTripWithColors) {
  TempDir dir;
  TriangleMesh m = lift3d::testing::unit_cube();
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    m.colors.push_back({static_cast<std::uint8_t>(i * 30), 7, 200});
  io::write_ply(m, dir / "c.ply");
  TriangleMesh back = io::read_mesh(dir / "c.ply");
  EXPECT_EQ(back.vertices, m.vertices);  // exactly representable in float32
  EXPECT_EQ(back.faces, m.faces);
  EXPECT_EQ(back.colors, m.colors);
}

TEST(MeshIo, PlyRejectsAscii) {
  TempDir dir;
  write_text(dir / "a.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
             "property float y\nproperty float z\nend_header\n0 0 0\n");
  EXPECT_THROW(io::read_ply(dir / "a.ply"), Error);
  write_text(dir / "t.ply",
             "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\n"
             "property float y\nproperty float z\nend_header\n");
  EXPECT_THROW(io::read_ply(dir / "t.ply"), Error);
}

TEST(MeshIo, XyzPointClouds) {
  TempDir dir;
  write_text(dir / "p.xyz", "# comment\n0 0 0\n\n1.5 -2 3e-1\n");
  PointCloud c = io::read_point_cloud(dir / "p.xyz");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[1], Vec3(1.5, -2, 0.3));
  io::write_xyz(c, dir / "q.xyz");
  EXPECT_EQ(io::read_xyz(dir / "q.xyz").points, c.points);
  write_text(dir / "bad.xyz", "0 0\n");
  EXPECT_THROW(io::read_xyz(dir / "bad.xyz"), Error);
}
