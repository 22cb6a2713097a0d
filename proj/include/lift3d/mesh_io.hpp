#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lift3d/geometry.hpp"

// Mesh and point-cloud file formats.
//   OBJ: v / f records, 1-based (or negative relative) indices; polygons are
//        fan-triangulated. Vertex colors "v x y z r g b" with r,g,b in [0,1].
//   PLY: binary_little_endian 1.0; vertex x,y,z float32 (optional uchar
//        red/green/blue); face list vertex_indices. Polygons fan-triangulated.
//   XYZ: whitespace separated "x y z" per line, '#' comments.

namespace lift3d::io {

namespace detail {

inline std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void fan_triangulate(const std::vector<std::int64_t> &poly,
                            std::size_t vertex_count,
                            std::vector<Face> &faces) {
  if (poly.size() < 3) throw Error("face with fewer than 3 vertices");
  for (auto idx : poly)
    if (idx < 0 || static_cast<std::size_t>(idx) >= vertex_count)
      throw Error("face index out of range");
  for (std::size_t i = 1; i + 1 < poly.size(); ++i)
    faces.push_back({static_cast<std::uint32_t>(poly[0]),
                     static_cast<std::uint32_t>(poly[i]),
                     static_cast<std::uint32_t>(poly[i + 1])});
}

static_assert(std::endian::native == std::endian::little,
              "binary PLY support assumes a little-endian host");

}  // namespace detail

inline TriangleMesh read_obj(const std::filesystem::path &path) {
  std::istringstream in(detail::read_text(path));
  TriangleMesh mesh;
  std::vector<std::array<double, 3>> colors;
  bool any_color = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw Error("malformed vertex at line " + std::to_string(line_no));
      mesh.vertices.emplace_back(x, y, z);
      double r, g, b;
      if (ls >> r >> g >> b) {
        colors.push_back({r, g, b});
        any_color = true;
      } else {
        colors.push_back({0.7, 0.7, 0.7});
      }
    } else if (tag == "f") {
      std::vector<std::int64_t> poly;
      std::string token;
      while (ls >> token) {
        std::int64_t idx = 0;
        std::string head = token.substr(0, token.find('/'));
        auto [end, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
        if (ec != std::errc{} || end != head.data() + head.size() || idx == 0)
          throw Error("malformed face at line " + std::to_string(line_no));
        if (idx < 0)
          idx = static_cast<std::int64_t>(mesh.vertices.size()) + idx;
        else
          idx -= 1;
        poly.push_back(idx);
      }
      detail::fan_triangulate(poly, mesh.vertices.size(), mesh.faces);
    }
  }
  if (any_color) {
    for (const auto &c : colors) {
      Color out{};
      for (int k = 0; k < 3; ++k)
        out[k] = static_cast<std::uint8_t>(
            std::lround(std::clamp(c[k], 0.0, 1.0) * 255.0));
      mesh.colors.push_back(out);
    }
  }
  mesh.validate();
  return mesh;
}

inline void write_obj(const TriangleMesh &mesh,
                      const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto &v = mesh.vertices[i];
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z();
    if (!mesh.colors.empty()) {
      for (int k = 0; k < 3; ++k) out << ' ' << mesh.colors[i][k] / 255.0;
    }
    out << '\n';
  }
  for (const auto &f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;        // scalar type, or list item type
  std::string count_type;  // non-empty for list properties
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

inline std::size_t ply_type_size(const std::string &t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" ||
      t == "uint32" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw Error("unsupported PLY type: " + t);
}

inline double ply_read_scalar(const char *p, const std::string &t) {
  auto load = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return load(std::int8_t{});
  if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
  if (t == "short" || t == "int16") return load(std::int16_t{});
  if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
  if (t == "int" || t == "int32") return load(std::int32_t{});
  if (t == "uint" || t == "uint32") return load(std::uint32_t{});
  if (t == "float" || t == "float32") return load(float{});
  if (t == "double" || t == "float64") return load(double{});
  throw Error("unsupported PLY type: " + t);
}

}  // namespace detail

// Reads a binary little-endian PLY. Point clouds are PLY files without a face
// element; the mesh then has vertices only.
inline TriangleMesh read_ply(const std::filesystem::path &path) {
  std::string data = detail::read_text(path);
  std::size_t header_end = data.find("end_header");
  if (data.rfind("ply", 0) != 0 || header_end == std::string::npos)
    throw Error("not a PLY file: " + path.string());
  std::size_t body = data.find('\n', header_end);
  if (body == std::string::npos) throw Error("truncated PLY header");
  ++body;

  std::istringstream header(data.substr(0, header_end));
  std::vector<detail::PlyElement> elements;
  std::string line;
  bool binary_le = false;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (tag == "element") {
      detail::PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) throw Error("PLY property before element");
      detail::PlyProperty prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        ls >> prop.count_type >> prop.type >> prop.name;
      } else {
        prop.type = type;
        ls >> prop.name;
      }
      elements.back().properties.push_back(prop);
    }
  }
  if (!binary_le) throw Error("only binary_little_endian PLY is supported");

  TriangleMesh mesh;
  const char *cursor = data.data() + body;
  const char *end = data.data() + data.size();
  auto need = [&](std::size_t bytes) {
    if (static_cast<std::size_t>(end - cursor) < bytes)
      throw Error("truncated PLY body");
  };
  for (const auto &e : elements) {
    bool is_vertex = e.name == "vertex";
    bool is_face = e.name == "face";
    bool has_color = false;
    for (const auto &p : e.properties)
      if (p.name == "red") has_color = true;
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 pos = Vec3::Zero();
      Color col{180, 180, 180};
      for (const auto &p : e.properties) {
        if (p.count_type.empty()) {
          std::size_t sz = detail::ply_type_size(p.type);
          need(sz);
          double v = detail::ply_read_scalar(cursor, p.type);
          cursor += sz;
          if (is_vertex) {
            if (p.name == "x") pos.x() = v;
            if (p.name == "y") pos.y() = v;
            if (p.name == "z") pos.z() = v;
            if (p.name == "red") col[0] = static_cast<std::uint8_t>(v);
            if (p.name == "green") col[1] = static_cast<std::uint8_t>(v);
            if (p.name == "blue") col[2] = static_cast<std::uint8_t>(v);
          }
        } else {
          std::size_t csz = detail::ply_type_size(p.count_type);
          need(csz);
          auto count = static_cast<std::size_t>(
              detail::ply_read_scalar(cursor, p.count_type));
          cursor += csz;
          std::size_t isz = detail::ply_type_size(p.type);
          need(count * isz);
          std::vector<std::int64_t> poly;
          for (std::size_t k = 0; k < count; ++k) {
            poly.push_back(static_cast<std::int64_t>(
                detail::ply_read_scalar(cursor, p.type)));
            cursor += isz;
          }
          if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index"))
            detail::fan_triangulate(poly, mesh.vertices.size(), mesh.faces);
        }
      }
      if (is_vertex) {
        mesh.vertices.push_back(pos);
        if (has_color) mesh.colors.push_back(col);
      }
    }
  }
  mesh.validate();
  return mesh;
}

inline void write_ply(const TriangleMesh &mesh,
                      const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path.string());
  bool colors = !mesh.colors.empty();
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (colors)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      auto f = static_cast<float>(mesh.vertices[i][k]);
      out.write(reinterpret_cast<const char *>(&f), sizeof f);
    }
    if (colors)
      out.write(reinterpret_cast<const char *>(mesh.colors[i].data()), 3);
  }
  for (const auto &face : mesh.faces) {
    std::uint8_t n = 3;
    out.write(reinterpret_cast<const char *>(&n), 1);
    for (auto idx : face) {
      auto v = static_cast<std::int32_t>(idx);
      out.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
  }
}

inline TriangleMesh read_mesh(const std::filesystem::path &path) {
  auto ext = path.extension().string();
  for (auto &c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".obj") return read_obj(path);
  if (ext == ".ply") return read_ply(path);
  throw Error("unsupported mesh format: " + path.string());
}

inline PointCloud read_xyz(const std::filesystem::path &path) {
  std::istringstream in(detail::read_text(path));
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw Error("malformed point at line " + std::to_string(line_no));
    cloud.points.emplace_back(x, y, z);
  }
  cloud.validate();
  return cloud;
}

inline void write_xyz(const PointCloud &cloud,
                      const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path.string());
  out.precision(17);
  for (const auto &p : cloud.points)
    out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

inline PointCloud read_point_cloud(const std::filesystem::path &path) {
  auto ext = path.extension().string();
  for (auto &c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".ply") return PointCloud(read_ply(path).vertices);
  return read_xyz(path);
}

}  // namespace lift3d::io
