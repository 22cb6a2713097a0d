#pragma once

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lift3d/error.hpp"
#include "lift3d/image.hpp"

namespace lift3d::io {

namespace detail {

inline std::string read_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_bytes(const std::filesystem::path &path, const void *data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(static_cast<const char *>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error("write failed for " + path.string());
}

// Decodes any PNG into 8-bit pixels of the requested format.
inline std::vector<std::uint8_t> png_decode(const std::filesystem::path &path, png_uint_32 format,
                                            int &width, int &height) {
  std::string data = read_bytes(path);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size()))
    throw Error("invalid PNG " + path.string() + ": " + image.message);
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return pixels;
}

inline void png_encode(const std::filesystem::path &path, png_uint_32 format, int width,
                       int height, const std::uint8_t *pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.format = format;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, pixels, 0, nullptr))
    throw Error("cannot encode PNG: " + std::string(image.message));
  std::vector<std::uint8_t> buffer(size);
  if (!png_image_write_to_memory(&image, buffer.data(), &size, 0, pixels, 0, nullptr))
    throw Error("cannot encode PNG: " + std::string(image.message));
  write_bytes(path, buffer.data(), size);
}

inline bool has_extension(const std::filesystem::path &path, const char *ext) {
  std::string e = path.extension().string();
  for (auto &c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Color images

inline RgbImage read_rgb_png(const std::filesystem::path &path) {
  int w = 0, h = 0;
  auto bytes = detail::png_decode(path, PNG_FORMAT_RGB, w, h);
  RgbImage img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = {bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]};
  return img;
}

inline void write_rgb_png(const RgbImage &img, const std::filesystem::path &path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(img.pixels.size() * 3);
  for (const auto &c : img.pixels) bytes.insert(bytes.end(), c.begin(), c.end());
  detail::png_encode(path, PNG_FORMAT_RGB, img.width, img.height, bytes.data());
}

// ---------------------------------------------------------------------------
// Masks: 8-bit grayscale PNG or ASCII PGM, nonzero is true.

inline BinaryMask read_mask_png(const std::filesystem::path &path) {
  int w = 0, h = 0;
  auto bytes = detail::png_decode(path, PNG_FORMAT_GRAY, w, h);
  BinaryMask m(w, h);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = bytes[i] != 0;
  return m;
}

inline void write_mask_png(const BinaryMask &mask, const std::filesystem::path &path) {
  std::vector<std::uint8_t> bytes(mask.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.pixels[i] ? 255 : 0;
  detail::png_encode(path, PNG_FORMAT_GRAY, mask.width, mask.height, bytes.data());
}

inline BinaryMask read_mask_pgm(const std::filesystem::path &path) {
  std::istringstream in(detail::read_bytes(path));
  auto next = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(in, rest);
    }
    throw Error("truncated PGM " + path.string());
  };
  if (next() != "P2") throw Error("not an ASCII PGM (P2): " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next());
    h = std::stoi(next());
    maxval = std::stoi(next());
  } catch (const std::logic_error &) {
    throw Error("malformed PGM header in " + path.string());
  }
  if (w < 1 || h < 1 || maxval < 1) throw Error("invalid PGM dimensions in " + path.string());
  BinaryMask m(w, h);
  for (auto &p : m.pixels) {
    long v = 0;
    try {
      v = std::stol(next());
    } catch (const std::logic_error &) {
      throw Error("malformed PGM pixel in " + path.string());
    }
    if (v < 0 || v > maxval) throw Error("PGM pixel out of range in " + path.string());
    p = v != 0;
  }
  return m;
}

inline void write_mask_pgm(const BinaryMask &mask, const std::filesystem::path &path) {
  std::ostringstream out;
  out << "P2\n" << mask.width << ' ' << mask.height << "\n1\n";
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) out << (x ? " " : "") << int(mask(x, y) != 0);
    out << '\n';
  }
  std::string s = out.str();
  detail::write_bytes(path, s.data(), s.size());
}

inline BinaryMask read_mask(const std::filesystem::path &path) {
  if (detail::has_extension(path, ".pgm")) return read_mask_pgm(path);
  return read_mask_png(path);
}

inline void write_mask(const BinaryMask &mask, const std::filesystem::path &path) {
  if (detail::has_extension(path, ".pgm"))
    write_mask_pgm(mask, path);
  else
    write_mask_png(mask, path);
}

// ---------------------------------------------------------------------------
// Pointmaps: text header "width height 3\n", then row-major little-endian
// float32 xyz triplets; invalid pixels are NaN.

inline void write_pointmap(const Pointmap &pm, const std::filesystem::path &path) {
  std::string out = std::to_string(pm.width) + " " + std::to_string(pm.height) + " 3\n";
  std::size_t header = out.size();
  out.resize(header + std::size_t(pm.width) * std::size_t(pm.height) * 12);
  char *cursor = out.data() + header;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (int y = 0; y < pm.height; ++y)
    for (int x = 0; x < pm.width; ++x) {
      bool valid = pm.is_valid(x, y);
      for (int k = 0; k < 3; ++k) {
        float v = valid ? static_cast<float>(pm.at(x, y)[k]) : nan;
        std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b) *cursor++ = static_cast<char>((bits >> (8 * b)) & 0xff);
      }
    }
  detail::write_bytes(path, out.data(), out.size());
}

inline Pointmap read_pointmap(const std::filesystem::path &path) {
  std::string data = detail::read_bytes(path);
  std::size_t eol = data.find('\n');
  if (eol == std::string::npos) throw Error("pointmap header missing in " + path.string());
  std::istringstream header(data.substr(0, eol));
  int w = 0, h = 0, c = 0;
  std::string extra;
  if (!(header >> w >> h >> c) || (header >> extra) || c != 3 || w < 1 || h < 1)
    throw Error("pointmap header must read \"width height 3\" in " + path.string());
  std::size_t need = std::size_t(w) * std::size_t(h) * 12;
  if (data.size() - eol - 1 != need)
    throw Error("pointmap payload size mismatch in " + path.string());
  Pointmap pm(w, h);
  const auto *cursor = reinterpret_cast<const unsigned char *>(data.data() + eol + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t(*cursor++) << (8 * b);
        p[k] = static_cast<double>(std::bit_cast<float>(bits));
      }
      if (all_finite(p) && p.z() > 0.0) pm.set(x, y, p);
    }
  return pm;
}

}  // namespace lift3d::io
