// SPDX-License-Identifier: Apache-2.0
#include "dpid/image_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dpid/error.hpp"

namespace dpid {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

void write_pfm(const std::string& path, const FloatImage& image) {
  if (image.pixels.size() != image.width * image.height) throw ShapeError("pfm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "Pf\n" << image.width << ' ' << image.height << "\n-1.0\n";
  for (std::size_t row = image.height; row-- > 0;) {
    for (std::size_t col = 0; col < image.width; ++col) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(image.pixels[row * image.width + col]);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

FloatImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  FloatImage image;
  double scale = 0.0;
  in >> magic >> image.width >> image.height >> scale;
  if (!in || magic != "Pf") throw IoError(path + ": not a grayscale PFM");
  if (scale == 0.0 || !std::isfinite(scale)) throw IoError(path + ": bad PFM scale");
  in.get();  // single whitespace byte before the raster
  const bool little = scale < 0.0;
  image.pixels.resize(image.width * image.height);
  for (std::size_t row = image.height; row-- > 0;) {
    for (std::size_t col = 0; col < image.width; ++col) {
      std::uint32_t bits = 0;
      in.read(reinterpret_cast<char*>(&bits), 4);
      if (little != (std::endian::native == std::endian::little)) bits = byteswap32(bits);
      image.pixels[row * image.width + col] = std::bit_cast<float>(bits);
    }
  }
  if (!in) throw IoError(path + ": truncated PFM raster");
  return image;
}

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height) throw ShapeError("pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace dpid
