// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpid {

/// Grayscale float image in PFM row order: row 0 is the TOP row in memory,
/// the writer flips to the bottom-up file layout.
struct FloatImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;
};

/// "Pf" header, little-endian (scale -1.0).
void write_pfm(const std::string& path, const FloatImage& image);
FloatImage read_pfm(const std::string& path);

/// Binary 8-bit "P5".
void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels);

}  // namespace dpid
