// SPDX-License-Identifier: Apache-2.0
#pragma once

// Heatmap post-processing: upsampling, thresholded masks, the intersection
// baseline, dataset normalization and rendering.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpid/latent_field.hpp"

namespace dpid {

enum class RenderMode { kSigned, kClamped };

struct HeatmapMeta {
  std::string term;    ///< r, u1, u2, s, mi, cmi, ...
  std::string prompt;
  bool clamped = false;
};

/// Single-channel height x width map, row-major.
class Heatmap {
 public:
  Heatmap(std::size_t height, std::size_t width, std::vector<double> values, HeatmapMeta meta = {});
  /// Takes one channel of a field (the (1, h, w) maps produced by the estimator).
  static Heatmap from_field(const LatentField& field, HeatmapMeta meta = {}, std::size_t channel = 0);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  const std::vector<double>& values() const { return values_; }
  const HeatmapMeta& meta() const { return meta_; }
  HeatmapMeta& meta() { return meta_; }

 private:
  std::size_t height_, width_;
  std::vector<double> values_;
  HeatmapMeta meta_;
};

/// Corner-aligned bilinear interpolation. Throws PreconditionError when a
/// target dimension is zero or smaller than the source.
Heatmap bilinear_upsample(const Heatmap& map, std::size_t target_h, std::size_t target_w);

/// mask[i] = map[i] > mean + k * stddev (population stddev, strict).
std::vector<bool> threshold_mask(const Heatmap& map, double k = 1.5);

/// f = (m1 * im + m2 * im) / 2 with im the product of both threshold masks.
Heatmap intersection_baseline(const Heatmap& m1, const Heatmap& m2, double k = 1.5);

/// Min-max to [0, 1]; a constant list maps to all zeros.
std::vector<double> normalize_dataset(const std::vector<double>& values);

struct Rendered {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> gray;
};

/// Signed: [min, max] -> [0, 255]. Clamped: negatives -> 0, then [0, max].
/// A map with no spread renders as zeros.
Rendered render(const Heatmap& map, RenderMode mode);

nlohmann::json sidecar_json(const Heatmap& map);

/// Writes <stem>.pfm (raw floats), <stem>.pgm (preview) and <stem>.json.
void export_heatmap(const std::string& stem, const Heatmap& map, RenderMode mode);

/// Lowercase alphanumerics, everything else collapsed to '-'.
std::string slugify(const std::string& text);

}  // namespace dpid
