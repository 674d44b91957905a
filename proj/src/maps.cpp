// SPDX-License-Identifier: Apache-2.0
#include "dpid/maps.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "dpid/error.hpp"
#include "dpid/image_io.hpp"

namespace dpid {

Heatmap::Heatmap(std::size_t height, std::size_t width, std::vector<double> values, HeatmapMeta meta)
    : height_(height), width_(width), values_(std::move(values)), meta_(std::move(meta)) {
  if (height == 0 || width == 0) throw ShapeError("heatmap: zero-sized");
  if (values_.size() != height * width) throw ShapeError("heatmap: value count does not match dimensions");
  for (double v : values_) {
    if (!std::isfinite(v)) throw DomainError("heatmap: non-finite value");
  }
}

Heatmap Heatmap::from_field(const LatentField& field, HeatmapMeta meta, std::size_t channel) {
  const Shape& s = field.shape();
  if (channel >= s.channels) throw ShapeError("heatmap: channel out of range");
  std::vector<double> v(field.values().begin() + static_cast<std::ptrdiff_t>(channel * s.spatial()),
                        field.values().begin() + static_cast<std::ptrdiff_t>((channel + 1) * s.spatial()));
  return Heatmap(s.height, s.width, std::move(v), std::move(meta));
}

Heatmap bilinear_upsample(const Heatmap& map, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw PreconditionError("upsample: zero-sized target");
  if (target_h < map.height() || target_w < map.width()) {
    throw PreconditionError("upsample: target smaller than source");
  }
  // Corner-aligned: output corners coincide with input corners.
  auto coord = [](std::size_t i, std::size_t out, std::size_t in) {
    return out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  std::vector<double> out(target_h * target_w);
  for (std::size_t y = 0; y < target_h; ++y) {
    const double sy = coord(y, target_h, map.height());
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), map.height() - 1);
    const std::size_t y1 = std::min(y0 + 1, map.height() - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_w; ++x) {
      const double sx = coord(x, target_w, map.width());
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), map.width() - 1);
      const std::size_t x1 = std::min(x0 + 1, map.width() - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = (1.0 - fx) * map.at(y0, x0) + fx * map.at(y0, x1);
      const double bottom = (1.0 - fx) * map.at(y1, x0) + fx * map.at(y1, x1);
      out[y * target_w + x] = (1.0 - fy) * top + fy * bottom;
    }
  }
  return Heatmap(target_h, target_w, std::move(out), map.meta());
}

std::vector<bool> threshold_mask(const Heatmap& map, double k) {
  const auto& v = map.values();
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double threshold = mean + k * std::sqrt(var / n);
  std::vector<bool> mask(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mask[i] = v[i] > threshold;
  return mask;
}

Heatmap intersection_baseline(const Heatmap& m1, const Heatmap& m2, double k) {
  if (m1.height() != m2.height() || m1.width() != m2.width()) {
    throw ShapeError("intersection_baseline: maps differ in shape");
  }
  const auto mask1 = threshold_mask(m1, k);
  const auto mask2 = threshold_mask(m2, k);
  std::vector<double> f(m1.values().size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double im = (mask1[i] && mask2[i]) ? 1.0 : 0.0;
    f[i] = (m1.values()[i] * im + m2.values()[i] * im) / 2.0;
  }
  HeatmapMeta meta = m1.meta();
  meta.term = "intersection";
  return Heatmap(m1.height(), m1.width(), std::move(f), std::move(meta));
}

std::vector<double> normalize_dataset(const std::vector<double>& values) {
  if (values.empty()) throw PreconditionError("normalize_dataset: empty list");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo, span = *hi - *lo;
  std::vector<double> out(values.size(), 0.0);
  if (span > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - min) / span;
  }
  return out;
}

Rendered render(const Heatmap& map, RenderMode mode) {
  Rendered r{map.height(), map.width(), std::vector<std::uint8_t>(map.values().size(), 0)};
  std::vector<double> v = map.values();
  if (mode == RenderMode::kClamped) {
    for (double& x : v) x = std::max(x, 0.0);
  }
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = mode == RenderMode::kClamped ? 0.0 : *lo_it;
  const double span = *hi_it - lo;
  if (!(span > 0.0)) return r;
  for (std::size_t i = 0; i < v.size(); ++i) {
    r.gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v[i] - lo) / span));
  }
  return r;
}

nlohmann::json sidecar_json(const Heatmap& map) {
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  return {{"term", map.meta().term},
          {"prompt", map.meta().prompt},
          {"clamped", map.meta().clamped},
          {"height", map.height()},
          {"width", map.width()},
          {"min", *lo},
          {"max", *hi}};
}

void export_heatmap(const std::string& stem, const Heatmap& map, RenderMode mode) {
  FloatImage img{map.width(), map.height(), {}};
  img.pixels.reserve(map.values().size());
  for (double v : map.values()) img.pixels.push_back(static_cast<float>(v));
  write_pfm(stem + ".pfm", img);
  const Rendered r = render(map, mode);
  write_pgm(stem + ".pgm", r.width, r.height, r.gray);
  Heatmap tagged = map;
  tagged.meta().clamped = mode == RenderMode::kClamped;
  std::ofstream meta(stem + ".json");
  if (!meta) throw IoError("cannot write " + stem + ".json");
  meta << sidecar_json(tagged).dump(2) << '\n';
}

std::string slugify(const std::string& text) {
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      out += static_cast<char>(std::tolower(c));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "none" : out;
}

}  // namespace dpid
