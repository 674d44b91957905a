// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dpid {

struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t count() const { return channels * height * width; }
  std::size_t spatial() const { return height * width; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

/// Dense channels x height x width grid, channel-major. Holds latents,
/// noise draws, denoiser outputs and per-pixel information maps.
class LatentField {
 public:
  LatentField() = default;
  explicit LatentField(Shape shape, double fill = 0.0);
  /// Throws ShapeError if values.size() != shape.count() and DomainError on
  /// non-finite entries.
  LatentField(Shape shape, std::vector<double> values);

  static LatentField scalar(double v) { return LatentField(Shape{1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_.height + y) * shape_.width + x];
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double mean() const;
  bool all_finite() const;

  bool operator==(const LatentField&) const = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

/// Throws ShapeError naming `what` when the shapes differ.
void require_same_shape(const LatentField& a, const LatentField& b, const std::string& what);

}  // namespace dpid
