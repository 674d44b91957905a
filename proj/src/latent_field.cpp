// SPDX-License-Identifier: Apache-2.0
#include "dpid/latent_field.hpp"

#include <cmath>
#include <numeric>

#include "dpid/error.hpp"

namespace dpid {

std::string to_string(const Shape& shape) {
  return "(" + std::to_string(shape.channels) + ", " + std::to_string(shape.height) + ", " +
         std::to_string(shape.width) + ")";
}

LatentField::LatentField(Shape shape, double fill) : shape_(shape), values_(shape.count(), fill) {
  if (shape.count() == 0) throw ShapeError("LatentField: zero-sized shape " + to_string(shape));
}

LatentField::LatentField(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (shape.count() == 0) throw ShapeError("LatentField: zero-sized shape " + to_string(shape));
  if (values_.size() != shape.count()) {
    throw ShapeError("LatentField: " + std::to_string(values_.size()) + " values for shape " +
                     to_string(shape));
  }
  if (!all_finite()) throw DomainError("LatentField: non-finite value");
}

double LatentField::mean() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

bool LatentField::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const LatentField& a, const LatentField& b, const std::string& what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(what + ": shape " + to_string(b.shape()) + " does not match " +
                     to_string(a.shape()));
  }
}

}  // namespace dpid
