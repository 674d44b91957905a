// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference computations for 1-D Gaussian mixtures, written independently of
// the library's mixture code.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

struct Comp1d {
  double weight;
  double mean;
  double sd;
};

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// Mixture density restricted to the components in `idx`, renormalized.
inline double mixture_pdf(double x, const std::vector<Comp1d>& comps, const std::vector<int>& idx) {
  double num = 0.0, mass = 0.0;
  for (int k : idx) {
    num += comps[k].weight * normal_pdf(x, comps[k].mean, comps[k].sd);
    mass += comps[k].weight;
  }
  return num / mass;
}

inline std::vector<int> all_of(const std::vector<Comp1d>& comps) {
  std::vector<int> idx(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) idx[k] = static_cast<int>(k);
  return idx;
}

/// log p(x | idx) - log p(x).
inline double pmi(double x, const std::vector<Comp1d>& comps, const std::vector<int>& idx) {
  return std::log(mixture_pdf(x, comps, idx)) - std::log(mixture_pdf(x, comps, all_of(comps)));
}

/// I(X; Y) with Y the component label, by composite Simpson on [lo, hi].
inline double label_mi(const std::vector<Comp1d>& comps, double lo = -12.0, double hi = 12.0,
                       int intervals = 24000) {
  const double h = (hi - lo) / intervals;
  double total = 0.0;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::vector<int> only{static_cast<int>(k)};
    double s = 0.0;
    for (int i = 0; i <= intervals; ++i) {
      const double x = lo + h * i;
      const double p = normal_pdf(x, comps[k].mean, comps[k].sd);
      const double f = p > 0.0 ? p * pmi(x, comps, only) : 0.0;
      s += f * (i == 0 || i == intervals ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    total += comps[k].weight * s * h / 3.0;
  }
  return total;
}

}  // namespace oracle
