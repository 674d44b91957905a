// SPDX-License-Identifier: Apache-2.0
#pragma once

// Seed derivation: every (purpose, index...) path hashes to its own engine
// seed, so a draw depends only on its coordinates and never on how work is
// partitioned across threads.

#include <cstdint>
#include <initializer_list>
#include <random>

#include "dpid/latent_field.hpp"

namespace dpid {

enum class StreamTag : std::uint64_t {
  kAlpha = 1,
  kEps = 2,
  kData = 3,
  kTraining = 4,
  kInit = 5,
  kIntervention = 6,
};

std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag,
                          std::initializer_list<std::uint64_t> path = {});

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> path = {})
      : engine_(derive_seed(seed, tag, path)) {}

  /// Uniform on the open interval (0, 1).
  double uniform_open();
  double normal() { return normal_(engine_); }
  /// Index in [0, n).
  std::size_t index(std::size_t n);

  LatentField normal_field(const Shape& shape);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dpid
