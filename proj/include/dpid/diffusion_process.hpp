// SPDX-License-Identifier: Apache-2.0
#pragma once

// Forward noising x_alpha = sqrt(sigmoid(alpha)) x + sqrt(sigmoid(-alpha)) eps,
// parameterised by the log signal-to-noise ratio alpha, and the truncated
// logistic proposal used to integrate over alpha.

#include <cstdint>
#include <vector>

#include "dpid/latent_field.hpp"

namespace dpid {

double sigmoid(double z);
double logit(double p);

struct LogSnrPoint {
  double alpha = 0.0;
  double signal = 0.0;  ///< a = sqrt(sigmoid(alpha))
  double noise = 0.0;   ///< b = sqrt(sigmoid(-alpha))

  /// Throws DomainError for non-finite alpha.
  static LogSnrPoint at(double alpha);
};

struct LogSnrSampler {
  double location = 0.0;
  double scale = 2.0;
  double lower = -12.0;
  double upper = 12.0;

  /// Throws PreconditionError on scale <= 0 or lower >= upper.
  void validate() const;

  double cdf(double alpha) const;      ///< truncated CDF
  double density(double alpha) const;  ///< truncated density q(alpha), 0 outside the bounds
  double quantile(double u) const;     ///< inverse of cdf on (0, 1)
};

/// Inverse CDF of the logistic(location, scale) truncated to [lower, upper].
/// Throws DomainError unless 0 < u < 1.
double logistic_quantile(double u, double location, double scale, double lower, double upper);

struct WeightedLogSnr {
  LogSnrPoint point;
  double weight = 0.0;  ///< 1 / (count * q(alpha))
};

/// `count` i.i.d. draws by inverse CDF; draw j depends only on (seed, j).
std::vector<WeightedLogSnr> sample_log_snr(const LogSnrSampler& sampler, std::uint64_t seed,
                                           std::size_t count);

/// a*x + b*eps element-wise.
LatentField forward_perturb(const LatentField& x, const LogSnrPoint& point, const LatentField& eps);

}  // namespace dpid
