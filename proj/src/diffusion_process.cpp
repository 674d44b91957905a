// SPDX-License-Identifier: Apache-2.0
#include "dpid/diffusion_process.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpid/error.hpp"
#include "dpid/rng.hpp"

namespace dpid {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

LogSnrPoint LogSnrPoint::at(double alpha) {
  if (!std::isfinite(alpha)) throw DomainError("log-SNR must be finite");
  return {alpha, std::sqrt(sigmoid(alpha)), std::sqrt(sigmoid(-alpha))};
}

void LogSnrSampler::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw PreconditionError("sampler: scale must be positive");
  if (!std::isfinite(location) || !std::isfinite(lower) || !std::isfinite(upper)) {
    throw PreconditionError("sampler: non-finite parameter");
  }
  if (!(lower < upper)) {
    throw PreconditionError("sampler: degenerate truncation [" + std::to_string(lower) + ", " +
                            std::to_string(upper) + "]");
  }
}

double LogSnrSampler::cdf(double alpha) const {
  if (alpha <= lower) return 0.0;
  if (alpha >= upper) return 1.0;
  const double fl = sigmoid((lower - location) / scale);
  const double fu = sigmoid((upper - location) / scale);
  return (sigmoid((alpha - location) / scale) - fl) / (fu - fl);
}

double LogSnrSampler::density(double alpha) const {
  if (alpha < lower || alpha > upper) return 0.0;
  const double z = (alpha - location) / scale;
  const double mass = sigmoid((upper - location) / scale) - sigmoid((lower - location) / scale);
  return sigmoid(z) * sigmoid(-z) / (scale * mass);
}

double LogSnrSampler::quantile(double u) const {
  return logistic_quantile(u, location, scale, lower, upper);
}

double logistic_quantile(double u, double location, double scale, double lower, double upper) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("logistic_quantile: u must lie in (0, 1)");
  LogSnrSampler{location, scale, lower, upper}.validate();
  const double fl = sigmoid((lower - location) / scale);
  const double fu = sigmoid((upper - location) / scale);
  const double alpha = location + scale * logit(fl + u * (fu - fl));
  return std::clamp(alpha, lower, upper);
}

std::vector<WeightedLogSnr> sample_log_snr(const LogSnrSampler& sampler, std::uint64_t seed,
                                           std::size_t count) {
  sampler.validate();
  if (count == 0) throw PreconditionError("sample_log_snr: count must be >= 1");
  std::vector<WeightedLogSnr> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    RandomStream stream(seed, StreamTag::kAlpha, {j});
    const double alpha = sampler.quantile(stream.uniform_open());
    out.push_back({LogSnrPoint::at(alpha),
                   1.0 / (static_cast<double>(count) * sampler.density(alpha))});
  }
  return out;
}

LatentField forward_perturb(const LatentField& x, const LogSnrPoint& point, const LatentField& eps) {
  require_same_shape(x, eps, "forward_perturb: eps");
  LatentField out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = point.signal * x[i] + point.noise * eps[i];
  return out;
}

}  // namespace dpid
