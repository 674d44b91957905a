// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "dpid/condition.hpp"
#include "dpid/diffusion_process.hpp"
#include "dpid/latent_field.hpp"

namespace dpid {

/// Noise predictor eps_hat(x_alpha | condition). Implementations are
/// read-only after construction and safe to call from several threads.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual LatentField predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                                  const DenoiserCondition& condition) const = 0;

  /// Several conditions on the same noisy input. The default loops; remote
  /// implementations batch.
  virtual std::vector<LatentField> predict_eps_many(const LatentField& x_alpha,
                                                    const LogSnrPoint& point,
                                                    std::span<const DenoiserCondition> conditions) const;
};

/// Adds a constant to every prediction of the wrapped denoiser. Only useful
/// as a negative control.
class OffsetDenoiser : public Denoiser {
 public:
  OffsetDenoiser(const Denoiser& inner, double offset) : inner_(inner), offset_(offset) {}

  LatentField predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                          const DenoiserCondition& condition) const override;

 private:
  const Denoiser& inner_;
  double offset_;
};

}  // namespace dpid
